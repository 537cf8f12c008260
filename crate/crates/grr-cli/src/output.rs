//! Output persistence: JSON for structured results, CSV for tables and
//! curves, with overwrite protection.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use crate::manifest::{write_sidecar, RunManifest};

pub fn guard_overwrite(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        bail!(
            "{} already exists; pass --force to overwrite",
            path.display()
        );
    }
    Ok(())
}

/// JSON result with the deterministic manifest embedded and the stamped
/// sidecar written alongside.
pub fn save_json<T: Serialize>(
    value: &T,
    manifest: &RunManifest,
    path: &Path,
    force: bool,
) -> Result<()> {
    guard_overwrite(path, force)?;
    #[derive(Serialize)]
    struct Envelope<'a, T> {
        manifest: RunManifest,
        #[serde(flatten)]
        value: &'a T,
    }
    let envelope = Envelope {
        manifest: manifest.deterministic(),
        value,
    };
    let json = serde_json::to_string_pretty(&envelope)?;
    fs::write(path, json).with_context(|| format!("writing {}", path.display()))?;
    write_sidecar(manifest, path, force)?;
    Ok(())
}

/// CSV rows with the stamped manifest sidecar.
pub fn save_csv(
    header: &[&str],
    rows: &[Vec<String>],
    manifest: &RunManifest,
    path: &Path,
    force: bool,
) -> Result<()> {
    guard_overwrite(path, force)?;
    let mut writer = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(row)?;
    }
    writer.flush()?;
    write_sidecar(manifest, path, force)?;
    Ok(())
}

/// Shortest round-trip float formatting for CSV cells.
pub fn fmt_float(v: f64) -> String {
    serde_json::to_string(&v).unwrap_or_else(|_| v.to_string())
}
