//! CSV ingestion into regression datasets.

use std::path::Path;

use anyhow::{bail, Context, Result};
use ndarray::{Array1, Array2};

use grr_core::loss::{Dataset, Standardization};

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub has_header: bool,
    /// Column name (with header) or zero-based index of the response.
    pub response_column: String,
    pub standardize: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            has_header: true,
            response_column: "y".to_string(),
            standardize: false,
        }
    }
}

/// Load a rectangular numeric CSV. Parse failures report the offending
/// row and column.
pub fn load_csv(path: &Path, options: &LoadOptions) -> Result<Dataset<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(options.has_header)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;

    let headers: Vec<String> = if options.has_header {
        reader
            .headers()
            .context("reading header")?
            .iter()
            .map(|h| h.to_string())
            .collect()
    } else {
        Vec::new()
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("reading row {}", i + 1))?;
        let mut row = Vec::with_capacity(record.len());
        for (j, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().with_context(|| {
                format!("row {}, column {}: non-numeric cell '{cell}'", i + 1, j + 1)
            })?;
            row.push(value);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                bail!(
                    "row {} has {} cells but the first row has {}",
                    i + 1,
                    row.len(),
                    first.len()
                );
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    let width = rows[0].len();
    if width < 2 {
        bail!("need at least one covariate and one response column");
    }

    let response_idx = if options.has_header {
        match headers.iter().position(|h| h == &options.response_column) {
            Some(idx) => idx,
            None => options.response_column.parse::<usize>().ok().filter(|&i| i < width).with_context(
                || format!("response column '{}' not found in header", options.response_column),
            )?,
        }
    } else {
        options
            .response_column
            .parse::<usize>()
            .with_context(|| "without a header the response column must be a zero-based index")?
    };
    if response_idx >= width {
        bail!("response column index {response_idx} out of range (width {width})");
    }

    let n = rows.len();
    let p = width - 1;
    let mut x = Array2::zeros((n, p));
    let mut y = Array1::zeros(n);
    for (i, row) in rows.iter().enumerate() {
        let mut k = 0;
        for (j, &v) in row.iter().enumerate() {
            if j == response_idx {
                y[i] = v;
            } else {
                x[(i, k)] = v;
                k += 1;
            }
        }
    }

    let standardization = if options.standardize {
        Some(standardize_in_place(&mut x, &mut y)?)
    } else {
        None
    };
    Ok(Dataset::with_standardization(x, y, standardization)?)
}

fn standardize_in_place(x: &mut Array2<f64>, y: &mut Array1<f64>) -> Result<Standardization<f64>> {
    let n = x.nrows() as f64;
    let mut x_means = Vec::with_capacity(x.ncols());
    let mut x_scales = Vec::with_capacity(x.ncols());
    for j in 0..x.ncols() {
        let mean = x.column(j).sum() / n;
        let var = x.column(j).iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        if var <= 0.0 {
            bail!("covariate column {j} is constant; cannot standardize");
        }
        let scale = var.sqrt();
        for i in 0..x.nrows() {
            x[(i, j)] = (x[(i, j)] - mean) / scale;
        }
        x_means.push(mean);
        x_scales.push(scale);
    }
    let y_mean = y.sum() / n;
    let y_var = y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum::<f64>() / (n - 1.0);
    if y_var <= 0.0 {
        bail!("response is constant; cannot standardize");
    }
    let y_scale = y_var.sqrt();
    for v in y.iter_mut() {
        *v = (*v - y_mean) / y_scale;
    }
    Ok(Standardization {
        x_means,
        x_scales,
        y_mean,
        y_scale,
    })
}

/// Map standardized-scale coefficients back to the original data scale.
pub fn destandardize_coefficients(beta: &[f64], s: &Standardization<f64>) -> Vec<f64> {
    beta.iter()
        .zip(&s.x_scales)
        .map(|(b, xs)| b * s.y_scale / xs)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_basic_csv() {
        let f = write_temp("x1,y\n1.0,2.0\n2.0,3.0\n3.0,4.0\n");
        let data = load_csv(f.path(), &LoadOptions::default()).unwrap();
        assert_eq!(data.n(), 3);
        assert_eq!(data.p(), 1);
        assert_eq!(data.y().to_vec(), vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn standardizes_columns() {
        let f = write_temp("a,b,y\n1,10,5\n2,20,7\n3,30,9\n4,40,11\n");
        let mut opts = LoadOptions::default();
        opts.standardize = true;
        let data = load_csv(f.path(), &opts).unwrap();
        for j in 0..2 {
            let mean = data.x().column(j).sum() / 4.0;
            let var = data
                .x()
                .column(j)
                .iter()
                .map(|v| (v - mean) * (v - mean))
                .sum::<f64>()
                / 3.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-12);
        }
        let s = data.standardization().unwrap();
        let back = destandardize_coefficients(&[1.0, 1.0], s);
        assert!((back[0] - s.y_scale / s.x_scales[0]).abs() < 1e-12);
    }

    #[test]
    fn reports_parse_errors_with_location() {
        let f = write_temp("x,y\n1.0,2.0\n1.0,oops\n");
        let err = load_csv(f.path(), &LoadOptions::default())
            .unwrap_err()
            .to_string();
        assert!(err.contains("row 2"), "{err}");

        let empty = write_temp("");
        assert!(load_csv(empty.path(), &LoadOptions::default()).is_err());

        let ragged = write_temp("x,z,y\n1,2,3\n1,2\n");
        assert!(load_csv(ragged.path(), &LoadOptions::default()).is_err());
    }

    #[test]
    fn headerless_uses_indices() {
        let f = write_temp("1.0,2.0\n2.0,4.0\n");
        let mut opts = LoadOptions::default();
        opts.has_header = false;
        opts.response_column = "1".into();
        let data = load_csv(f.path(), &opts).unwrap();
        assert_eq!(data.y().to_vec(), vec![2.0, 4.0]);
    }
}
