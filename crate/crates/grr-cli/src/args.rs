//! Flag-value parsers shared by the subcommands.

use anyhow::{anyhow, bail, Context, Result};
use ndarray::{Array1, Array2};

use grr_core::linalg::ar1_matrix;
use grr_core::noise::NoiseDensity;
use grr_core::score::{optimal_generator, ScoreGenerator};
use grr_core::sim::NoiseModel;

/// Score specification: built-in families, oracle-optimal scores for a
/// named noise density, or data-estimated scores.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScoreSpec {
    Wilcoxon,
    Sign,
    SingleLevel(String),
    Sinusoidal,
    Optimal(NoiseModel),
    OptimalEstimated,
}

impl ScoreSpec {
    pub fn parse(s: &str) -> Result<Self> {
        if let Some(tau) = s.strip_prefix("single-level:") {
            return Ok(ScoreSpec::SingleLevel(tau.to_string()));
        }
        if let Some(density) = s.strip_prefix("optimal:") {
            return Ok(ScoreSpec::Optimal(NoiseModel::parse(density)?));
        }
        match s {
            "wilcoxon" => Ok(ScoreSpec::Wilcoxon),
            "sign" => Ok(ScoreSpec::Sign),
            "sinusoidal" => Ok(ScoreSpec::Sinusoidal),
            "optimal-est" => Ok(ScoreSpec::OptimalEstimated),
            other => bail!(
                "unknown score '{other}' (expected wilcoxon | sign | single-level:<tau> | \
                 sinusoidal | optimal:<density> | optimal-est)"
            ),
        }
    }

    /// Build the generator; `optimal-est` has no closed form and must be
    /// produced from residuals by the caller.
    pub fn generator(&self) -> Result<ScoreGenerator<f64>> {
        match self {
            ScoreSpec::Wilcoxon => Ok(ScoreGenerator::wilcoxon()),
            ScoreSpec::Sign => Ok(ScoreGenerator::sign()),
            ScoreSpec::SingleLevel(tau) => {
                let tau: f64 = tau
                    .parse()
                    .with_context(|| format!("invalid single-level tau '{tau}'"))?;
                Ok(ScoreGenerator::single_level(tau)?)
            }
            ScoreSpec::Sinusoidal => Ok(ScoreGenerator::sinusoidal()),
            ScoreSpec::Optimal(model) => {
                let density = model.density::<f64>();
                Ok(optimal_generator(density.as_ref())?)
            }
            ScoreSpec::OptimalEstimated => {
                bail!("optimal-est requires data; supported by `fit` and `bootstrap` only")
            }
        }
    }
}

/// Parse `identity` or `ar:<rho>` into a p x p matrix.
pub fn parse_sigma(spec: &str, p: usize) -> Result<Array2<f64>> {
    if spec == "identity" {
        return Ok(Array2::eye(p));
    }
    if let Some(rho) = spec.strip_prefix("ar:") {
        let rho: f64 = rho.parse().with_context(|| format!("invalid rho '{rho}'"))?;
        if rho.abs() >= 1.0 {
            bail!("ar rho must satisfy |rho| < 1");
        }
        return Ok(ar1_matrix(p, rho));
    }
    bail!("unknown sigma spec '{spec}' (expected identity | ar:<rho>)")
}

/// Parse `e<k>` (unit vector) or a comma list of coordinates.
pub fn parse_direction(spec: &str, p: usize) -> Result<Array1<f64>> {
    if let Some(k) = spec.strip_prefix('e') {
        if let Ok(k) = k.parse::<usize>() {
            if k == 0 || k > p {
                bail!("unit vector e{k} out of range for p={p}");
            }
            let mut v = Array1::zeros(p);
            v[k - 1] = 1.0;
            return Ok(v);
        }
    }
    let coords: Vec<f64> = spec
        .split(',')
        .map(|c| c.trim().parse::<f64>().map_err(|e| anyhow!("{e}: '{c}'")))
        .collect::<Result<_>>()?;
    if coords.len() != p {
        bail!("direction has {} coordinates but p={p}", coords.len());
    }
    Ok(Array1::from_vec(coords))
}

pub fn parse_usize_list(spec: &str) -> Result<Vec<usize>> {
    spec.split(',')
        .map(|c| {
            c.trim()
                .parse::<usize>()
                .map_err(|e| anyhow!("{e}: '{c}'"))
        })
        .collect()
}

/// Density lookup for `variance` and friends.
pub fn density_for(model: NoiseModel) -> Box<dyn NoiseDensity<f64>> {
    model.density::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_specs_parse() {
        assert_eq!(ScoreSpec::parse("wilcoxon").unwrap(), ScoreSpec::Wilcoxon);
        assert!(matches!(
            ScoreSpec::parse("single-level:0.25").unwrap(),
            ScoreSpec::SingleLevel(_)
        ));
        assert!(matches!(
            ScoreSpec::parse("optimal:cauchy").unwrap(),
            ScoreSpec::Optimal(NoiseModel::Cauchy)
        ));
        assert!(ScoreSpec::parse("nope").is_err());
        assert!(ScoreSpec::parse("optimal:nope").is_err());
        assert!(ScoreSpec::parse("optimal-est").unwrap().generator().is_err());
    }

    #[test]
    fn sigma_and_direction_parse() {
        let eye = parse_sigma("identity", 3).unwrap();
        assert_eq!(eye[(0, 0)], 1.0);
        assert_eq!(eye[(0, 1)], 0.0);
        let ar = parse_sigma("ar:0.5", 2).unwrap();
        assert_eq!(ar[(0, 1)], 0.5);
        assert!(parse_sigma("ar:1.5", 2).is_err());

        let e2 = parse_direction("e2", 3).unwrap();
        assert_eq!(e2.to_vec(), vec![0.0, 1.0, 0.0]);
        let v = parse_direction("1.0,-2.0", 2).unwrap();
        assert_eq!(v.to_vec(), vec![1.0, -2.0]);
        assert!(parse_direction("e9", 3).is_err());
    }
}
