//! Multiplier-bootstrap confidence intervals.
//!
//! Each replicate reruns constant-step subgradient descent on the loss with
//! per-observation weights 1 + e_i, e_i Rademacher, starting from the point
//! estimate. Intervals come from replicate quantiles, either directly
//! (percentile mode) or through the centered differences (centered mode).

use ndarray::Array1;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::float::Float;
use crate::loss::{Dataset, LossWorkspace};
use crate::optim::FitResult;
use crate::score::ScoreTable;

/// Which replicate quantiles become the interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntervalMode {
    /// Interval endpoints are the replicate quantiles themselves.
    Percentile,
    /// Endpoints are the point estimate minus quantiles of the centered
    /// replicate law; this matches the distributional guarantee and is the
    /// default.
    Centered,
}

/// Where each replicate starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReplicateInit {
    /// The two-stage point estimate (default).
    PointEstimate,
    /// The convex-surrogate stage output.
    StageOneBest,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapConfig<F> {
    pub replicates: usize,
    pub iterations: usize,
    /// Constant step for the replicate descent; `None` reuses the point
    /// fit's stage-two step.
    pub step: Option<F>,
    pub alpha: F,
    pub seed: u64,
    pub interval_mode: IntervalMode,
    pub init: ReplicateInit,
}

impl<F: Float> BootstrapConfig<F> {
    pub fn new(replicates: usize, alpha: F, seed: u64) -> Self {
        Self {
            replicates,
            iterations: 150,
            step: None,
            alpha,
            seed,
            interval_mode: IntervalMode::Centered,
            init: ReplicateInit::PointEstimate,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidParameter("need at least one replicate".into()));
        }
        if !(self.alpha > F::zero() && self.alpha < F::one()) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0,1), got {}",
                self.alpha.as_f64()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapResult<F> {
    /// B x p replicate estimates, in replicate order.
    pub replicates: Vec<Vec<F>>,
    /// Per-coordinate (lower, upper).
    pub intervals: Vec<(F, F)>,
    pub center: Vec<F>,
    pub alpha: F,
    pub interval_mode: IntervalMode,
    pub seed: u64,
    pub warnings: Vec<String>,
}

/// Multiplier weights 1 + e_i with Rademacher e_i, so each weight is 0 or 2.
pub fn rademacher_multipliers<F: Float>(n: usize, seed: u64) -> Vec<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| if rng.random::<bool>() { F::cast(2.0) } else { F::zero() })
        .collect()
}

/// Constant-step descent on the weighted loss; ranks always come from the
/// unweighted residuals.
pub fn bootstrap_replicate<F: Float>(
    init: &Array1<F>,
    data: &Dataset<F>,
    table: &ScoreTable<F>,
    multipliers: &[F],
    iterations: usize,
    step: F,
) -> Result<Array1<F>> {
    if multipliers.len() != data.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} multipliers for {} observations",
            multipliers.len(),
            data.n()
        )));
    }
    if table.n() != data.n() || init.len() != data.p() {
        return Err(Error::DimensionMismatch(
            "replicate table or init does not match the data".into(),
        ));
    }
    let cap = F::cast(10.0) * (init.dot(init).sqrt() + F::one());
    let mut workspace = LossWorkspace::new(data.n());
    let mut beta = init.clone();
    for t in 1..=iterations {
        let (_, g) = workspace.loss_and_subgradient(&beta, data, table, Some(multipliers));
        beta = beta - g * step;
        let norm = beta.dot(&beta).sqrt();
        if !norm.is_finite() || norm > cap {
            return Err(Error::Divergence {
                iteration: t,
                norm: norm.as_f64(),
            });
        }
    }
    Ok(beta)
}

/// Empirical quantile with the convention inf{z : P(X <= z) >= q} on B
/// atoms of mass 1/B.
fn empirical_quantile<F: Float>(sorted: &[F], q: F) -> F {
    let b = sorted.len();
    let pos = (q * F::cast_usize(b)).ceil().as_f64() as usize;
    sorted[pos.clamp(1, b) - 1]
}

/// Run the full bootstrap around a fitted point estimate.
pub fn run_bootstrap<F: Float>(
    data: &Dataset<F>,
    table: &ScoreTable<F>,
    point_fit: &FitResult<F>,
    cfg: &BootstrapConfig<F>,
) -> Result<BootstrapResult<F>> {
    cfg.validate()?;
    let init = match cfg.init {
        ReplicateInit::PointEstimate => point_fit.beta_array(),
        ReplicateInit::StageOneBest => point_fit.stage_one_best_array(),
    };
    let center = point_fit.beta_array();
    let step = cfg.step.unwrap_or(point_fit.config.stage_two_step);
    let n = data.n();

    let mut warnings = Vec::new();
    if cfg.replicates < 20 {
        warnings.push(format!(
            "only {} replicates; interval quantiles will be unstable",
            cfg.replicates
        ));
    }

    // replicate seeds are derived by xor so the result is independent of
    // scheduling; collection preserves replicate order
    let replicates: Vec<Vec<F>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|b| {
            let multipliers = rademacher_multipliers::<F>(n, cfg.seed ^ (b as u64));
            bootstrap_replicate(&init, data, table, &multipliers, cfg.iterations, step)
                .map(|beta| beta.to_vec())
        })
        .collect::<Result<Vec<_>>>()?;

    let intervals = intervals_from_replicates(&replicates, &center, cfg.alpha, cfg.interval_mode);

    Ok(BootstrapResult {
        replicates,
        intervals,
        center: center.to_vec(),
        alpha: cfg.alpha,
        interval_mode: cfg.interval_mode,
        seed: cfg.seed,
        warnings,
    })
}

/// Per-coordinate intervals from a replicate matrix.
pub fn intervals_from_replicates<F: Float>(
    replicates: &[Vec<F>],
    center: &Array1<F>,
    alpha: F,
    mode: IntervalMode,
) -> Vec<(F, F)> {
    let p = center.len();
    let half = F::cast(0.5);
    let mut out = Vec::with_capacity(p);
    for l in 0..p {
        let mut column: Vec<F> = replicates.iter().map(|r| r[l]).collect();
        column.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let lo_q = alpha * half;
        let hi_q = F::one() - alpha * half;
        let pair = match mode {
            IntervalMode::Percentile => (
                empirical_quantile(&column, lo_q),
                empirical_quantile(&column, hi_q),
            ),
            IntervalMode::Centered => {
                for v in &mut column {
                    *v -= center[l];
                }
                (
                    center[l] - empirical_quantile(&column, hi_q),
                    center[l] - empirical_quantile(&column, lo_q),
                )
            }
        };
        out.push(pair);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::{fit, stage_two, FitOptions, StageTwoConfig};
    use crate::score::ScoreGenerator;
    use ndarray::Array2;
    use rand_distr::{Distribution, StandardNormal};

    fn toy_data(n: usize, p: usize, seed: u64) -> Dataset<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, p), |_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z
        });
        let beta = Array1::from_elem(p, 1.0);
        let noise = Array1::from_shape_fn(n, |_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z
        });
        let y = x.dot(&beta) + noise;
        Dataset::new(x, y).unwrap()
    }

    #[test]
    fn multipliers_are_reproducible_zero_two_valued_and_centered() {
        let a = rademacher_multipliers::<f64>(1000, 9);
        let b = rademacher_multipliers::<f64>(1000, 9);
        assert_eq!(a, b);
        assert!(a.iter().all(|&v| v == 0.0 || v == 2.0));

        let big = rademacher_multipliers::<f64>(1_000_000, 10);
        let mean: f64 = big.iter().sum::<f64>() / 1e6;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn degenerate_multipliers_recover_known_behaviour() {
        let data = toy_data(40, 2, 1);
        let table = ScoreGenerator::<f64>::wilcoxon().score_table(40).unwrap();
        let init = Array1::from_elem(2, 0.2);

        // all-zero weights: zero gradient, replicate stays at the init
        let zeros = vec![0.0; 40];
        let out = bootstrap_replicate(&init, &data, &table, &zeros, 30, 0.1).unwrap();
        assert_eq!(out, init);

        // unit weights match the unweighted constant-step run
        let ones = vec![1.0; 40];
        let rep = bootstrap_replicate(&init, &data, &table, &ones, 30, 0.05).unwrap();
        let plain = stage_two(&init, &data, &table, &StageTwoConfig::new(30, 0.05)).unwrap();
        for (a, b) in rep.iter().zip(plain.beta.iter()) {
            assert!((a - b).abs() < 1e-14);
        }

        // zero iterations returns the init
        let none = bootstrap_replicate(&init, &data, &table, &ones, 0, 0.05).unwrap();
        assert_eq!(none, init);
    }

    #[test]
    fn quantile_convention_brackets_the_median_at_alpha_half() {
        let sorted = vec![1.0, 2.0, 3.0, 4.0];
        // q = 0.25 -> ceil(1) -> first atom; q = 0.75 -> third atom
        assert_eq!(empirical_quantile(&sorted, 0.25), 1.0);
        assert_eq!(empirical_quantile(&sorted, 0.75), 3.0);
        assert_eq!(empirical_quantile(&sorted, 0.5), 2.0);
        assert_eq!(empirical_quantile(&sorted, 0.999), 4.0);
    }

    #[test]
    fn bootstrap_runs_are_deterministic_and_interval_modes_behave() {
        let data = toy_data(120, 3, 2);
        let gen = ScoreGenerator::<f64>::wilcoxon();
        let point = fit(&data, &gen, &FitOptions::default()).unwrap();
        let table = gen.score_table(120).unwrap();

        let cfg = BootstrapConfig::new(60, 0.1, 77);
        let a = run_bootstrap(&data, &table, &point, &cfg).unwrap();
        let b = run_bootstrap(&data, &table, &point, &cfg).unwrap();
        assert_eq!(a.replicates, b.replicates);
        assert_eq!(a.intervals, b.intervals);

        for &(lo, hi) in &a.intervals {
            assert!(lo <= hi);
        }

        // nesting across confidence levels, both modes
        for mode in [IntervalMode::Percentile, IntervalMode::Centered] {
            let center = point.beta_array();
            let wide = intervals_from_replicates(&a.replicates, &center, 0.05, mode);
            let narrow = intervals_from_replicates(&a.replicates, &center, 0.2, mode);
            for (w, n) in wide.iter().zip(narrow.iter()) {
                assert!(w.0 <= n.0 + 1e-12 && n.1 <= w.1 + 1e-12);
            }
        }
    }

    #[test]
    fn identical_replicates_give_zero_width() {
        let replicates = vec![vec![0.5, -1.0]; 50];
        let center = Array1::from_vec(vec![0.5, -1.0]);
        for mode in [IntervalMode::Percentile, IntervalMode::Centered] {
            for (lo, hi) in intervals_from_replicates(&replicates, &center, 0.05, mode) {
                assert_eq!(lo, hi);
            }
        }
    }

    #[test]
    fn small_replicate_counts_warn() {
        let data = toy_data(50, 2, 3);
        let gen = ScoreGenerator::<f64>::wilcoxon();
        let point = fit(&data, &gen, &FitOptions::default()).unwrap();
        let table = gen.score_table(50).unwrap();
        let res = run_bootstrap(&data, &table, &point, &BootstrapConfig::new(5, 0.05, 1)).unwrap();
        assert_eq!(res.warnings.len(), 1);
        assert!(run_bootstrap(&data, &table, &point, &BootstrapConfig::new(0, 0.05, 1)).is_err());
        assert!(run_bootstrap(&data, &table, &point, &BootstrapConfig::new(10, 1.5, 1)).is_err());
    }
}
