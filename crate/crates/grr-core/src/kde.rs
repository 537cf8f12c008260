//! Data-driven score estimation from regression residuals.
//!
//! Pipeline: interpolated empirical quantiles, a Gaussian kernel density
//! with twice the Silverman rule-of-thumb bandwidth, and a centered
//! difference of the density-quantile composition g(u) = f(F^{-1}(u)) taken
//! over the u-space image of that bandwidth. The negated derivative,
//! normalized, is the estimated optimal score.

use crate::error::{Error, Result};
use crate::float::Float;
use crate::score::{ScoreGenerator, DEFAULT_GRID_SIZE};

#[derive(Debug, Clone)]
pub struct EstimateOptions<F> {
    /// Tabulation resolution of the output generator.
    pub grid_size: usize,
    /// Multiplier applied to the Silverman bandwidth for the derivative
    /// smoothing step.
    pub derivative_bandwidth_factor: F,
    /// Density floor as a fraction of the density peak.
    pub density_floor_ratio: F,
}

impl<F: Float> Default for EstimateOptions<F> {
    fn default() -> Self {
        Self {
            grid_size: DEFAULT_GRID_SIZE,
            derivative_bandwidth_factor: F::cast(2.0),
            density_floor_ratio: F::cast(1e-6),
        }
    }
}

/// Minimum number of residuals accepted by the estimator.
pub const MIN_RESIDUALS: usize = 50;

/// Estimate the optimal score generator from residuals.
pub fn estimate_optimal_generator<F: Float>(
    residuals: &[F],
    options: &EstimateOptions<F>,
) -> Result<ScoreGenerator<F>> {
    let m = residuals.len();
    if m < MIN_RESIDUALS {
        return Err(Error::InsufficientData {
            needed: MIN_RESIDUALS,
            got: m,
        });
    }
    if residuals.iter().any(|r| !r.is_finite()) {
        return Err(Error::InvalidInput("non-finite residual".into()));
    }
    let mut sorted = residuals.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let bandwidth = silverman_bandwidth(&sorted)? * options.derivative_bandwidth_factor;

    let grid_size = options.grid_size.max(64);
    let denom = F::cast_usize(grid_size);
    let half = F::cast(0.5);
    let us: Vec<F> = (1..=grid_size)
        .map(|j| (F::cast_usize(j) - half) / denom)
        .collect();

    // g(u) = KDE density at the interpolated empirical quantile
    let mut g: Vec<F> = us
        .iter()
        .map(|&u| kde_at(&sorted, empirical_quantile(&sorted, u), bandwidth))
        .collect();
    let peak = g.iter().cloned().fold(F::zero(), F::max);
    if peak <= F::zero() {
        return Err(Error::InsufficientData {
            needed: MIN_RESIDUALS,
            got: m,
        });
    }
    let floor = peak * options.density_floor_ratio;
    for v in &mut g {
        *v = v.max(floor);
    }

    // centered differences over the u-image of the bandwidth
    let min_step = F::cast(2.0) / denom;
    let max_step = F::cast(0.25);
    let values: Vec<F> = us
        .iter()
        .enumerate()
        .map(|(j, &u)| {
            let w = (g[j] * bandwidth).max(min_step).min(max_step);
            let hi = (u + w).min(us[grid_size - 1]);
            let lo = (u - w).max(us[0]);
            let ghi = interp(&us, &g, hi);
            let glo = interp(&us, &g, lo);
            -(ghi - glo) / (hi - lo)
        })
        .collect();

    let grid: Vec<(F, F)> = us.into_iter().zip(values).collect();
    ScoreGenerator::from_grid(grid, vec![], "estimated").normalize()
}

/// 0.9 min(sd, IQR/1.34) m^{-1/5} on sorted data.
fn silverman_bandwidth<F: Float>(sorted: &[F]) -> Result<F> {
    let m = sorted.len();
    let mf = F::cast_usize(m);
    let mean = sorted.iter().copied().sum::<F>() / mf;
    let ss: F = sorted.iter().map(|&x| (x - mean) * (x - mean)).sum();
    let sd = (ss / (mf - F::one())).sqrt();
    let iqr = quantile_sorted(sorted, F::cast(0.75)) - quantile_sorted(sorted, F::cast(0.25));
    let spread = sd.min(iqr / F::cast(1.34));
    let h = F::cast(0.9) * spread * mf.powf(-F::cast(0.2));
    if !(h > F::zero()) || !h.is_finite() {
        return Err(Error::InsufficientData {
            needed: MIN_RESIDUALS,
            got: m,
        });
    }
    Ok(h)
}

/// Interpolated order statistic (the usual linear type-7 rule).
fn quantile_sorted<F: Float>(sorted: &[F], p: F) -> F {
    let m = sorted.len();
    if m == 1 {
        return sorted[0];
    }
    let pos = p * F::cast_usize(m - 1);
    let idx = pos.floor().as_f64() as usize;
    let idx = idx.min(m - 2);
    let frac = pos - F::cast_usize(idx);
    sorted[idx] + (sorted[idx + 1] - sorted[idx]) * frac
}

fn empirical_quantile<F: Float>(sorted: &[F], u: F) -> F {
    quantile_sorted(sorted, u)
}

fn kde_at<F: Float>(sorted: &[F], x: F, h: F) -> F {
    let inv_sqrt_2pi = F::cast(0.398_942_280_401_432_7);
    let mf = F::cast_usize(sorted.len());
    let half = F::cast(0.5);
    // residuals further than 8 bandwidths contribute nothing measurable
    let cut = h * F::cast(8.0);
    let lo = sorted.partition_point(|&r| r < x - cut);
    let hi = sorted.partition_point(|&r| r <= x + cut);
    let mut sum = F::zero();
    for &r in &sorted[lo..hi] {
        let z = (x - r) / h;
        sum += (-half * z * z).exp();
    }
    sum * inv_sqrt_2pi / (mf * h)
}

fn interp<F: Float>(us: &[F], vs: &[F], u: F) -> F {
    if u <= us[0] {
        return vs[0];
    }
    let last = us.len() - 1;
    if u >= us[last] {
        return vs[last];
    }
    let hi = us.partition_point(|&x| x < u);
    let lo = hi - 1;
    let t = (u - us[lo]) / (us[hi] - us[lo]);
    vs[lo] + (vs[hi] - vs[lo]) * t
}
