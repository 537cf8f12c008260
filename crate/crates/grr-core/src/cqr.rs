//! Bridge between rank-regression scores and weighted composite-quantile
//! weights, plus the asymptotic-variance calculators on both sides.
//!
//! Scores map to weights by first differences; weights map back to scores
//! by partial sums. The fixed-K composite variance converges to the rank
//! variance as the level grid refines, which the convergence report checks
//! numerically.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::float::Float;
use crate::linalg::spd_solve;
use crate::noise::NoiseDensity;
use crate::score::{ScoreGenerator, ScoreTable};

/// Quantile levels and their weights; weights may be negative, which is
/// exactly the non-convex regime.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CqrWeights<F> {
    pub taus: Vec<F>,
    pub weights: Vec<F>,
}

impl<F: Float> CqrWeights<F> {
    pub fn new(taus: Vec<F>, weights: Vec<F>) -> Result<Self> {
        if taus.len() != weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} levels but {} weights",
                taus.len(),
                weights.len()
            )));
        }
        if taus.is_empty() {
            return Err(Error::InvalidParameter("no quantile levels".into()));
        }
        // the uniform grid k/n closes at 1, where the check-loss term is
        // vacuous; interior levels must stay strictly inside
        let ok = taus.windows(2).all(|w| w[1] > w[0])
            && taus[0] > F::zero()
            && taus[taus.len() - 1] <= F::one();
        if !ok {
            return Err(Error::InvalidParameter(
                "levels must be strictly increasing in (0, 1]".into(),
            ));
        }
        Ok(Self { taus, weights })
    }

    pub fn k(&self) -> usize {
        self.taus.len()
    }
}

/// Scores from weights on the uniform level grid tau_k = k/n. Accepts
/// K = n (the direct construction) or K = n-1 (the inverse of
/// [`scores_to_weights`]). The output is recentered and rescaled to unit
/// mean square, the scale on which score tables are exchanged.
pub fn weights_to_scores<F: Float>(w: &CqrWeights<F>, n: usize) -> Result<ScoreTable<F>> {
    if n < 2 {
        return Err(Error::InvalidParameter("need n >= 2".into()));
    }
    let k = w.k();
    if k != n && k != n - 1 {
        return Err(Error::InvalidParameter(format!(
            "need K = n or K = n-1 levels (K={k}, n={n})"
        )));
    }
    let grid_n = F::cast_usize(n);
    for (i, &tau) in w.taus.iter().enumerate() {
        let expect = F::cast_usize(i + 1) / grid_n;
        if (tau - expect).abs() > F::cast(1e-9) {
            return Err(Error::InvalidParameter(format!(
                "level {} must equal {}/{n} on the uniform grid",
                tau.as_f64(),
                i + 1
            )));
        }
    }
    // a(i) = sum_k w_k tau_k - sum_{k >= i} w_k; the first term is constant
    // in i so recentering removes it exactly
    let mut tail = F::zero();
    let mut scores = vec![F::zero(); n];
    for i in (0..n).rev() {
        if i < k {
            tail += w.weights[i];
        }
        scores[i] = -tail;
    }
    let mean = scores.iter().copied().sum::<F>() / grid_n;
    for s in &mut scores {
        *s -= mean;
    }
    let msq = scores.iter().map(|&s| s * s).sum::<F>() / grid_n;
    if msq > F::cast(1e-28) {
        let scale = msq.sqrt();
        for s in &mut scores {
            *s /= scale;
        }
    }
    ScoreTable::new(scores)
}

/// Weights from score first differences: w_i = a(i+1) - a(i) at levels i/n.
pub fn scores_to_weights<F: Float>(table: &ScoreTable<F>) -> Result<CqrWeights<F>> {
    let n = table.n();
    if n < 2 {
        return Err(Error::InvalidParameter("need n >= 2".into()));
    }
    let grid_n = F::cast_usize(n);
    let taus: Vec<F> = (1..n).map(|i| F::cast_usize(i) / grid_n).collect();
    let weights: Vec<F> = (1..n)
        .map(|i| table.score(i + 1) - table.score(i))
        .collect();
    CqrWeights::new(taus, weights)
}

/// Asymptotic variance of the rank estimator along v: v' Sigma^{-1} v / c_H^2.
pub fn grr_asymptotic_variance<F: Float>(
    generator: &ScoreGenerator<F>,
    density: &dyn NoiseDensity<F>,
    sigma: &Array2<F>,
    v: &Array1<F>,
) -> Result<F> {
    let c_h = generator.c_h(density)?;
    if c_h <= F::zero() {
        return Err(Error::ConditionViolation(format!(
            "curvature constant is {}; the score/noise pairing must make it positive",
            c_h.as_f64()
        )));
    }
    let solved = spd_solve(sigma, v)?;
    Ok(v.dot(&solved) / (c_h * c_h))
}

/// Fixed-K weighted composite-quantile asymptotic variance.
pub fn cqr_asymptotic_variance<F: Float>(
    w: &CqrWeights<F>,
    density: &dyn NoiseDensity<F>,
    sigma: &Array2<F>,
    v: &Array1<F>,
) -> Result<F> {
    let k = w.k();
    let mut denom_sum = F::zero();
    for i in 0..k {
        // the density-quantile composition vanishes at the closed endpoint
        if w.taus[i] < F::one() {
            denom_sum += w.weights[i] * density.pdf(density.quantile(w.taus[i]));
        }
    }
    let scale = w
        .weights
        .iter()
        .map(|&x| x.abs())
        .fold(F::zero(), F::max);
    if denom_sum.abs() <= scale * F::cast(1e-14) || denom_sum == F::zero() {
        return Err(Error::DegenerateWeights(
            "density-weighted level sum vanishes".into(),
        ));
    }
    let mut numer = F::zero();
    for i in 0..k {
        for j in 0..k {
            let lo = w.taus[i].min(w.taus[j]);
            let hi = w.taus[i].max(w.taus[j]);
            numer += w.weights[i] * w.weights[j] * lo * (F::one() - hi);
        }
    }
    let solved = spd_solve(sigma, v)?;
    Ok(numer / (denom_sum * denom_sum) * v.dot(&solved))
}

/// One row of the convergence report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceRow<F> {
    pub k: usize,
    pub variance: F,
    pub gap: F,
    pub tolerance: F,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport<F> {
    /// The K -> infinity limit: the rank-estimator variance.
    pub limit: F,
    pub rows: Vec<ConvergenceRow<F>>,
    pub within_tolerance: bool,
    pub gaps_nonincreasing: bool,
}

/// For each K, build weights proportional to the score increments on the
/// uniform level grid, evaluate the fixed-K variance, and compare with the
/// limit. Increment weights pick up jump masses automatically.
pub fn variance_convergence_check<F: Float>(
    generator: &ScoreGenerator<F>,
    density: &dyn NoiseDensity<F>,
    sigma: &Array2<F>,
    v: &Array1<F>,
    k_list: &[usize],
) -> Result<ConvergenceReport<F>> {
    let limit = grr_asymptotic_variance(generator, density, sigma, v)?;
    let (lipschitz, jump_mass) = grid_roughness(generator);
    let mut rows = Vec::with_capacity(k_list.len());
    for &k in k_list {
        if k < 2 {
            return Err(Error::InvalidParameter("K must be at least 2".into()));
        }
        let kf = F::cast_usize(k);
        let taus: Vec<F> = (1..k).map(|i| F::cast_usize(i) / kf).collect();
        let weights: Vec<F> = (1..k)
            .map(|i| {
                let lo = F::cast_usize(i) / kf;
                let hi = F::cast_usize(i + 1) / kf;
                generator.eval(hi) - generator.eval(lo)
            })
            .collect();
        let w = CqrWeights::new(taus, weights)?;
        let variance = cqr_asymptotic_variance(&w, density, sigma, v)?;
        let gap = (variance - limit).abs();
        let tolerance = F::cast(10.0) * (lipschitz + jump_mass) / kf;
        rows.push(ConvergenceRow {
            k,
            variance,
            gap,
            tolerance,
        });
    }
    let within_tolerance = rows.iter().all(|r| r.gap <= r.tolerance);
    let gaps_nonincreasing = rows
        .windows(2)
        .all(|w| w[1].gap <= w[0].gap * F::cast(1.1) + F::cast(1e-9));
    Ok(ConvergenceReport {
        limit,
        rows,
        within_tolerance,
        gaps_nonincreasing,
    })
}

/// Max interior slope and total jump mass of the tabulated representation.
fn grid_roughness<F: Float>(generator: &ScoreGenerator<F>) -> (F, F) {
    let mut slope = F::zero();
    let mut jumps = F::zero();
    for w in generator.grid().windows(2) {
        let du = w[1].0 - w[0].0;
        let dv = w[1].1 - w[0].1;
        if du == F::zero() {
            jumps += dv.abs();
        } else {
            slope = slope.max((dv / du).abs());
        }
    }
    (slope, jumps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ar1_matrix;
    use crate::noise::{Cauchy, Laplace, Normal};
    use crate::score::optimal_generator;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const SQRT_12: f64 = 3.4641016151377544;

    fn normalized_random_table(n: usize, rng: &mut impl Rng) -> ScoreTable<f64> {
        let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let mean = raw.iter().sum::<f64>() / n as f64;
        let centered: Vec<f64> = raw.iter().map(|v| v - mean).collect();
        let msq = centered.iter().map(|v| v * v).sum::<f64>() / n as f64;
        let scale = msq.sqrt();
        ScoreTable::new(centered.iter().map(|v| v / scale).collect()).unwrap()
    }

    #[test]
    fn equal_weights_reproduce_the_wilcoxon_table() {
        for n in [10usize, 50, 200] {
            let nf = n as f64;
            let w = CqrWeights::new(
                (1..=n).map(|k| k as f64 / nf).collect(),
                vec![1.0 / (nf * (nf + 1.0)); n],
            )
            .unwrap();
            let table = weights_to_scores(&w, n).unwrap();
            let wilcoxon = ScoreGenerator::<f64>::wilcoxon().score_table(n).unwrap();
            let sup = (1..=n)
                .map(|i| (table.score(i) - wilcoxon.score(i)).abs())
                .fold(0.0f64, f64::max);
            assert!(sup <= 2.0 / nf, "n={n}: sup {sup}");
        }
    }

    #[test]
    fn zero_and_nonnegative_weights() {
        let n = 12;
        let nf = n as f64;
        let taus: Vec<f64> = (1..=n).map(|k| k as f64 / nf).collect();
        let zero = CqrWeights::new(taus.clone(), vec![0.0; n]).unwrap();
        let t = weights_to_scores(&zero, n).unwrap();
        assert!(t.scores().iter().all(|&v| v == 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pos = CqrWeights::new(taus, (0..n).map(|_| rng.random::<f64>()).collect()).unwrap();
        assert!(weights_to_scores(&pos, n).unwrap().is_monotone());
    }

    #[test]
    fn level_grid_is_validated() {
        let w = CqrWeights::new(vec![0.2, 0.5], vec![1.0, 1.0]).unwrap();
        assert!(weights_to_scores(&w, 5).is_err()); // K != n, n-1
        let bad = CqrWeights::new(vec![0.3, 0.6, 0.9], vec![1.0; 3]).unwrap();
        assert!(weights_to_scores(&bad, 3).is_err()); // wrong grid
        assert!(CqrWeights::<f64>::new(vec![0.5, 0.5], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn wilcoxon_differences_are_constant_and_sinusoid_goes_negative() {
        let n = 25;
        let wilcoxon = ScoreGenerator::<f64>::wilcoxon().score_table(n).unwrap();
        let w = scores_to_weights(&wilcoxon).unwrap();
        assert_eq!(w.k(), n - 1);
        for &wi in &w.weights {
            assert!((wi - SQRT_12 / (n as f64 + 1.0)).abs() < 1e-12);
        }

        let sin = ScoreGenerator::<f64>::sinusoidal().score_table(25).unwrap();
        let ws = scores_to_weights(&sin).unwrap();
        assert!(ws.weights.iter().any(|&v| v < 0.0));
    }

    #[test]
    fn round_trip_is_identity_on_normalized_tables() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &n in &[5usize, 17, 64, 301] {
            let table = normalized_random_table(n, &mut rng);
            let back = weights_to_scores(&scores_to_weights(&table).unwrap(), n).unwrap();
            let sup = (1..=n)
                .map(|i| (back.score(i) - table.score(i)).abs())
                .fold(0.0f64, f64::max);
            assert!(sup <= 1e-10, "n={n}: sup {sup}");
        }
    }

    #[test]
    fn monotone_tables_correspond_to_nonnegative_weights() {
        let mono = ScoreGenerator::<f64>::wilcoxon().score_table(40).unwrap();
        assert!(scores_to_weights(&mono)
            .unwrap()
            .weights
            .iter()
            .all(|&w| w >= -1e-12));
        let non = ScoreGenerator::<f64>::sinusoidal().score_table(40).unwrap();
        assert!(!non.is_monotone());
        assert!(scores_to_weights(&non)
            .unwrap()
            .weights
            .iter()
            .any(|&w| w < -1e-12));
    }

    #[test]
    fn rank_variance_examples() {
        let eye = ndarray::Array2::<f64>::eye(1);
        let e1 = array![1.0];

        let opt = optimal_generator::<f64>(&Cauchy).unwrap();
        let v = grr_asymptotic_variance(&opt, &Cauchy, &eye, &e1).unwrap();
        assert!((v - 2.0).abs() < 1e-2, "cauchy optimal variance {v}");

        // quadratic form scaling
        let v4 = grr_asymptotic_variance(&opt, &Cauchy, &eye, &array![2.0]).unwrap();
        assert!((v4 - 4.0 * v).abs() < 1e-10);

        let sl = ScoreGenerator::<f64>::single_level(0.5).unwrap();
        let v = grr_asymptotic_variance(&sl, &Laplace, &eye, &e1).unwrap();
        assert!((v - 1.0).abs() < 1e-2, "median variance {v}");

        // flipped optimal score violates the positivity condition
        let neg = ScoreGenerator::from_grid(
            opt.grid().iter().map(|&(u, x)| (u, -x)).collect(),
            vec![],
            "neg",
        );
        assert!(matches!(
            grr_asymptotic_variance(&neg, &Cauchy, &eye, &e1),
            Err(Error::ConditionViolation(_))
        ));
    }

    #[test]
    fn composite_variance_examples() {
        let eye = ndarray::Array2::<f64>::eye(1);
        let e1 = array![1.0];

        // single median level under Laplace noise
        let w = CqrWeights::new(vec![0.5], vec![1.0]).unwrap();
        let v = cqr_asymptotic_variance(&w, &Laplace, &eye, &e1).unwrap();
        assert!((v - 1.0).abs() < 1e-12, "single-level {v}");

        // hand-computed symmetric two-level case: numerator 1/2, density
        // sum 1/2, so the ratio is 2
        let w2 = CqrWeights::new(vec![0.25, 0.75], vec![1.0, 1.0]).unwrap();
        let v2 = cqr_asymptotic_variance(&w2, &Laplace, &eye, &e1).unwrap();
        assert!((v2 - 2.0).abs() < 1e-12, "two-level {v2}");

        // invariance to weight rescaling
        let w3 = CqrWeights::new(vec![0.25, 0.75], vec![-3.0, -3.0]).unwrap();
        let v3 = cqr_asymptotic_variance(&w3, &Laplace, &eye, &e1).unwrap();
        assert!((v3 - v2).abs() < 1e-12);

        // antisymmetric weights under a symmetric density degenerate
        let w4 = CqrWeights::new(vec![0.25, 0.75], vec![1.0, -1.0]).unwrap();
        assert!(matches!(
            cqr_asymptotic_variance(&w4, &Laplace, &eye, &e1),
            Err(Error::DegenerateWeights(_))
        ));
    }

    #[test]
    fn composite_variance_converges_to_the_rank_variance() {
        let eye = ndarray::Array2::<f64>::eye(1);
        let e1 = array![1.0];
        let wilcoxon = ScoreGenerator::<f64>::wilcoxon();
        let report =
            variance_convergence_check(&wilcoxon, &Normal, &eye, &e1, &[10, 100, 1000]).unwrap();
        let pi_third = std::f64::consts::PI / 3.0;
        assert!((report.limit - pi_third).abs() < 1e-3);
        assert!(report.within_tolerance, "rows: {:?}", report.rows);
        assert!(report.gaps_nonincreasing);
        assert!(report.rows[2].gap <= 0.01);
    }

    #[test]
    fn doubling_k_roughly_halves_the_gap_for_an_asymmetric_smooth_score() {
        // a quadratic score has a genuinely first-order discretization error
        let quad = ScoreGenerator::<f64>::tabulate(|u| u * u, 4096, "quadratic")
            .normalize()
            .unwrap();
        let eye = ndarray::Array2::<f64>::eye(1);
        let e1 = array![1.0];
        let report =
            variance_convergence_check(&quad, &Normal, &eye, &e1, &[200, 400]).unwrap();
        let ratio = report.rows[1].gap / report.rows[0].gap;
        assert!(
            (0.3..=0.7).contains(&ratio),
            "gap ratio {ratio} (gaps {:?})",
            report.rows
        );
    }

    #[test]
    fn optimal_scores_reach_the_information_bound_in_the_limit() {
        let eye = ndarray::Array2::<f64>::eye(1);
        let e1 = array![1.0];
        let opt = optimal_generator::<f64>(&Cauchy).unwrap();
        let report = variance_convergence_check(&opt, &Cauchy, &eye, &e1, &[2000]).unwrap();
        assert!((report.rows[0].variance - 2.0).abs() < 0.02);
    }

    #[test]
    fn correlated_designs_run_through_the_solver() {
        let sigma = ar1_matrix::<f64>(3, 0.7);
        let e1 = array![1.0, 0.0, 0.0];
        let v = grr_asymptotic_variance(
            &ScoreGenerator::wilcoxon(),
            &Normal,
            &sigma,
            &e1,
        )
        .unwrap();
        // (Sigma^{-1})_{11} for AR(0.7) has 1/(1-rho^2) on the first
        // diagonal entry
        let want = (std::f64::consts::PI / 3.0) * (1.0 / (1.0 - 0.49));
        assert!((v - want).abs() < 1e-2, "{v} vs {want}");
    }
}
