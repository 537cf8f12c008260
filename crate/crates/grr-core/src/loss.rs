//! The rank-based regression loss, its Clarke-subdifferential elements, and
//! multiplier-weighted variants for bootstrap replication.
//!
//! For residuals r_i = y_i - x_i' beta with ascending ranks R_i, the loss is
//! (1/n) sum a(R_i) r_i and one generalized gradient is
//! -(1/n) sum a(R_i) x_i. Both are exact on the open cells where the
//! residual ordering is constant, which is what the solvers rely on.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::float::Float;
use crate::score::ScoreTable;

/// Column standardization record kept alongside a design matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Standardization<F> {
    pub x_means: Vec<F>,
    pub x_scales: Vec<F>,
    pub y_mean: F,
    pub y_scale: F,
}

/// Regression data: an n x p design and n responses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset<F> {
    x: Array2<F>,
    y: Array1<F>,
    standardization: Option<Standardization<F>>,
}

impl<F: Float> Dataset<F> {
    pub fn new(x: Array2<F>, y: Array1<F>) -> Result<Self> {
        Self::with_standardization(x, y, None)
    }

    pub fn with_standardization(
        x: Array2<F>,
        y: Array1<F>,
        standardization: Option<Standardization<F>>,
    ) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "design has {} rows but response has {}",
                x.nrows(),
                y.len()
            )));
        }
        if x.nrows() < 2 {
            return Err(Error::InvalidInput("need at least two observations".into()));
        }
        if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite entry in data".into()));
        }
        if let Some(s) = &standardization {
            if s.x_scales.iter().any(|&v| v <= F::zero()) || s.y_scale <= F::zero() {
                return Err(Error::InvalidInput("non-positive standardization scale".into()));
            }
        }
        Ok(Self {
            x,
            y,
            standardization,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &Array2<F> {
        &self.x
    }

    pub fn y(&self) -> &Array1<F> {
        &self.y
    }

    pub fn standardization(&self) -> Option<&Standardization<F>> {
        self.standardization.as_ref()
    }

    pub fn residuals(&self, beta: &Array1<F>) -> Result<Array1<F>> {
        if beta.len() != self.p() {
            return Err(Error::DimensionMismatch(format!(
                "beta has length {} but design has {} columns",
                beta.len(),
                self.p()
            )));
        }
        Ok(&self.y - &self.x.dot(beta))
    }

    /// Largest row Euclidean norm; pairs with the score bound to cap the
    /// subgradient norm.
    pub fn max_row_norm(&self) -> F {
        (0..self.n())
            .map(|i| {
                self.x
                    .row(i)
                    .iter()
                    .map(|&v| v * v)
                    .sum::<F>()
                    .sqrt()
            })
            .fold(F::zero(), F::max)
    }
}

/// Ascending ranks (1 = smallest), ties broken by original index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankVector(Vec<usize>);

impl RankVector {
    pub fn ranks(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Rank the residuals ascending with a stable tie break; one sort, O(n log n).
pub fn ranks<F: Float>(residuals: &[F]) -> Result<RankVector> {
    if residuals.iter().any(|r| !r.is_finite()) {
        return Err(Error::InvalidInput("non-finite residual".into()));
    }
    let order = argsort(residuals);
    let mut out = vec![0usize; residuals.len()];
    for (pos, &idx) in order.iter().enumerate() {
        out[idx] = pos + 1;
    }
    Ok(RankVector(out))
}

fn argsort<F: Float>(values: &[F]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    sort_order(&mut order, values);
    order
}

fn sort_order<F: Float>(order: &mut [usize], values: &[F]) {
    order.sort_unstable_by(|&a, &b| {
        values[a]
            .partial_cmp(&values[b])
            .expect("finite residuals")
            .then(a.cmp(&b))
    });
}

/// Reusable state for the solvers' inner loops. Successive iterates move
/// little, so re-sorting the previous order is near linear time.
pub(crate) struct LossWorkspace<F> {
    order: Vec<usize>,
    weights: Array1<F>,
    residuals: Array1<F>,
}

impl<F: Float> LossWorkspace<F> {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            order: (0..n).collect(),
            weights: Array1::zeros(n),
            residuals: Array1::zeros(n),
        }
    }

    /// Loss and one subgradient element, with optional per-observation
    /// multipliers applied to the scored terms.
    pub(crate) fn loss_and_subgradient(
        &mut self,
        beta: &Array1<F>,
        data: &Dataset<F>,
        table: &ScoreTable<F>,
        multipliers: Option<&[F]>,
    ) -> (F, Array1<F>) {
        let n = data.n();
        let nf = F::cast_usize(n);
        self.residuals.assign(data.y());
        let fitted = data.x().dot(beta);
        self.residuals -= &fitted;
        let r = self.residuals.as_slice().expect("contiguous");
        sort_order(&mut self.order, r);
        let mut total = F::zero();
        match multipliers {
            None => {
                for (pos, &idx) in self.order.iter().enumerate() {
                    let a = table.score(pos + 1);
                    total += a * r[idx];
                    self.weights[idx] = a / nf;
                }
            }
            Some(m) => {
                for (pos, &idx) in self.order.iter().enumerate() {
                    let a = table.score(pos + 1) * m[idx];
                    total += a * r[idx];
                    self.weights[idx] = a / nf;
                }
            }
        }
        (total / nf, -data.x().t().dot(&self.weights))
    }
}

fn check_dims<F: Float>(beta: &Array1<F>, data: &Dataset<F>, table: &ScoreTable<F>) -> Result<()> {
    if table.n() != data.n() {
        return Err(Error::DimensionMismatch(format!(
            "score table has n={} but data has n={}",
            table.n(),
            data.n()
        )));
    }
    if beta.len() != data.p() {
        return Err(Error::DimensionMismatch(format!(
            "beta has length {} but design has {} columns",
            beta.len(),
            data.p()
        )));
    }
    Ok(())
}

/// (1/n) sum_i a(R_i) (y_i - x_i' beta).
pub fn loss<F: Float>(beta: &Array1<F>, data: &Dataset<F>, table: &ScoreTable<F>) -> Result<F> {
    check_dims(beta, data, table)?;
    let r = data.residuals(beta)?;
    let order = argsort(r.as_slice().expect("contiguous"));
    let n = F::cast_usize(data.n());
    let mut total = F::zero();
    for (pos, &idx) in order.iter().enumerate() {
        total += table.score(pos + 1) * r[idx];
    }
    Ok(total / n)
}

/// One Clarke-subdifferential element: -(1/n) sum_i a(R_i) x_i.
pub fn subgradient<F: Float>(
    beta: &Array1<F>,
    data: &Dataset<F>,
    table: &ScoreTable<F>,
) -> Result<Array1<F>> {
    check_dims(beta, data, table)?;
    let r = data.residuals(beta)?;
    let rank = ranks(r.as_slice().expect("contiguous"))?;
    let n = F::cast_usize(data.n());
    let w = Array1::from_iter(rank.ranks().iter().map(|&k| table.score(k) / n));
    Ok(-data.x().t().dot(&w))
}

/// Loss and subgradient from one residual sort; the solvers' inner step.
pub fn loss_and_subgradient<F: Float>(
    beta: &Array1<F>,
    data: &Dataset<F>,
    table: &ScoreTable<F>,
) -> Result<(F, Array1<F>)> {
    check_dims(beta, data, table)?;
    let r = data.residuals(beta)?;
    let order = argsort(r.as_slice().expect("contiguous"));
    let n = F::cast_usize(data.n());
    let mut total = F::zero();
    let mut w = Array1::zeros(data.n());
    for (pos, &idx) in order.iter().enumerate() {
        let a = table.score(pos + 1);
        total += a * r[idx];
        w[idx] = a / n;
    }
    Ok((total / n, -data.x().t().dot(&w)))
}

fn check_multipliers<F: Float>(multipliers: &[F], n: usize) -> Result<()> {
    if multipliers.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} multipliers for {} observations",
            multipliers.len(),
            n
        )));
    }
    Ok(())
}

/// (1/n) sum_i m_i a(R_i) r_i with ranks from the unweighted residuals.
/// The multipliers are 1 + e_i for Rademacher e in bootstrap use.
pub fn weighted_loss<F: Float>(
    beta: &Array1<F>,
    data: &Dataset<F>,
    table: &ScoreTable<F>,
    multipliers: &[F],
) -> Result<F> {
    check_dims(beta, data, table)?;
    check_multipliers(multipliers, data.n())?;
    let r = data.residuals(beta)?;
    let order = argsort(r.as_slice().expect("contiguous"));
    let n = F::cast_usize(data.n());
    let mut total = F::zero();
    for (pos, &idx) in order.iter().enumerate() {
        total += multipliers[idx] * table.score(pos + 1) * r[idx];
    }
    Ok(total / n)
}

/// Weighted subgradient -(1/n) sum_i m_i a(R_i) x_i.
pub fn weighted_subgradient<F: Float>(
    beta: &Array1<F>,
    data: &Dataset<F>,
    table: &ScoreTable<F>,
    multipliers: &[F],
) -> Result<Array1<F>> {
    check_dims(beta, data, table)?;
    check_multipliers(multipliers, data.n())?;
    let r = data.residuals(beta)?;
    let rank = ranks(r.as_slice().expect("contiguous"))?;
    let n = F::cast_usize(data.n());
    let w = Array1::from_iter(
        rank.ranks()
            .iter()
            .zip(multipliers)
            .map(|(&k, &m)| m * table.score(k) / n),
    );
    Ok(-data.x().t().dot(&w))
}

/// Outcome of random midpoint-convexity probing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub trials: usize,
    pub violations: usize,
    /// Largest observed excess of loss(mid) over the chord average.
    pub worst_gap: f64,
}

/// Probe midpoint convexity on random segments. Monotone score tables can
/// never produce a violation beyond the slack; a reported violation is
/// statistical evidence of non-convexity, not a proof.
pub fn convexity_probe<F: Float>(
    data: &Dataset<F>,
    table: &ScoreTable<F>,
    trials: usize,
    seed: u64,
) -> Result<ConvexityReport> {
    if trials == 0 {
        return Err(Error::InvalidParameter("need at least one trial".into()));
    }
    let slack = F::cast(1e-10);
    let scale = F::cast(3.0);
    let half = F::cast(0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = data.p();
    let mut violations = 0usize;
    let mut worst = F::neg_infinity();
    for _ in 0..trials {
        let b1 = random_point::<F>(&mut rng, p, scale);
        let b2 = random_point::<F>(&mut rng, p, scale);
        let mid = (&b1 + &b2) * half;
        let l1 = loss(&b1, data, table)?;
        let l2 = loss(&b2, data, table)?;
        let lm = loss(&mid, data, table)?;
        let gap = lm - (l1 + l2) * half;
        worst = worst.max(gap);
        if gap > slack {
            violations += 1;
        }
    }
    Ok(ConvexityReport {
        trials,
        violations,
        worst_gap: worst.as_f64(),
    })
}

fn random_point<F: Float>(rng: &mut impl Rng, p: usize, scale: F) -> Array1<F> {
    Array1::from_iter((0..p).map(|_| {
        let z: f64 = StandardNormal.sample(rng);
        F::cast(z) * scale
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::ScoreGenerator;
    use ndarray::array;

    fn toy_data(n: usize, p: usize, seed: u64) -> Dataset<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, p), |_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z
        });
        let y = Array1::from_shape_fn(n, |_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z
        });
        Dataset::new(x, y).unwrap()
    }

    #[test]
    fn ranks_are_stable_permutations() {
        let r = ranks(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(r.ranks(), &[3, 1, 2]);
        let tied = ranks(&[5.0, 5.0]).unwrap();
        assert_eq!(tied.ranks(), &[1, 2]);
        let sorted = ranks(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(sorted.ranks(), &[1, 2, 3, 4]);
        assert!(ranks(&[f64::NAN]).is_err());
    }

    #[test]
    fn two_point_loss_is_half_the_absolute_gap() {
        let table = ScoreTable::new(vec![-1.0, 1.0]).unwrap();
        let data: Dataset<f64> = Dataset::new(array![[0.0], [0.0]], array![1.0, 4.0]).unwrap();
        let beta = array![0.0];
        // residuals are (1, 4): |4 - 1| / 2
        assert!((loss(&beta, &data, &table).unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn loss_is_invariant_to_intercept_shifts_and_permutations() {
        let data = toy_data(40, 3, 1);
        let table = ScoreGenerator::<f64>::sinusoidal().score_table(40).unwrap();
        let beta = array![0.3, -0.7, 1.1];
        let base = loss(&beta, &data, &table).unwrap();

        let shifted = Dataset::new(data.x().clone(), data.y() + 5.5).unwrap();
        let l2 = loss(&beta, &shifted, &table).unwrap();
        assert!((base - l2).abs() < 1e-12);

        // reverse the observation order
        let idx: Vec<usize> = (0..40).rev().collect();
        let xp = ndarray::Array2::from_shape_fn((40, 3), |(i, j)| data.x()[(idx[i], j)]);
        let yp = Array1::from_iter(idx.iter().map(|&i| data.y()[i]));
        let permuted = Dataset::new(xp, yp).unwrap();
        let l3 = loss(&beta, &permuted, &table).unwrap();
        assert!((base - l3).abs() < 1e-12);

        let g = subgradient(&beta, &data, &table).unwrap();
        let gp = subgradient(&beta, &permuted, &table).unwrap();
        for (a, b) in g.iter().zip(gp.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_is_equivariant_under_regression_shifts() {
        let data = toy_data(30, 2, 2);
        let table = ScoreGenerator::<f64>::wilcoxon().score_table(30).unwrap();
        let beta = array![0.2, -0.4];
        let delta = array![1.5, 0.5];
        let y_shift = data.y() + &data.x().dot(&delta);
        let shifted = Dataset::new(data.x().clone(), y_shift).unwrap();
        let l1 = loss(&beta, &data, &table).unwrap();
        let l2 = loss(&(&beta + &delta), &shifted, &table).unwrap();
        assert!((l1 - l2).abs() < 1e-9);
    }

    #[test]
    fn loss_is_piecewise_affine_on_rank_cells() {
        let data = toy_data(25, 2, 3);
        let table = ScoreGenerator::<f64>::sinusoidal().score_table(25).unwrap();
        let beta = array![0.1, 0.9];
        let dir = array![1.0, -0.5];
        let h = 1e-9;
        let l0 = loss(&beta, &data, &table).unwrap();
        let l1 = loss(&(&beta + &(&dir * h)), &data, &table).unwrap();
        let l2 = loss(&(&beta + &(&dir * (2.0 * h))), &data, &table).unwrap();
        assert!((l2 - 2.0 * l1 + l0).abs() < 1e-13);
    }

    #[test]
    fn subgradient_matches_directional_derivatives() {
        let data = toy_data(60, 4, 4);
        let table = ScoreGenerator::<f64>::sinusoidal().score_table(60).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let beta = random_point::<f64>(&mut rng, 4, 1.0);
            let dir = random_point::<f64>(&mut rng, 4, 1.0);
            let g = subgradient(&beta, &data, &table).unwrap();
            let h = 1e-7;
            let l0 = loss(&beta, &data, &table).unwrap();
            let l1 = loss(&(&beta + &(&dir * h)), &data, &table).unwrap();
            let fd = (l1 - l0) / h;
            let ip = g.dot(&dir);
            assert!((fd - ip).abs() < 1e-6, "fd {fd} vs <g,d> {ip}");
        }
    }

    #[test]
    fn zero_design_column_gets_zero_gradient() {
        let mut data = toy_data(20, 3, 5);
        for i in 0..20 {
            data.x[(i, 1)] = 0.0;
        }
        let table = ScoreGenerator::<f64>::wilcoxon().score_table(20).unwrap();
        let g = subgradient(&array![0.5, 0.5, 0.5], &data, &table).unwrap();
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn subgradient_norm_respects_the_score_bound() {
        let data = toy_data(50, 3, 6);
        let gen = ScoreGenerator::<f64>::sinusoidal();
        let table = gen.score_table(50).unwrap();
        let g = subgradient(&array![1.0, -2.0, 0.5], &data, &table).unwrap();
        let gnorm = g.dot(&g).sqrt();
        assert!(gnorm <= gen.bound() * data.max_row_norm());
    }

    #[test]
    fn weighted_variants_reduce_and_vanish() {
        let data = toy_data(30, 2, 7);
        let table = ScoreGenerator::<f64>::wilcoxon().score_table(30).unwrap();
        let beta = array![0.4, 0.4];

        let ones = vec![1.0; 30];
        let wl = weighted_loss(&beta, &data, &table, &ones).unwrap();
        assert!((wl - loss(&beta, &data, &table).unwrap()).abs() < 1e-14);
        let wg = weighted_subgradient(&beta, &data, &table, &ones).unwrap();
        let g = subgradient(&beta, &data, &table).unwrap();
        for (a, b) in wg.iter().zip(g.iter()) {
            assert!((a - b).abs() < 1e-14);
        }

        let zeros = vec![0.0; 30];
        assert_eq!(weighted_loss(&beta, &data, &table, &zeros).unwrap(), 0.0);
        let zg = weighted_subgradient(&beta, &data, &table, &zeros).unwrap();
        assert!(zg.iter().all(|&v| v == 0.0));

        // linearity: weighted = unweighted + (1/n) sum e_i a(R_i) r_i
        let mult: Vec<f64> = (0..30).map(|i| if i % 2 == 0 { 2.0 } else { 0.0 }).collect();
        let wl2 = weighted_loss(&beta, &data, &table, &mult).unwrap();
        let r = data.residuals(&beta).unwrap();
        let rk = ranks(r.as_slice().unwrap()).unwrap();
        let correction: f64 = (0..30)
            .map(|i| (mult[i] - 1.0) * table.score(rk.ranks()[i]) * r[i])
            .sum::<f64>()
            / 30.0;
        assert!((wl2 - (wl + correction)).abs() < 1e-12);
    }

    #[test]
    fn monotone_scores_never_violate_midpoint_convexity() {
        let data = toy_data(20, 2, 8);
        let table = ScoreGenerator::<f64>::wilcoxon().score_table(20).unwrap();
        let report = convexity_probe(&data, &table, 2000, 123).unwrap();
        assert_eq!(report.violations, 0, "worst gap {}", report.worst_gap);
    }

    #[test]
    fn dimension_mismatches_error() {
        let data = toy_data(10, 2, 9);
        let table = ScoreGenerator::<f64>::wilcoxon().score_table(11).unwrap();
        assert!(loss(&array![0.0, 0.0], &data, &table).is_err());
        let table10 = ScoreGenerator::<f64>::wilcoxon().score_table(10).unwrap();
        assert!(loss(&array![0.0], &data, &table10).is_err());
        assert!(weighted_loss(&array![0.0, 0.0], &data, &table10, &[1.0; 4]).is_err());
    }
}
