//! Score-generating functions and discrete score tables.
//!
//! A generator is a function phi on (0,1), normalized so that its integral
//! vanishes and its second moment is one. Built-in families evaluate in
//! closed form; estimated or transformed generators live on a tabulated
//! grid with linear interpolation. Jump discontinuities are represented by
//! duplicated knots so interpolation never smooths across them.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::float::Float;
use crate::noise::{fisher_information, NoiseDensity};
use crate::quad::{trapezoid_unit, trapezoid_unit_map};

/// Default tabulation resolution.
pub const DEFAULT_GRID_SIZE: usize = 4096;

const MEAN_TOL: f64 = 1e-8;
const SECOND_MOMENT_TOL: f64 = 1e-6;

/// Score family. Closed-form kinds evaluate exactly; `Tabulated` and
/// `Flattened` interpolate on the stored grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "params")]
pub enum ScoreKind<F> {
    Wilcoxon,
    Sign,
    SingleLevel { tau: F },
    Sinusoidal,
    Tabulated,
    Flattened { base: String, epsilon: F },
}

impl<F: Float> ScoreKind<F> {
    fn closed_form(&self, u: F) -> Option<F> {
        let half = F::cast(0.5);
        match self {
            ScoreKind::Wilcoxon => Some(F::cast(12.0).sqrt() * (u - half)),
            ScoreKind::Sign => Some(if u > half {
                F::one()
            } else if u < half {
                -F::one()
            } else {
                F::zero()
            }),
            ScoreKind::SingleLevel { tau } => {
                let t = *tau;
                let scale = (t * (F::one() - t)).sqrt();
                let ind = if u <= t { F::one() } else { F::zero() };
                Some((t - ind) / scale)
            }
            ScoreKind::Sinusoidal => {
                Some(F::SQRT_2() * ((F::cast(2.0) * u - F::one()) * F::PI()).sin())
            }
            ScoreKind::Tabulated | ScoreKind::Flattened { .. } => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScoreKind::Wilcoxon => "wilcoxon",
            ScoreKind::Sign => "sign",
            ScoreKind::SingleLevel { .. } => "single-level",
            ScoreKind::Sinusoidal => "sinusoidal",
            ScoreKind::Tabulated => "tabulated",
            ScoreKind::Flattened { .. } => "flattened",
        }
    }
}

/// A score-generating function with its tabulated representation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreGenerator<F> {
    kind: ScoreKind<F>,
    label: String,
    grid: Vec<(F, F)>,
    jump_points: Vec<F>,
    bound: F,
}

impl<F: Float> ScoreGenerator<F> {
    /// Wilcoxon scores: sqrt(12) (u - 1/2).
    pub fn wilcoxon() -> Self {
        Self::from_kind(ScoreKind::Wilcoxon, vec![], "wilcoxon")
    }

    /// Sign scores: sgn(u - 1/2).
    pub fn sign() -> Self {
        Self::from_kind(ScoreKind::Sign, vec![F::cast(0.5)], "sign")
    }

    /// Single-level scores {tau - 1(u <= tau)} / sqrt(tau (1-tau)).
    pub fn single_level(tau: F) -> Result<Self> {
        if !(tau > F::zero() && tau < F::one()) {
            return Err(Error::InvalidParameter(format!(
                "single-level tau must lie in (0,1), got {}",
                tau.as_f64()
            )));
        }
        Ok(Self::from_kind(
            ScoreKind::SingleLevel { tau },
            vec![tau],
            &format!("single-level:{}", tau.as_f64()),
        ))
    }

    /// Sinusoidal scores sqrt(2) sin((2u - 1) pi).
    pub fn sinusoidal() -> Self {
        Self::from_kind(ScoreKind::Sinusoidal, vec![], "sinusoidal")
    }

    fn from_kind(kind: ScoreKind<F>, jumps: Vec<F>, label: &str) -> Self {
        let grid = tabulate_closed_form(&kind, &jumps, DEFAULT_GRID_SIZE);
        let bound = match &kind {
            ScoreKind::Wilcoxon => F::cast(3.0).sqrt(),
            ScoreKind::Sign => F::one(),
            ScoreKind::SingleLevel { tau } => {
                let t = *tau;
                t.max(F::one() - t) / (t * (F::one() - t)).sqrt()
            }
            ScoreKind::Sinusoidal => F::SQRT_2(),
            _ => unreachable!("closed-form kinds only"),
        };
        Self {
            kind,
            label: label.to_string(),
            grid,
            jump_points: jumps,
            bound,
        }
    }

    /// Raw tabulation of an arbitrary function on the midpoint grid. The
    /// result is generally unnormalized; pass it through [`Self::normalize`].
    pub fn tabulate(f: impl Fn(F) -> F, grid_size: usize, label: &str) -> Self {
        let grid: Vec<(F, F)> = midpoints(grid_size).map(|u| (u, f(u))).collect();
        Self::from_grid(grid, vec![], label)
    }

    /// Build directly from a knot list (already sorted, jumps duplicated).
    pub fn from_grid(grid: Vec<(F, F)>, jump_points: Vec<F>, label: &str) -> Self {
        let bound = grid
            .iter()
            .map(|&(_, v)| v.abs())
            .fold(F::zero(), F::max);
        Self {
            kind: ScoreKind::Tabulated,
            label: label.to_string(),
            grid,
            jump_points,
            bound,
        }
    }

    pub fn kind(&self) -> &ScoreKind<F> {
        &self.kind
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn grid(&self) -> &[(F, F)] {
        &self.grid
    }

    pub fn jump_points(&self) -> &[F] {
        &self.jump_points
    }

    /// Certified sup-norm bound.
    pub fn bound(&self) -> F {
        self.bound
    }

    /// Evaluate phi at u, clamping to (0,1) endpoints by constant extension.
    pub fn eval(&self, u: F) -> F {
        if let Some(v) = self.kind.closed_form(u) {
            return v;
        }
        interpolate(&self.grid, u)
    }

    /// Trapezoid integral of phi over [0,1] on the generator's grid.
    pub fn integral(&self) -> F {
        trapezoid_unit(&self.grid)
    }

    /// Trapezoid integral of phi^2 over [0,1] on the generator's grid.
    pub fn second_moment(&self) -> F {
        trapezoid_unit_map(&self.grid, |v| v * v)
    }

    /// Whether the stored grid already satisfies the normalization
    /// contract (zero mean, unit second moment).
    pub fn is_normalized(&self) -> bool {
        self.integral().abs() <= F::cast(MEAN_TOL)
            && (self.second_moment() - F::one()).abs() <= F::cast(SECOND_MOMENT_TOL)
    }

    /// Center and rescale so the integral vanishes and the second moment is
    /// one, in the grid's own trapezoid quadrature. Generators that already
    /// satisfy the contract are returned unchanged.
    pub fn normalize(self) -> Result<Self> {
        if self.grid.is_empty() {
            return Err(Error::InvalidParameter("empty generator grid".into()));
        }
        if self.is_normalized() {
            return Ok(self);
        }
        let mean = self.integral();
        let var = trapezoid_unit_map(&self.grid, |v| {
            let c = v - mean;
            c * c
        });
        if var <= F::cast(1e-24) {
            return Err(Error::ZeroVariance);
        }
        let scale = var.sqrt();
        let grid: Vec<(F, F)> = self
            .grid
            .iter()
            .map(|&(u, v)| (u, (v - mean) / scale))
            .collect();
        Ok(Self::from_grid(grid, self.jump_points, &self.label))
    }

    /// Discrete scores a(i) = phi(i/(n+1)), recentered to sum exactly zero.
    pub fn score_table(&self, n: usize) -> Result<ScoreTable<F>> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!(
                "score table needs n >= 2, got {n}"
            )));
        }
        let denom = F::cast_usize(n + 1);
        let mut scores: Vec<F> = (1..=n)
            .map(|i| self.eval(F::cast_usize(i) / denom))
            .collect();
        let mean = scores.iter().copied().sum::<F>() / F::cast_usize(n);
        for s in &mut scores {
            *s -= mean;
        }
        ScoreTable::new(scores)
    }

    /// Clamp to [epsilon, 1-epsilon] and renormalize. The identity for
    /// epsilon = 0.
    pub fn flatten(&self, epsilon: F) -> Result<Self> {
        let raw = self.flatten_raw(epsilon)?;
        if epsilon == F::zero() {
            return Ok(raw);
        }
        raw.normalize()
    }

    /// The clamped tabulation before renormalization; exposed so the
    /// robustness/efficiency trade-off of the raw bound can be inspected.
    pub fn flatten_raw(&self, epsilon: F) -> Result<Self> {
        if !(epsilon >= F::zero() && epsilon < F::cast(0.5)) {
            return Err(Error::InvalidParameter(format!(
                "flatten epsilon must lie in [0, 1/2), got {}",
                epsilon.as_f64()
            )));
        }
        if epsilon == F::zero() {
            return Ok(self.clone());
        }
        let lo = epsilon;
        let hi = F::one() - epsilon;
        let mut knots: Vec<(F, F)> = Vec::with_capacity(DEFAULT_GRID_SIZE + 4);
        let mut jumps = Vec::new();
        knots.push((lo, self.eval(lo)));
        for u in midpoints(DEFAULT_GRID_SIZE) {
            if u <= lo || u >= hi {
                continue;
            }
            // carry base jumps across as duplicated knots
            for &t in &self.jump_points {
                if t > lo && t < hi && t > knots.last().map(|k| k.0).unwrap_or(lo) && t < u {
                    knots.push((t, left_limit(self, t)));
                    knots.push((t, self.eval(t + jump_eps::<F>())));
                    jumps.push(t);
                }
            }
            knots.push((u, self.eval(u)));
        }
        knots.push((hi, self.eval(hi)));
        let label = format!("flattened:{}", self.label);
        let mut out = Self::from_grid(knots, jumps, &label);
        out.kind = ScoreKind::Flattened {
            base: self.label.clone(),
            epsilon,
        };
        Ok(out)
    }

    /// The curvature constant: the integral of f(F^{-1}(u)) with respect to
    /// d phi(u). Interior segments contribute slope-weighted integrals of
    /// the density-quantile composition; duplicated knots contribute jump
    /// masses. Positive values certify local convexity of the population
    /// loss for this score/noise pairing.
    pub fn c_h(&self, density: &dyn NoiseDensity<F>) -> Result<F> {
        let g = |u: F| {
            let uu = clamp_unit(u);
            density.pdf(density.quantile(uu))
        };
        let mut total = F::zero();
        let mut g_right: Option<F> = None;
        for w in self.grid.windows(2) {
            let (ua, va) = w[0];
            let (ub, vb) = w[1];
            if ub == ua {
                total += (vb - va) * g(ua);
                continue;
            }
            let slope = (vb - va) / (ub - ua);
            if slope == F::zero() {
                g_right = None;
                continue;
            }
            let ga = match g_right {
                Some(v) => v,
                None => g(ua),
            };
            let gb = g(ub);
            let gm = g((ua + ub) * F::cast(0.5));
            let seg = (ub - ua) / F::cast(6.0) * (ga + F::cast(4.0) * gm + gb);
            total += slope * seg;
            g_right = Some(gb);
        }
        if !total.is_finite() {
            return Err(Error::Numeric(
                "curvature-constant quadrature did not converge".into(),
            ));
        }
        Ok(total)
    }
}

/// The minimum-variance score generator for a known noise density:
/// -(f'/f)(F^{-1}(u)) / sqrt(I(f)), tabulated and normalized.
pub fn optimal_generator<F: Float>(density: &dyn NoiseDensity<F>) -> Result<ScoreGenerator<F>> {
    let info = fisher_information(density)?;
    let scale = info.sqrt().recip();
    let grid: Vec<(F, F)> = midpoints(DEFAULT_GRID_SIZE)
        .map(|u| {
            let x = density.quantile(u);
            (u, -density.log_pdf_derivative(x) * scale)
        })
        .collect();
    let label = format!("optimal:{}", density.name());
    ScoreGenerator::from_grid(grid, vec![], &label).normalize()
}

fn jump_eps<F: Float>() -> F {
    F::cast(1e-12)
}

fn left_limit<F: Float>(gen: &ScoreGenerator<F>, t: F) -> F {
    gen.eval(t - jump_eps::<F>())
}

fn clamp_unit<F: Float>(u: F) -> F {
    let eps = F::cast(1e-12);
    u.max(eps).min(F::one() - eps)
}

fn midpoints<F: Float>(m: usize) -> impl Iterator<Item = F> {
    let denom = F::cast_usize(m);
    (1..=m).map(move |j| (F::cast_usize(j) - F::cast(0.5)) / denom)
}

/// Midpoint grid evaluation of a closed-form kind, with duplicated knots at
/// the declared jumps.
fn tabulate_closed_form<F: Float>(kind: &ScoreKind<F>, jumps: &[F], m: usize) -> Vec<(F, F)> {
    let eval = |u: F| kind.closed_form(u).expect("closed-form kind");
    let mut knots: Vec<(F, F)> = Vec::with_capacity(m + 2 * jumps.len());
    let mut remaining: Vec<F> = jumps.to_vec();
    remaining.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut jump_iter = remaining.into_iter().peekable();
    for u in midpoints::<F>(m) {
        while let Some(&t) = jump_iter.peek() {
            if t < u {
                knots.push((t, eval(t - jump_eps::<F>())));
                knots.push((t, eval(t + jump_eps::<F>())));
                jump_iter.next();
            } else {
                break;
            }
        }
        knots.push((u, eval(u)));
    }
    for t in jump_iter {
        knots.push((t, eval(t - jump_eps::<F>())));
        knots.push((t, eval(t + jump_eps::<F>())));
    }
    knots
}

/// Piecewise-linear interpolation with constant extension; at a duplicated
/// knot the right-hand value wins.
fn interpolate<F: Float>(grid: &[(F, F)], u: F) -> F {
    debug_assert!(!grid.is_empty());
    if u <= grid[0].0 {
        return grid[0].1;
    }
    if u >= grid[grid.len() - 1].0 {
        return grid[grid.len() - 1].1;
    }
    // binary search for the first knot with knot.0 >= u
    let mut lo = 0usize;
    let mut hi = grid.len() - 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if grid[mid].0 < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (ua, va) = grid[lo];
    let (ub, vb) = grid[hi];
    if ub == ua || u == ub {
        return vb;
    }
    va + (vb - va) * (u - ua) / (ub - ua)
}

/// Discrete scores assigned to ranks 1..=n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable<F> {
    scores: Vec<F>,
}

impl<F: Float> ScoreTable<F> {
    /// Validate finiteness and the zero-sum contract.
    pub fn new(scores: Vec<F>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::InvalidParameter("empty score table".into()));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidInput("non-finite score".into()));
        }
        let n = F::cast_usize(scores.len());
        let sum: F = scores.iter().copied().sum();
        if sum.abs() > n * F::cast(MEAN_TOL) {
            return Err(Error::InvalidParameter(format!(
                "scores must sum to zero (got {})",
                sum.as_f64()
            )));
        }
        Ok(Self { scores })
    }

    /// Recenter arbitrary scores to sum zero, then validate.
    pub fn from_raw(mut scores: Vec<F>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::InvalidParameter("empty score table".into()));
        }
        let mean = scores.iter().copied().sum::<F>() / F::cast_usize(scores.len());
        for s in &mut scores {
            *s -= mean;
        }
        Self::new(scores)
    }

    pub fn n(&self) -> usize {
        self.scores.len()
    }

    /// Score for a 1-based rank.
    pub fn score(&self, rank: usize) -> F {
        self.scores[rank - 1]
    }

    pub fn scores(&self) -> &[F] {
        &self.scores
    }

    pub fn as_array(&self) -> Array1<F> {
        Array1::from_vec(self.scores.clone())
    }

    pub fn bound(&self) -> F {
        self.scores.iter().map(|s| s.abs()).fold(F::zero(), F::max)
    }

    /// True when scores are nondecreasing in rank; this is exactly the
    /// condition under which the rank loss is convex.
    pub fn is_monotone(&self) -> bool {
        self.scores.windows(2).all(|w| w[1] >= w[0])
    }
}
