//! Noise densities: pdf, cdf, quantile, and the logarithmic density
//! derivative, plus Fisher information. These feed optimal-score
//! construction, asymptotic-variance formulas, and the simulation lab.

use crate::error::{Error, Result};
use crate::float::Float;
use crate::quad::integrate_real_line;
use crate::special::{normal_cdf, normal_pdf, normal_quantile};

/// A univariate noise distribution with everywhere-positive density.
pub trait NoiseDensity<F: Float>: Send + Sync {
    fn pdf(&self, x: F) -> F;
    fn cdf(&self, x: F) -> F;
    fn quantile(&self, u: F) -> F;

    /// f'(x)/f(x). The default is a central difference of log f.
    fn log_pdf_derivative(&self, x: F) -> F {
        let h = F::cast(1e-5) * (F::one() + x.abs());
        ((self.pdf(x + h)).ln() - (self.pdf(x - h)).ln()) / (F::cast(2.0) * h)
    }

    fn name(&self) -> &'static str;
}

/// Standard normal.
#[derive(Debug, Clone, Copy, Default)]
pub struct Normal;

impl<F: Float> NoiseDensity<F> for Normal {
    fn pdf(&self, x: F) -> F {
        normal_pdf(x)
    }
    fn cdf(&self, x: F) -> F {
        normal_cdf(x)
    }
    fn quantile(&self, u: F) -> F {
        normal_quantile(u)
    }
    fn log_pdf_derivative(&self, x: F) -> F {
        -x
    }
    fn name(&self) -> &'static str {
        "normal"
    }
}

/// Laplace with unit scale: f(x) = exp(-|x|)/2.
#[derive(Debug, Clone, Copy, Default)]
pub struct Laplace;

impl<F: Float> NoiseDensity<F> for Laplace {
    fn pdf(&self, x: F) -> F {
        (-x.abs()).exp() * F::cast(0.5)
    }
    fn cdf(&self, x: F) -> F {
        let half = F::cast(0.5);
        if x < F::zero() {
            half * x.exp()
        } else {
            F::one() - half * (-x).exp()
        }
    }
    fn quantile(&self, u: F) -> F {
        let half = F::cast(0.5);
        let two = F::cast(2.0);
        if u < half {
            (two * u).ln()
        } else {
            -(two * (F::one() - u)).ln()
        }
    }
    fn log_pdf_derivative(&self, x: F) -> F {
        if x > F::zero() {
            -F::one()
        } else if x < F::zero() {
            F::one()
        } else {
            F::zero()
        }
    }
    fn name(&self) -> &'static str {
        "laplace"
    }
}

/// Standard Cauchy.
#[derive(Debug, Clone, Copy, Default)]
pub struct Cauchy;

impl<F: Float> NoiseDensity<F> for Cauchy {
    fn pdf(&self, x: F) -> F {
        (F::PI() * (F::one() + x * x)).recip()
    }
    fn cdf(&self, x: F) -> F {
        F::cast(0.5) + x.atan() / F::PI()
    }
    fn quantile(&self, u: F) -> F {
        (F::PI() * (u - F::cast(0.5))).tan()
    }
    fn log_pdf_derivative(&self, x: F) -> F {
        -F::cast(2.0) * x / (F::one() + x * x)
    }
    fn name(&self) -> &'static str {
        "cauchy"
    }
}

/// Two-component normal location mixture with common scale.
#[derive(Debug, Clone, Copy)]
pub struct GaussianMixture<F> {
    pub mean_low: F,
    pub mean_high: F,
    pub sd: F,
    pub weight_low: F,
}

impl<F: Float> GaussianMixture<F> {
    pub fn new(mean_low: F, mean_high: F, sd: F, weight_low: F) -> Self {
        Self {
            mean_low,
            mean_high,
            sd,
            weight_low,
        }
    }

    /// Equal-weight mixture at +/- 3/2 with sd 1/10.
    pub fn bimodal_narrow() -> Self {
        Self::new(
            F::cast(-1.5),
            F::cast(1.5),
            F::cast(0.1),
            F::cast(0.5),
        )
    }

    /// Equal-weight mixture at +/- 3/2 with unit component sd.
    pub fn bimodal_wide() -> Self {
        Self::new(F::cast(-1.5), F::cast(1.5), F::one(), F::cast(0.5))
    }

    fn weights(&self) -> (F, F) {
        (self.weight_low, F::one() - self.weight_low)
    }
}

impl<F: Float> NoiseDensity<F> for GaussianMixture<F> {
    fn pdf(&self, x: F) -> F {
        let (w1, w2) = self.weights();
        let z1 = (x - self.mean_low) / self.sd;
        let z2 = (x - self.mean_high) / self.sd;
        (w1 * normal_pdf(z1) + w2 * normal_pdf(z2)) / self.sd
    }
    fn cdf(&self, x: F) -> F {
        let (w1, w2) = self.weights();
        w1 * normal_cdf((x - self.mean_low) / self.sd) + w2 * normal_cdf((x - self.mean_high) / self.sd)
    }
    fn quantile(&self, u: F) -> F {
        invert_cdf(self, u, self.mean_low - self.sd * F::cast(42.0), self.mean_high + self.sd * F::cast(42.0))
    }
    fn log_pdf_derivative(&self, x: F) -> F {
        // component-weighted slope, computed with the shared Gaussian factor
        // cancelled in log space for stability far from either center
        let (w1, w2) = self.weights();
        let z1 = (x - self.mean_low) / self.sd;
        let z2 = (x - self.mean_high) / self.sd;
        let e1 = -z1 * z1 * F::cast(0.5);
        let e2 = -z2 * z2 * F::cast(0.5);
        let m = e1.max(e2);
        let p1 = w1 * (e1 - m).exp();
        let p2 = w2 * (e2 - m).exp();
        let slope1 = -z1 / self.sd;
        let slope2 = -z2 / self.sd;
        (p1 * slope1 + p2 * slope2) / (p1 + p2)
    }
    fn name(&self) -> &'static str {
        "gaussian-mixture"
    }
}

/// Uniform[-a, a] convolved with centered normal noise of sd `sigma`.
#[derive(Debug, Clone, Copy)]
pub struct SmoothedUniform<F> {
    pub half_width: F,
    pub sigma: F,
}

impl<F: Float> SmoothedUniform<F> {
    pub fn new(half_width: F, sigma: F) -> Self {
        Self { half_width, sigma }
    }

    /// Unif[-1,1] + 0.1 N(0,1).
    pub fn standard() -> Self {
        Self::new(F::one(), F::cast(0.1))
    }
}

impl<F: Float> SmoothedUniform<F> {
    fn edges(&self, x: F) -> (F, F) {
        (
            (x + self.half_width) / self.sigma,
            (x - self.half_width) / self.sigma,
        )
    }

    /// Phi(zp) - Phi(zm) without cancellation when both tails saturate.
    fn window_mass(&self, x: F) -> F {
        let (zp, zm) = self.edges(x);
        if zp + zm > F::zero() {
            normal_cdf(-zm) - normal_cdf(-zp)
        } else {
            normal_cdf(zp) - normal_cdf(zm)
        }
    }
}

impl<F: Float> NoiseDensity<F> for SmoothedUniform<F> {
    fn pdf(&self, x: F) -> F {
        self.window_mass(x) / (F::cast(2.0) * self.half_width)
    }
    fn cdf(&self, x: F) -> F {
        // antiderivative of Phi is z Phi(z) + phi(z); the z > 0 branch is
        // written as z plus a small correction so the difference of two
        // near-linear values stays accurate
        let h = |z: F| {
            if z > F::zero() {
                z + (normal_pdf(z) - z * normal_cdf(-z))
            } else {
                z * normal_cdf(z) + normal_pdf(z)
            }
        };
        let (zp, zm) = self.edges(x);
        (self.sigma / (F::cast(2.0) * self.half_width)) * (h(zp) - h(zm))
    }
    fn quantile(&self, u: F) -> F {
        let span = self.half_width + self.sigma * F::cast(42.0);
        invert_cdf(self, u, -span, span)
    }
    fn log_pdf_derivative(&self, x: F) -> F {
        let (zp, zm) = self.edges(x);
        let num = (normal_pdf(zp) - normal_pdf(zm)) / self.sigma;
        let den = self.window_mass(x);
        if den <= F::zero() {
            // deep in a tail the window mass underflows; fall back to the
            // dominant edge's Gaussian slope
            return if x > F::zero() { -zm / self.sigma } else { -zp / self.sigma };
        }
        num / den
    }
    fn name(&self) -> &'static str {
        "smoothed-uniform"
    }
}

/// Invert a continuous strictly increasing cdf by bisection with a Newton
/// polish. The bracket must contain the solution.
fn invert_cdf<F: Float, D: NoiseDensity<F> + ?Sized>(density: &D, u: F, mut lo: F, mut hi: F) -> F {
    assert!(u > F::zero() && u < F::one(), "quantile needs u in (0,1)");
    let half = F::cast(0.5);
    let mut x = (lo + hi) * half;
    for _ in 0..200 {
        let c = density.cdf(x) - u;
        if c > F::zero() {
            hi = x;
        } else {
            lo = x;
        }
        let d = density.pdf(x);
        let mut next = if d > F::zero() { x - c / d } else { (lo + hi) * half };
        if !(next > lo && next < hi) || !next.is_finite() {
            next = (lo + hi) * half;
        }
        if (next - x).abs() <= (x.abs().max(F::one())) * F::epsilon() * F::cast(4.0) {
            return next;
        }
        x = next;
    }
    x
}

/// Fisher information for location: E[(f'/f)^2].
pub fn fisher_information<F: Float>(density: &dyn NoiseDensity<F>) -> Result<F> {
    let integrand = |x: F| {
        let s = density.log_pdf_derivative(x);
        s * s * density.pdf(x)
    };
    // truncate where the density has decayed to numerical irrelevance
    let mut cutoff = F::one();
    while density.pdf(cutoff) > F::cast(1e-12) || density.pdf(-cutoff) > F::cast(1e-12) {
        cutoff = cutoff * F::cast(2.0);
        if cutoff > F::cast(1e9) {
            break;
        }
    }
    let info = integrate_real_line(&integrand, cutoff, F::cast(1e-9))?;
    if !info.is_finite() || info <= F::zero() {
        return Err(Error::IllPosedDensity(format!(
            "Fisher information for {} is not finite and positive",
            density.name()
        )));
    }
    Ok(info)
}
