//! Quadrature helpers: trapezoid rules on generator grids and adaptive
//! Simpson for real-line integrals.

use crate::error::{Error, Result};
use crate::float::Float;

/// Trapezoid integral over [0,1] of a piecewise-linear function given by
/// knots, extended constantly outside the knot range. Zero-width segments
/// (duplicated knots at jump points) contribute nothing.
pub fn trapezoid_unit<F: Float>(knots: &[(F, F)]) -> F {
    if knots.is_empty() {
        return F::zero();
    }
    let half = F::cast(0.5);
    let first = knots[0];
    let last = knots[knots.len() - 1];
    let mut total = first.1 * first.0 + last.1 * (F::one() - last.0);
    for w in knots.windows(2) {
        total += (w[1].0 - w[0].0) * (w[0].1 + w[1].1) * half;
    }
    total
}

/// Same rule applied to a transform of the knot values.
pub fn trapezoid_unit_map<F: Float>(knots: &[(F, F)], f: impl Fn(F) -> F) -> F {
    if knots.is_empty() {
        return F::zero();
    }
    let half = F::cast(0.5);
    let first = knots[0];
    let last = knots[knots.len() - 1];
    let mut total = f(first.1) * first.0 + f(last.1) * (F::one() - last.0);
    for w in knots.windows(2) {
        total += (w[1].0 - w[0].0) * (f(w[0].1) + f(w[1].1)) * half;
    }
    total
}

/// Adaptive Simpson on [a, b] with absolute+relative tolerance control.
pub fn adaptive_simpson<F: Float>(f: &impl Fn(F) -> F, a: F, b: F, tol: F) -> Result<F> {
    let c = (a + b) * F::cast(0.5);
    let fa = f(a);
    let fb = f(b);
    let fc = f(c);
    let whole = simpson(a, b, fa, fc, fb);
    let v = simpson_recurse(f, a, b, fa, fc, fb, whole, tol, 24);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric(format!(
            "adaptive quadrature produced non-finite value on [{}, {}]",
            a.as_f64(),
            b.as_f64()
        )))
    }
}

fn simpson<F: Float>(a: F, b: F, fa: F, fc: F, fb: F) -> F {
    (b - a) / F::cast(6.0) * (fa + F::cast(4.0) * fc + fb)
}

#[allow(clippy::too_many_arguments)]
fn simpson_recurse<F: Float>(
    f: &impl Fn(F) -> F,
    a: F,
    b: F,
    fa: F,
    fc: F,
    fb: F,
    whole: F,
    tol: F,
    depth: usize,
) -> F {
    let c = (a + b) * F::cast(0.5);
    let d = (a + c) * F::cast(0.5);
    let e = (c + b) * F::cast(0.5);
    let fd = f(d);
    let fe = f(e);
    let left = simpson(a, c, fa, fd, fc);
    let right = simpson(c, b, fc, fe, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= F::cast(15.0) * tol {
        return left + right + delta / F::cast(15.0);
    }
    // keep the per-node tolerance above the rounding noise of the local
    // sums, otherwise smooth integrands recurse to full depth
    let noise_floor = F::epsilon() * (left.abs() + right.abs() + whole.abs());
    let half_tol = (tol * F::cast(0.5)).max(noise_floor);
    simpson_recurse(f, a, c, fa, fd, fc, left, half_tol, depth - 1)
        + simpson_recurse(f, c, b, fc, fe, fb, right, half_tol, depth - 1)
}

/// Integral of `f` over the whole real line by dyadic panels outward from
/// zero, stopping once panels stop contributing. Panels whose contribution
/// grows three times in a row past |x| = 8 are treated as divergent.
pub fn integrate_real_line<F: Float>(f: &impl Fn(F) -> F, cutoff: F, rel_tol: F) -> Result<F> {
    let mut total = adaptive_simpson(f, -F::one(), F::one(), rel_tol)?;
    for sign in [F::one(), -F::one()] {
        let mut inner = F::one();
        let mut prev = F::infinity();
        let mut growth = 0usize;
        loop {
            let outer = inner * F::cast(2.0);
            let (a, b) = if sign > F::zero() {
                (inner, outer)
            } else {
                (-outer, -inner)
            };
            let panel = adaptive_simpson(f, a, b, rel_tol * total.abs().max(F::one()))?;
            total += panel;
            if panel.abs() > prev && outer > F::cast(8.0) {
                growth += 1;
                if growth >= 3 {
                    return Err(Error::IllPosedDensity(
                        "tail contributions keep growing; integral looks divergent".into(),
                    ));
                }
            } else {
                growth = 0;
            }
            prev = panel.abs();
            if outer >= cutoff {
                break;
            }
            // converged well before the cutoff
            if panel.abs() <= rel_tol * total.abs() && outer > F::cast(64.0) {
                break;
            }
            inner = outer;
        }
    }
    Ok(total)
}
