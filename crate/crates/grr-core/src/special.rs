//! Error function and standard-normal helpers.
//!
//! `erf` combines the confluent-hypergeometric series (all positive terms, so
//! no cancellation) for small arguments with a Lentz continued fraction for
//! the tail. Accuracy is close to machine precision for f64; see the tests
//! against externally computed references.

use crate::float::Float;

/// erf(x) for any finite x.
pub fn erf<F: Float>(x: F) -> F {
    if x == F::zero() {
        return F::zero();
    }
    let ax = x.abs();
    if ax < F::cast(3.0) {
        erf_series(x)
    } else {
        let tail = erfc_cf(ax);
        let v = F::one() - tail;
        if x > F::zero() {
            v
        } else {
            -v
        }
    }
}

/// erfc(x) = 1 - erf(x), accurate in the upper tail.
pub fn erfc<F: Float>(x: F) -> F {
    if x < F::zero() {
        return F::cast(2.0) - erfc(-x);
    }
    if x < F::cast(3.0) {
        F::one() - erf_series(x)
    } else {
        erfc_cf(x)
    }
}

/// erf via e^{-x^2} * 2x/sqrt(pi) * M(1, 3/2, x^2); every term positive.
fn erf_series<F: Float>(x: F) -> F {
    let x2 = x * x;
    let mut term = F::one();
    let mut sum = F::one();
    let mut n = F::one();
    let half = F::cast(0.5);
    for _ in 0..200 {
        term = term * x2 / (n + half);
        sum += term;
        if term < sum * F::epsilon() {
            break;
        }
        n += F::one();
    }
    let two_over_sqrt_pi = F::cast(2.0) / F::PI().sqrt();
    two_over_sqrt_pi * x * (-x2).exp() * sum
}

/// Upper-tail continued fraction, modified Lentz.
fn erfc_cf<F: Float>(x: F) -> F {
    let x2 = x * x;
    if x2 > -F::min_positive_value().ln() {
        return F::zero(); // exp(-x^2) underflows
    }
    let tiny = F::cast(1e-30);
    let mut f = x;
    let mut c = x;
    let mut d = F::zero();
    let mut k = F::one();
    let half = F::cast(0.5);
    for _ in 0..300 {
        let a = half * k;
        // continued fraction: x + (1/2)/(x + 1/(x + (3/2)/(x + ...)))
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = d.recip();
        let delta = c * d;
        f = f * delta;
        if (delta - F::one()).abs() < F::epsilon() {
            break;
        }
        k += F::one();
    }
    (-x2).exp() / (F::PI().sqrt() * f)
}

/// Standard normal density.
pub fn normal_pdf<F: Float>(x: F) -> F {
    let inv_sqrt_2pi = F::cast(0.398_942_280_401_432_7);
    inv_sqrt_2pi * (-x * x / F::cast(2.0)).exp()
}

/// Standard normal distribution function.
pub fn normal_cdf<F: Float>(x: F) -> F {
    let half = F::cast(0.5);
    half * erfc(-x / F::SQRT_2())
}

/// Standard normal quantile. Solved in the lower tail where the cdf keeps
/// full relative precision; the complement 1-u is exact for u >= 1/2.
pub fn normal_quantile<F: Float>(u: F) -> F {
    assert!(
        u > F::zero() && u < F::one(),
        "normal_quantile requires u in (0,1)"
    );
    let half = F::cast(0.5);
    if u == half {
        return F::zero();
    }
    if u > half {
        -lower_tail_quantile(F::one() - u)
    } else {
        lower_tail_quantile(u)
    }
}

/// Solve Phi(x) = q for q in (0, 1/2); bracketed Newton on the erfc side.
fn lower_tail_quantile<F: Float>(q: F) -> F {
    let half = F::cast(0.5);
    let mut lo = F::cast(-45.0);
    let mut hi = F::zero();
    let mut x = -(-F::cast(2.0) * q.ln()).sqrt();
    for _ in 0..80 {
        let fx = normal_cdf(x) - q;
        if fx > F::zero() {
            hi = x;
        } else {
            lo = x;
        }
        let dfx = normal_pdf(x);
        let mut next = x - fx / dfx;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = (lo + hi) * half;
        }
        if (next - x).abs() <= x.abs().max(F::one()) * F::epsilon() * F::cast(2.0) {
            return next;
        }
        x = next;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    const ERF_REFS: &[(f64, f64)] = &[
        (0.01, 0.011283415555849618),
        (0.1, 0.1124629160182849),
        (0.25, 0.27632639016823696),
        (0.46875, 0.49261347321793797),
        (0.5, 0.5204998778130465),
        (0.75, 0.7111556336535151),
        (1.0, 0.8427007929497149),
        (1.5, 0.9661051464753108),
        (2.0, 0.9953222650189527),
        (3.0, 0.9999779095030014),
        (4.0, 0.9999999845827421),
        (5.0, 0.9999999999984626),
    ];

    const ERFC_REFS: &[(f64, f64)] = &[
        (0.5, 0.4795001221869535),
        (1.0, 0.15729920705028513),
        (2.0, 0.004677734981047266),
        (4.0, 1.541725790028002e-8),
        (6.0, 2.1519736712498913e-17),
        (10.0, 2.088487583762545e-45),
        (15.0, 7.212994172451207e-100),
        (26.5, 2.2109076642637343e-307),
    ];

    const QUANTILE_REFS: &[(f64, f64)] = &[
        (1e-8, -5.612001244174789),
        (0.0001, -3.7190164854556804),
        (0.001, -3.0902323061678136),
        (0.025, -1.9599639845400543),
        (0.1, -1.2815515655446004),
        (0.3, -0.5244005127080408),
        (0.5, 0.0),
        (0.7, 0.5244005127080407),
        (0.975, 1.9599639845400538),
        (0.999, 3.090232306167813),
        (0.99999999, 5.612001243305505),
    ];

    #[test]
    fn erf_matches_references() {
        for &(x, want) in ERF_REFS {
            let got = erf(x);
            assert!(
                (got - want).abs() <= 1e-15 + want.abs() * 1e-14,
                "erf({x}) = {got}, want {want}"
            );
            assert!((erf(-x) + want).abs() <= 1e-15 + want.abs() * 1e-14);
        }
    }

    #[test]
    fn erfc_matches_references_in_the_tail() {
        for &(x, want) in ERFC_REFS {
            let got = erfc(x);
            assert!(
                (got / want - 1.0).abs() <= 1e-13,
                "erfc({x}) = {got}, want {want}"
            );
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &(u, want) in QUANTILE_REFS {
            let got = normal_quantile(u);
            assert!(
                (got - want).abs() <= 1e-12 + want.abs() * 1e-12,
                "quantile({u}) = {got}, want {want}"
            );
        }
        let mut u = 0.0005f64;
        while u < 1.0 {
            let x = normal_quantile(u);
            assert!((normal_cdf(x) - u).abs() < 1e-14);
            u += 0.0005;
        }
    }

    #[test]
    fn erf_works_for_f32_too() {
        let got = erf(1.0f32);
        assert!((got - 0.842_700_8f32).abs() < 1e-6);
    }
}
