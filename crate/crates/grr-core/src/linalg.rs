//! Small dense symmetric linear algebra: Cholesky solves, cyclic Jacobi
//! eigendecomposition, and the symmetric square root. Dimensions here are
//! design dimensions (p in the tens), so O(p^3) with no blocking is fine.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::float::Float;

/// Lower Cholesky factor of an SPD matrix.
pub fn cholesky<F: Float>(a: &Array2<F>) -> Result<Array2<F>> {
    let n = check_square(a)?;
    let mut l = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if s <= F::zero() {
                    return Err(Error::Numeric(
                        "matrix is not positive definite".to_string(),
                    ));
                }
                l[(i, j)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Ok(l)
}

/// Solve A x = b for SPD A via Cholesky, guarding against ill conditioning.
pub fn spd_solve<F: Float>(a: &Array2<F>, b: &Array1<F>) -> Result<Array1<F>> {
    let n = check_square(a)?;
    if b.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {n}x{n} but rhs has length {}",
            b.len()
        )));
    }
    let (eigvals, _) = sym_eigen(a)?;
    let max = eigvals.iter().cloned().fold(F::neg_infinity(), F::max);
    let min = eigvals.iter().cloned().fold(F::infinity(), F::min);
    if min <= F::zero() || max / min > F::cast(1e12) {
        return Err(Error::Numeric(format!(
            "matrix conditioning out of range (eigenvalues in [{}, {}])",
            min.as_f64(),
            max.as_f64()
        )));
    }
    let l = cholesky(a)?;
    // forward then backward substitution
    let mut y = b.clone();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[(k, i)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    Ok(y)
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns (eigenvalues, eigenvectors as columns).
pub fn sym_eigen<F: Float>(a: &Array2<F>) -> Result<(Array1<F>, Array2<F>)> {
    let n = check_square(a)?;
    let mut m = a.clone();
    let mut v: Array2<F> = Array2::eye(n);
    let tol = F::epsilon() * F::cast(16.0);
    for _sweep in 0..64 {
        let mut off = F::zero();
        for i in 0..n {
            for j in i + 1..n {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        let scale: F = (0..n).map(|i| m[(i, i)] * m[(i, i)]).sum();
        if off <= tol * tol * scale.max(F::one()) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == F::zero() {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (F::cast(2.0) * apq);
                let t = {
                    let s = if theta >= F::zero() {
                        F::one()
                    } else {
                        -F::one()
                    };
                    s / (theta.abs() + (theta * theta + F::one()).sqrt())
                };
                let c = (t * t + F::one()).sqrt().recip();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let eig = Array1::from_iter((0..n).map(|i| m[(i, i)]));
    Ok((eig, v))
}

/// Symmetric square root of an SPD matrix.
pub fn sym_sqrt<F: Float>(a: &Array2<F>) -> Result<Array2<F>> {
    let n = check_square(a)?;
    let (eig, v) = sym_eigen(a)?;
    for &lam in eig.iter() {
        if lam <= F::zero() {
            return Err(Error::Numeric(
                "matrix has non-positive eigenvalue; square root undefined".to_string(),
            ));
        }
    }
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut s = F::zero();
            for k in 0..n {
                s += v[(i, k)] * eig[k].sqrt() * v[(j, k)];
            }
            out[(i, j)] = s;
        }
    }
    Ok(out)
}

fn check_square<F: Float>(a: &Array2<F>) -> Result<usize> {
    let (r, c) = a.dim();
    if r != c {
        return Err(Error::DimensionMismatch(format!("matrix is {r}x{c}")));
    }
    Ok(r)
}

/// AR(1)-structured correlation matrix with entries rho^|j-k|.
pub fn ar1_matrix<F: Float>(p: usize, rho: F) -> Array2<F> {
    let mut m = Array2::zeros((p, p));
    for j in 0..p {
        for k in 0..p {
            let d = j.abs_diff(k) as i32;
            m[(j, k)] = rho.powi(d);
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn spd_solve_matches_hand_inverse() {
        let a: ndarray::Array2<f64> = array![[1.0, 0.7], [0.7, 1.0]];
        let b = array![1.0, 0.0];
        let x = spd_solve(&a, &b).unwrap();
        // inverse of [[1,.7],[.7,1]] is 1/0.51 [[1,-.7],[-.7,1]]
        assert!((x[0] - 1.0 / 0.51).abs() < 1e-12);
        assert!((x[1] + 0.7 / 0.51).abs() < 1e-12);
    }

    #[test]
    fn sym_sqrt_squares_back() {
        let a = ar1_matrix::<f64>(5, 0.7);
        let s = sym_sqrt(&a).unwrap();
        let back = s.dot(&s);
        for ((i, j), &v) in back.indexed_iter() {
            assert!((v - a[(i, j)]).abs() < 1e-12, "mismatch at ({i},{j})");
        }
    }

    #[test]
    fn eigen_reproduces_matrix() {
        let a = ar1_matrix::<f64>(4, 0.3);
        let (eig, v) = sym_eigen(&a).unwrap();
        for col in 0..4 {
            let vc = v.column(col).to_owned();
            let av = a.dot(&vc);
            for i in 0..4 {
                assert!((av[i] - eig[col] * vc[i]).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn non_spd_matrices_are_rejected() {
        let a = array![[1.0, 2.0], [2.0, 1.0]]; // indefinite
        assert!(cholesky(&a).is_err());
        let near_singular = array![[1.0, 1.0], [1.0, 1.0 + 1e-15]];
        assert!(spd_solve(&near_singular, &array![1.0, 0.0]).is_err());
    }
}
