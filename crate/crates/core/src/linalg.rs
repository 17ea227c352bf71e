//! Dense symmetric positive definite solves for the IRLS inner step.

use crate::scalar::Scalar;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LinalgError {
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch: matrix {n}x{n}, rhs {rhs}")]
    DimensionMismatch { n: usize, rhs: usize },
}

/// Cholesky factor L (lower triangular, row-major) of a symmetric positive
/// definite matrix `a` (row-major, n*n).
fn cholesky<S: Scalar>(a: &[S], n: usize) -> Result<Vec<S>, LinalgError> {
    let mut l = vec![S::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum = sum - l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= S::zero() || !sum.is_finite() {
                    return Err(LinalgError::NotPositiveDefinite);
                }
                l[i * n + j] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Ok(l)
}

fn solve_cholesky<S: Scalar>(l: &[S], rhs: &[S], n: usize) -> Vec<S> {
    // L y = rhs
    let mut y = vec![S::zero(); n];
    for i in 0..n {
        let mut sum = rhs[i];
        for k in 0..i {
            sum = sum - l[i * n + k] * y[k];
        }
        y[i] = sum / l[i * n + i];
    }
    // L^T x = y
    let mut x = vec![S::zero(); n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in (i + 1)..n {
            sum = sum - l[k * n + i] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    x
}

/// Solve `a x = rhs` for symmetric positive definite `a` (row-major n*n).
pub fn solve_spd<S: Scalar>(a: &[S], rhs: &[S]) -> Result<Vec<S>, LinalgError> {
    let n = rhs.len();
    if a.len() != n * n {
        return Err(LinalgError::DimensionMismatch { n, rhs: rhs.len() });
    }
    let l = cholesky(a, n)?;
    Ok(solve_cholesky(&l, rhs, n))
}

/// Solve `a x = rhs`, retrying once with `jitter * (1 + max|diag|)` added to
/// the diagonal when the factorization fails. Semidefinite systems (collinear
/// or empty columns) become solvable; the added coefficients stay at the
/// jitter scale.
pub fn solve_spd_with_jitter<S: Scalar>(
    a: &[S],
    rhs: &[S],
    jitter: S,
) -> Result<Vec<S>, LinalgError> {
    match solve_spd(a, rhs) {
        Ok(x) => Ok(x),
        Err(e @ LinalgError::DimensionMismatch { .. }) => Err(e),
        Err(LinalgError::NotPositiveDefinite) => {
            let n = rhs.len();
            let mut max_diag = S::zero();
            for i in 0..n {
                max_diag = max_diag.max(a[i * n + i].abs());
            }
            let eps = jitter * (S::one() + max_diag);
            let mut aj = a.to_vec();
            for i in 0..n {
                aj[i * n + i] = aj[i * n + i] + eps;
            }
            solve_spd(&aj, rhs)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn residual_norm(a: &[f64], x: &[f64], b: &[f64]) -> f64 {
        let n = b.len();
        let mut max = 0.0f64;
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                s += a[i * n + j] * x[j];
            }
            max = max.max((s - b[i]).abs());
        }
        max
    }

    #[test]
    fn identity_returns_rhs() {
        let a = vec![1.0, 0.0, 0.0, 1.0];
        let b = vec![3.5, -2.0];
        assert_eq!(solve_spd(&a, &b).unwrap(), b);
    }

    #[test]
    fn diagonal_scaling() {
        let a = vec![4.0];
        let b = vec![8.0];
        assert_eq!(solve_spd(&a, &b).unwrap(), vec![2.0]);
    }

    #[test]
    fn random_spd_meets_residual_bound() {
        // A = M^T M + I is SPD; bound from the solver contract.
        let mut rng = crate::rng::substream(7, "linalg-test");
        let n = 6;
        let mut m = vec![0.0f64; n * n];
        for v in m.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let mut a = vec![0.0f64; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += m[k * n + i] * m[k * n + j];
                }
                a[i * n + j] = s + if i == j { 1.0 } else { 0.0 };
            }
        }
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let x = solve_spd(&a, &b).unwrap();
        let bnorm: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(residual_norm(&a, &x, &b) <= 1e-8 * (1.0 + bnorm));
    }

    #[test]
    fn singular_fails_without_jitter_and_solves_with_it() {
        // Rank-1 matrix.
        let a = vec![1.0, 1.0, 1.0, 1.0];
        let b = vec![1.0, 1.0];
        assert_eq!(solve_spd(&a, &b), Err(LinalgError::NotPositiveDefinite));
        let x: Vec<f64> = solve_spd_with_jitter(&a, &b, 1e-10).unwrap();
        assert!(x.iter().all(|v| v.is_finite()));
    }
}
