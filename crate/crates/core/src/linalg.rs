//! Dense helpers for the initialization heuristics: a Cholesky solve for
//! small symmetric positive-definite systems and a ridge least-squares fit.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Solve `m x = b` for symmetric positive-definite `m` (row-major, n x n)
/// by Cholesky decomposition.
pub fn solve_spd<F: Real>(m: &[F], b: &[F], n: usize) -> Result<Vec<F>> {
    debug_assert_eq!(m.len(), n * n);
    debug_assert_eq!(b.len(), n);
    // lower-triangular factor, row-major
    let mut l = vec![F::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = m[i * n + j];
            for k in 0..j {
                sum = sum - l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(sum > F::zero()) {
                    return Err(Error::numerical(format!(
                        "matrix not positive definite at pivot {i}"
                    )));
                }
                l[i * n + j] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    // forward substitution: L y = b
    let mut y = vec![F::zero(); n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum = sum - l[i * n + k] * y[k];
        }
        y[i] = sum / l[i * n + i];
    }
    // back substitution: L^T x = y
    let mut x = vec![F::zero(); n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum = sum - l[k * n + i] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    Ok(x)
}

/// Ridge least squares: minimize `||A beta - y||^2 + ridge ||beta||^2` via
/// the normal equations. `a` is row-major with `rows` rows and `cols`
/// columns.
pub fn ridge_fit<F: Real>(a: &[F], y: &[F], rows: usize, cols: usize, ridge: F) -> Result<Vec<F>> {
    debug_assert_eq!(a.len(), rows * cols);
    debug_assert_eq!(y.len(), rows);
    let mut ata = vec![F::zero(); cols * cols];
    let mut aty = vec![F::zero(); cols];
    for r in 0..rows {
        let row = &a[r * cols..(r + 1) * cols];
        for i in 0..cols {
            aty[i] = aty[i] + row[i] * y[r];
            for j in 0..=i {
                ata[i * cols + j] = ata[i * cols + j] + row[i] * row[j];
            }
        }
    }
    for i in 0..cols {
        for j in 0..i {
            ata[j * cols + i] = ata[i * cols + j];
        }
        ata[i * cols + i] = ata[i * cols + i] + ridge;
    }
    solve_spd(&ata, &aty, cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn solves_small_spd_system() {
        // m = [[4,1],[1,3]], b = [1,2] -> x = [1/11, 7/11]
        let m = vec![4.0, 1.0, 1.0, 3.0];
        let b = vec![1.0, 2.0];
        let x = solve_spd(&m, &b, 2).unwrap();
        assert_relative_eq!(x[0], 1.0 / 11.0, max_relative = 1e-14);
        assert_relative_eq!(x[1], 7.0 / 11.0, max_relative = 1e-14);
    }

    #[test]
    fn rejects_indefinite_matrix() {
        let m = vec![1.0, 2.0, 2.0, 1.0];
        assert!(solve_spd(&m, &[1.0, 1.0], 2).is_err());
    }

    #[test]
    fn ridge_fit_recovers_exact_coefficients_on_consistent_system() {
        // a well-conditioned 4x2 system with an exact solution
        let a = vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, -1.0];
        let beta_true = [0.7, -0.3];
        let y: Vec<f64> = (0..4)
            .map(|r| a[r * 2] * beta_true[0] + a[r * 2 + 1] * beta_true[1])
            .collect();
        let beta = ridge_fit(&a, &y, 4, 2, 1e-10).unwrap();
        assert_relative_eq!(beta[0], beta_true[0], max_relative = 1e-8);
        assert_relative_eq!(beta[1], beta_true[1], max_relative = 1e-8);
    }
}
