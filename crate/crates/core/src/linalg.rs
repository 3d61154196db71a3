//! Small dense symmetric-matrix helpers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

/// Condition numbers above this are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;
/// Ridge added on the retry after a singular inversion.
pub const RIDGE: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("matrix is numerically singular (condition number {condition:e}); retry with a ridge term")]
    Singular { condition: f64 },
}

/// Inverse of a symmetric positive semidefinite matrix.
#[derive(Clone, Debug)]
pub struct SpdInverse {
    pub inverse: DMatrix<f64>,
    /// Eigen-decomposition of the (possibly ridged) input.
    pub eigen: SymmetricEigen<f64, nalgebra::Dyn>,
    pub condition: f64,
    pub ridged: bool,
}

pub fn outer_normalized(x: &[f64], power: i32) -> DMatrix<f64> {
    let l1: f64 = x.iter().map(|v| v.abs()).sum();
    let scale = l1.powi(-power);
    let n = x.len();
    DMatrix::from_fn(n, n, |i, j| x[i] * x[j] * scale)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn condition_of(eigen: &SymmetricEigen<f64, nalgebra::Dyn>) -> f64 {
    let max = eigen.eigenvalues.max();
    let min = eigen.eigenvalues.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Inverts a symmetric matrix by eigen-decomposition. When the condition
/// number exceeds [`MAX_CONDITION`] and `allow_ridge` is set, retries once
/// with `m + RIDGE * I` and marks the result.
pub fn spd_inverse(m: &DMatrix<f64>, allow_ridge: bool) -> Result<SpdInverse, LinalgError> {
    let sym = symmetrize(m);
    let eigen = SymmetricEigen::new(sym.clone());
    let condition = condition_of(&eigen);
    if condition <= MAX_CONDITION {
        return Ok(finish(eigen, condition, false));
    }
    if !allow_ridge {
        return Err(LinalgError::Singular { condition });
    }
    let n = sym.nrows();
    let eigen = SymmetricEigen::new(sym + DMatrix::identity(n, n) * RIDGE);
    let ridged_condition = condition_of(&eigen);
    if ridged_condition > MAX_CONDITION {
        return Err(LinalgError::Singular {
            condition: ridged_condition,
        });
    }
    Ok(finish(eigen, ridged_condition, true))
}

fn finish(eigen: SymmetricEigen<f64, nalgebra::Dyn>, condition: f64, ridged: bool) -> SpdInverse {
    let inv_vals = eigen.eigenvalues.map(|v| 1.0 / v);
    let q = &eigen.eigenvectors;
    let inverse = q * DMatrix::from_diagonal(&inv_vals) * q.transpose();
    SpdInverse {
        inverse,
        eigen,
        condition,
        ridged,
    }
}

/// Solves `F S + S F = C` for symmetric positive definite `F` given its
/// eigen-decomposition. The solution is symmetric whenever `C` is.
pub fn lyapunov(eigen: &SymmetricEigen<f64, nalgebra::Dyn>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let q = &eigen.eigenvectors;
    let l = &eigen.eigenvalues;
    let ct = q.transpose() * c * q;
    let s = DMatrix::from_fn(ct.nrows(), ct.ncols(), |i, j| ct[(i, j)] / (l[i] + l[j]));
    q * s * q.transpose()
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    let gram = m.transpose() * m;
    SymmetricEigen::new(gram).eigenvalues.max().max(0.0).sqrt()
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}

/// `max_ij |m_ij - m_ji|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).abs().max()
}

pub fn frobenius_relative(a: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    (a - reference).norm() / reference.norm()
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn mat_vec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (m * DVector::from_column_slice(v)).iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn inverse_of_well_conditioned() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let inv = spd_inverse(&m, false).unwrap();
        assert!(!inv.ridged);
        let id = &m * &inv.inverse;
        assert_relative_eq!(id, DMatrix::identity(2, 2), epsilon = 1e-12);
    }

    #[test]
    fn singular_without_ridge_errors_and_ridge_recovers() {
        let x = [1.0, 2.0];
        let m = outer_normalized(&x, 2);
        assert!(matches!(spd_inverse(&m, false), Err(LinalgError::Singular { .. })));
        let inv = spd_inverse(&m, true).unwrap();
        assert!(inv.ridged);
    }

    #[test]
    fn lyapunov_solves_equation() {
        let f = DMatrix::from_row_slice(3, 3, &[0.6, 0.1, 0.05, 0.1, 0.3, 0.02, 0.05, 0.02, 0.1]);
        let c = DMatrix::from_row_slice(3, 3, &[0.2, 0.03, 0.01, 0.03, 0.05, 0.0, 0.01, 0.0, 0.02]);
        let inv = spd_inverse(&f, false).unwrap();
        let s = lyapunov(&inv.eigen, &c);
        assert_relative_eq!(&f * &s + &s * &f, c, epsilon = 1e-12);
        assert!(asymmetry(&s) < 1e-14);
    }

    #[test]
    fn spectral_norm_of_normalized_outer_product_at_most_one() {
        for x in [[1.0, 0.0, 0.0], [1.0, 3.0, 0.5], [1.0, 100.0, 100.0]] {
            let m = outer_normalized(&x, 2);
            let l1: f64 = x.iter().sum();
            let l2: f64 = x.iter().map(|v| v * v).sum();
            assert_relative_eq!(spectral_norm(&m), l2 / (l1 * l1), epsilon = 1e-12);
            assert!(spectral_norm(&m) <= 1.0 + 1e-15);
        }
    }
}
