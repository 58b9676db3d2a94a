use alloc::vec::Vec;

use nalgebra::DMatrix;

use super::C64;
use crate::error::{Error, Result};

/// Eigen-decomposition of a real symmetric matrix, eigenvalues ascending,
/// eigenvectors as columns.
pub fn sym_eigen(m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    let a = faer::Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)]);
    let e = a
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|_| Error::Convergence {
            what: "dense symmetric eigensolver",
            residual: f64::NAN,
        })?;
    let (u, s) = (e.U(), e.S());
    let values = (0..n).map(|i| s[i]).collect();
    Ok((values, DMatrix::from_fn(n, n, |i, j| u[(i, j)])))
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn herm_eigen(m: &DMatrix<C64>) -> Result<(Vec<f64>, DMatrix<C64>)> {
    let n = m.nrows();
    let a = faer::Mat::<C64>::from_fn(n, n, |i, j| m[(i, j)]);
    let e = a
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|_| Error::Convergence {
            what: "dense hermitian eigensolver",
            residual: f64::NAN,
        })?;
    let (u, s) = (e.U(), e.S());
    let values = (0..n).map(|i| s[i].re).collect();
    Ok((values, DMatrix::from_fn(n, n, |i, j| u[(i, j)])))
}
