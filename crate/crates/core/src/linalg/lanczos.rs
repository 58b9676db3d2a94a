use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use super::{axpy, dot, norm, normalize, seed_vector, sym_eigen, LinearOperator, C64};
use crate::error::{Error, Result};

/// Restarted Lanczos settings for the extremal eigensolver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LanczosSettings {
    /// Krylov basis size per restart cycle.
    pub krylov_dim: usize,
    pub max_restarts: usize,
    /// Target residual `||H psi - E psi||`.
    pub tol: f64,
}

impl Default for LanczosSettings {
    fn default() -> Self {
        Self {
            krylov_dim: 120,
            max_restarts: 60,
            tol: 1e-10,
        }
    }
}

/// Lowest eigenvalue and normalized eigenvector of a Hermitian operator.
///
/// Uses Lanczos with full reorthogonalization, restarting from the current
/// Ritz vector until the true residual falls below `settings.tol`.
pub fn lowest_eigenpair<Op: LinearOperator + ?Sized>(
    op: &Op,
    settings: &LanczosSettings,
    start: Option<&[C64]>,
) -> Result<(f64, Vec<C64>)> {
    let dim = op.dim();
    if dim == 0 {
        return Err(Error::InvalidInput("empty operator".into()));
    }
    let mut v = match start {
        Some(s) => s.to_vec(),
        None => seed_vector(dim),
    };
    if normalize(&mut v) == 0.0 {
        return Err(Error::InvalidInput("zero start vector".into()));
    }
    let m = settings.krylov_dim.clamp(1, dim);
    let mut hv = vec![C64::new(0.0, 0.0); dim];
    let mut last_residual = f64::INFINITY;

    for _ in 0..=settings.max_restarts {
        let mut basis: Vec<Vec<C64>> = Vec::with_capacity(m);
        let mut alpha = Vec::with_capacity(m);
        let mut beta: Vec<f64> = Vec::with_capacity(m);
        basis.push(v.clone());
        for j in 0..m {
            op.apply(&basis[j], &mut hv);
            let a = dot(&basis[j], &hv).re;
            alpha.push(a);
            let mut w = hv.clone();
            axpy(C64::new(-a, 0.0), &basis[j], &mut w);
            if j > 0 {
                axpy(C64::new(-beta[j - 1], 0.0), &basis[j - 1], &mut w);
            }
            for _ in 0..2 {
                for q in &basis {
                    let c = dot(q, &w);
                    axpy(-c, q, &mut w);
                }
            }
            let b = norm(&w);
            if j + 1 == m || b < 1e-13 * (1.0 + a.abs()) {
                break;
            }
            beta.push(b);
            w.iter_mut().for_each(|z| *z /= b);
            basis.push(w);
        }

        let k = alpha.len();
        let mut t = DMatrix::<f64>::zeros(k, k);
        for i in 0..k {
            t[(i, i)] = alpha[i];
            if i + 1 < k {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let (evals, evecs) = sym_eigen(&t)?;
        let (imin, theta) = (0, evals[0]);
        let mut ritz = vec![C64::new(0.0, 0.0); dim];
        for (i, q) in basis.iter().enumerate().take(k) {
            axpy(C64::new(evecs[(i, imin)], 0.0), q, &mut ritz);
        }
        normalize(&mut ritz);

        op.apply(&ritz, &mut hv);
        axpy(C64::new(-theta, 0.0), &ritz, &mut hv);
        last_residual = norm(&hv);
        if last_residual <= settings.tol {
            return Ok((theta, ritz));
        }
        v = ritz;
    }
    Err(Error::Convergence {
        what: "Lanczos ground state",
        residual: last_residual,
    })
}
