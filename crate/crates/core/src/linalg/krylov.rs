use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use super::{axpy, dot, norm, sym_eigen, LinearOperator, C64};
use crate::error::{Error, Result};

/// Settings for Krylov propagation `v <- exp(-i H t) v` of a Hermitian `H`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KrylovSettings {
    /// Lanczos basis size per step.
    pub max_dim: usize,
    /// Target absolute error of the whole propagation, relative to `||v||`.
    pub tol: f64,
    /// Upper bound on a single step; `None` lets the error estimate decide.
    pub max_step: Option<f64>,
}

impl Default for KrylovSettings {
    fn default() -> Self {
        Self {
            max_dim: 40,
            tol: 1e-12,
            max_step: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KrylovStats {
    pub steps: usize,
    pub matvecs: usize,
    /// Sum of the per-step error estimates.
    pub error_estimate: f64,
}

impl KrylovStats {
    pub fn merge(&mut self, other: KrylovStats) {
        self.steps += other.steps;
        self.matvecs += other.matvecs;
        self.error_estimate += other.error_estimate;
    }
}

/// Propagates `v` in place by `exp(-i H t)` with adaptive Lanczos steps.
pub fn propagate<Op: LinearOperator + ?Sized>(
    op: &Op,
    v: &mut [C64],
    t: f64,
    settings: &KrylovSettings,
) -> Result<KrylovStats> {
    let dim = op.dim();
    assert_eq!(v.len(), dim);
    let mut stats = KrylovStats::default();
    let total = t.abs();
    if total == 0.0 {
        return Ok(stats);
    }
    let direction = t.signum();
    let m_max = settings.max_dim.clamp(1, dim);
    let mut done = 0.0;
    let mut guess = settings.max_step.unwrap_or(total).min(total);
    let mut hv = vec![C64::new(0.0, 0.0); dim];

    while done < total * (1.0 - 1e-15) {
        let beta0 = norm(v);
        if beta0 == 0.0 {
            break;
        }
        let mut basis: Vec<Vec<C64>> = Vec::with_capacity(m_max + 1);
        basis.push(v.iter().map(|z| z / beta0).collect());
        let mut alpha = Vec::with_capacity(m_max);
        let mut beta: Vec<f64> = Vec::with_capacity(m_max);
        let mut residual_beta = 0.0;
        for j in 0..m_max {
            op.apply(&basis[j], &mut hv);
            stats.matvecs += 1;
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
            if b < 1e-14 * (1.0 + a.abs()) {
                // Invariant subspace: the projection is exact.
                residual_beta = 0.0;
                break;
            }
            if j + 1 == m_max {
                residual_beta = b;
                break;
            }
            beta.push(b);
            w.iter_mut().for_each(|z| *z /= b);
            basis.push(w);
        }
        let k = alpha.len();
        let mut tri = DMatrix::<f64>::zeros(k, k);
        for i in 0..k {
            tri[(i, i)] = alpha[i];
            if i + 1 < k {
                tri[(i, i + 1)] = beta[i];
                tri[(i + 1, i)] = beta[i];
            }
        }
        let (evals, evecs) = sym_eigen(&tri)?;
        let remaining = total - done;
        let mut tau = guess.min(remaining);
        if let Some(cap) = settings.max_step {
            tau = tau.min(cap);
        }

        let small = |tau: f64| -> Vec<C64> {
            let mut y = vec![C64::new(0.0, 0.0); k];
            for l in 0..k {
                let w0 = evecs[(0, l)];
                let phase = C64::from_polar(1.0, -direction * evals[l] * tau);
                for (i, yi) in y.iter_mut().enumerate() {
                    *yi += evecs[(i, l)] * w0 * phase;
                }
            }
            y
        };

        let mut shrinks = 0;
        let (y, err) = loop {
            let y = small(tau);
            let err = beta0 * residual_beta * y[k - 1].norm();
            let target = settings.tol * beta0 * tau / total;
            if err <= target || residual_beta == 0.0 {
                let grow = if err > 0.0 {
                    libm::pow(target / err, 1.0 / k as f64) * 0.9
                } else {
                    2.0
                };
                guess = tau * grow.clamp(0.5, 2.0);
                break (y, err);
            }
            shrinks += 1;
            if shrinks > 80 {
                return Err(Error::Convergence {
                    what: "Krylov propagation",
                    residual: err,
                });
            }
            let factor = libm::pow(target / err, 1.0 / k as f64) * 0.9;
            tau *= factor.clamp(0.1, 0.9);
        };

        v.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        for (i, q) in basis.iter().enumerate().take(k) {
            axpy(y[i] * beta0, q, v);
        }
        done += tau;
        stats.steps += 1;
        stats.error_estimate += err;
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CsrMatrix;

    #[test]
    fn diagonal_operator_gives_exact_phases() {
        let n = 6;
        let trip = (0..n)
            .map(|i| (i, i, C64::new(i as f64 * 0.7, 0.0)))
            .collect();
        let h = CsrMatrix::from_triplets(n, n, trip);
        let mut v: Vec<C64> = (0..n).map(|i| C64::new(1.0 + i as f64, 0.0)).collect();
        let v0 = v.clone();
        propagate(&h, &mut v, 3.3, &KrylovSettings::default()).unwrap();
        for i in 0..n {
            let expect = v0[i] * C64::from_polar(1.0, -(i as f64) * 0.7 * 3.3);
            assert!((v[i] - expect).norm() < 1e-11);
        }
    }

    #[test]
    fn forward_then_backward_is_identity() {
        let n = 80;
        let mut trip = Vec::new();
        for i in 0..n {
            trip.push((i, i, C64::new(libm::sin(i as f64), 0.0)));
            if i + 1 < n {
                trip.push((i, i + 1, C64::new(1.0, 0.0)));
                trip.push((i + 1, i, C64::new(1.0, 0.0)));
            }
        }
        let h = CsrMatrix::from_triplets(n, n, trip);
        let mut v = vec![C64::new(0.0, 0.0); n];
        v[n / 2] = C64::new(1.0, 0.0);
        let v0 = v.clone();
        let s = KrylovSettings::default();
        propagate(&h, &mut v, 7.0, &s).unwrap();
        assert!((norm(&v) - 1.0).abs() < 1e-11);
        propagate(&h, &mut v, -7.0, &s).unwrap();
        let diff: f64 = v.iter().zip(&v0).map(|(a, b)| (a - b).norm_sqr()).sum();
        assert!(libm::sqrt(diff) < 1e-10);
    }
}
