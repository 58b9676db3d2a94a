use alloc::format;
use alloc::vec::Vec;

use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::{Boundary, LatticeModel, LatticeSpec, ResourceCaps, Spectrum};
use crate::error::{Error, Result};
use crate::linalg::{herm_eigen, C64};
use crate::state::QuantumState;

/// Free time-ordered two-point function on a periodic lattice as a finite
/// mode sum, `Δ₀(t,x) = (1/Na) Σ_k e^{i p_k x a − i ω_k |t|} / 2ω_k`.
///
/// `m0sq` is the dimensionless `m̃₀²`; `x` is a site offset.
pub fn free_propagator_exact(spec: &LatticeSpec, m0sq: f64, t: f64, x: i64) -> Result<C64> {
    if spec.boundary != Boundary::Periodic {
        return Err(Error::Unsupported(
            "mode-sum propagator requires a periodic lattice".into(),
        ));
    }
    let n = spec.n_sites;
    let a = spec.spacing;
    let mut acc = C64::new(0.0, 0.0);
    for k in 0..n {
        let theta = 2.0 * PI * k as f64 / n as f64;
        let s = libm::sin(theta / 2.0);
        let w2 = (m0sq + 4.0 * s * s) / (a * a);
        if !(w2 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mode {k} has nonpositive frequency squared {w2}"
            )));
        }
        let w = libm::sqrt(w2);
        let phase = theta * x as f64 - w * t.abs();
        acc += C64::new(libm::cos(phase), libm::sin(phase)) / (2.0 * w);
    }
    Ok(acc / (n as f64 * a))
}

/// `i / [(p⁰)² − m₀² − (2/a)² sin²(ap/2) + iε]`.
///
/// `m0sq` is the dimensionful `m₀²`. With `eps = 0` an on-shell momentum is
/// rejected.
pub fn free_propagator_momentum(p0: f64, p: f64, m0sq: f64, a: f64, eps: f64) -> Result<C64> {
    if !(a > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "spacing must be positive, got {a}"
        )));
    }
    let s = libm::sin(a * p / 2.0);
    let den = p0 * p0 - m0sq - 4.0 * s * s / (a * a);
    let scale = 1.0 + p0 * p0 + m0sq.abs() + 4.0 / (a * a);
    if eps == 0.0 && den.abs() <= 1e-14 * scale {
        return Err(Error::Pole(format!("on-shell at p0={p0}, p={p}")));
    }
    Ok(C64::new(0.0, 1.0) / C64::new(den, eps))
}

/// Exact time-ordered correlators from a full eigen-decomposition, with all
/// site fields pre-transformed into the energy eigenbasis.
#[derive(Debug, Clone)]
pub struct CorrelatorOracle {
    spectrum: Spectrum,
    phi_eig: Vec<DMatrix<f64>>,
}

impl CorrelatorOracle {
    pub fn new(model: &LatticeModel, caps: &ResourceCaps) -> Result<Self> {
        let spectrum = Spectrum::compute(&model.hamiltonian, caps)?;
        let v = &spectrum.vectors;
        let dim = spectrum.dim();
        let mut phi_eig = Vec::with_capacity(model.n_sites());
        for x in 0..model.n_sites() {
            let op = model.phi(x);
            // φ V column by column through the sparse matrix.
            let mut pv = DMatrix::<f64>::zeros(dim, dim);
            for r in 0..dim {
                for (c, val) in op.matrix().row(r) {
                    let w = val.re;
                    for k in 0..dim {
                        pv[(r, k)] += w * v[(c, k)];
                    }
                }
            }
            phi_eig.push(v.transpose() * pv);
        }
        Ok(Self { spectrum, phi_eig })
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    /// Applies `T{φ_H(t₁,x₁)···φ_H(t_n,x_n)}` to eigenbasis coefficients.
    fn apply_ordered(&self, points: &[(f64, usize)], c: &DVector<C64>) -> DVector<C64> {
        let mut order: Vec<usize> = (0..points.len()).collect();
        // Latest time leftmost; ties keep the given order.
        order.sort_by(|&i, &j| points[j].0.total_cmp(&points[i].0));
        let e = &self.spectrum.values;
        let mut v = c.clone();
        for &idx in order.iter().rev() {
            let (t, x) = points[idx];
            for (k, z) in v.iter_mut().enumerate() {
                *z *= C64::new(0.0, -e[k] * t).exp();
            }
            let phi = &self.phi_eig[x];
            let mut w = DVector::<C64>::zeros(v.len());
            for i in 0..v.len() {
                let mut acc = C64::new(0.0, 0.0);
                for k in 0..v.len() {
                    acc += v[k] * phi[(i, k)];
                }
                w[i] = acc;
            }
            for (k, z) in w.iter_mut().enumerate() {
                *z *= C64::new(0.0, e[k] * t).exp();
            }
            v = w;
        }
        v
    }

    fn to_eigenbasis(&self, psi: &[C64]) -> DVector<C64> {
        let v = &self.spectrum.vectors;
        DVector::from_fn(psi.len(), |k, _| {
            let mut acc = C64::new(0.0, 0.0);
            for (r, z) in psi.iter().enumerate() {
                acc += z * v[(r, k)];
            }
            acc
        })
    }

    fn pure_expectation(&self, psi: &[C64], points: &[(f64, usize)]) -> C64 {
        let c = self.to_eigenbasis(psi);
        let v = self.apply_ordered(points, &c);
        c.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum()
    }

    fn check(&self, points: &[(f64, usize)]) -> Result<()> {
        if points.is_empty() {
            return Err(Error::InvalidInput(
                "correlator needs at least one point".into(),
            ));
        }
        if let Some(&(_, x)) = points.iter().find(|p| p.1 >= self.phi_eig.len()) {
            return Err(Error::InvalidInput(format!("site {x} outside the lattice")));
        }
        Ok(())
    }

    /// `Tr(ρ T{φ_H(t₁,x₁)···φ_H(t_n,x_n)})` for a field-only state.
    pub fn npoint(&self, state: &QuantumState, points: &[(f64, usize)]) -> Result<C64> {
        self.check(points)?;
        let dims = state.dims();
        if dims.sensors != 0 || dims.field != self.spectrum.dim() {
            return Err(Error::InvalidInput(
                "correlator oracle expects a field-only state of matching dimension".into(),
            ));
        }
        match state {
            QuantumState::Pure(p) => Ok(self.pure_expectation(&p.amps, points)),
            QuantumState::Mixed(m) => Ok(m
                .members
                .iter()
                .map(|(w, v)| self.pure_expectation(v, points) * *w)
                .sum()),
            QuantumState::Density(d) => {
                let (vals, vecs) = herm_eigen(&d.matrix)?;
                let mut acc = C64::new(0.0, 0.0);
                for (k, &w) in vals.iter().enumerate() {
                    if w.abs() < 1e-16 {
                        continue;
                    }
                    let v: Vec<C64> = vecs.column(k).iter().copied().collect();
                    acc += self.pure_expectation(&v, points) * w;
                }
                Ok(acc)
            }
        }
    }

    /// Thermal correlator `Tr(e^{−βH} T{…})/Z` using all eigenstates.
    pub fn thermal(&self, beta: f64, points: &[(f64, usize)]) -> Result<C64> {
        self.check(points)?;
        if !(beta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "beta must be positive, got {beta}"
            )));
        }
        let w = self.spectrum.boltzmann_weights(beta);
        let dim = self.spectrum.dim();
        let mut acc = C64::new(0.0, 0.0);
        for (k, &wk) in w.iter().enumerate() {
            if wk == 0.0 {
                continue;
            }
            let mut c = DVector::<C64>::zeros(dim);
            c[k] = C64::new(1.0, 0.0);
            let v = self.apply_ordered(points, &c);
            acc += v[k] * wk;
        }
        Ok(acc)
    }

    /// Vacuum correlator in the exact ground state.
    pub fn vacuum(&self, points: &[(f64, usize)]) -> Result<C64> {
        self.check(points)?;
        let mut c = DVector::<C64>::zeros(self.spectrum.dim());
        c[0] = C64::new(1.0, 0.0);
        Ok(self.apply_ordered(points, &c)[0])
    }
}

/// One-shot convenience around [`CorrelatorOracle`].
pub fn oracle_npoint(
    model: &LatticeModel,
    state: &QuantumState,
    points: &[(f64, usize)],
    caps: &ResourceCaps,
) -> Result<C64> {
    CorrelatorOracle::new(model, caps)?.npoint(state, points)
}
