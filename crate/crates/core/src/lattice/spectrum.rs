use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use super::{FieldOperator, ResourceCaps};
use crate::error::{Error, Result};
use crate::linalg::{lowest_eigenpair, sym_eigen, LanczosSettings, C64};
use crate::state::{Dims, Mixture, QuantumState};

/// Lowest eigenpair of `H` with residual `‖Hψ − E₀ψ‖ ≤ tol`.
pub fn ground_state(h: &FieldOperator, tol: f64) -> Result<(f64, QuantumState)> {
    if !h.is_hermitian() {
        return Err(Error::InvalidInput(
            "ground_state needs a hermitian operator".into(),
        ));
    }
    let dim = h.matrix().rows();
    if dim <= 64 {
        // Tiny spaces: dense is both faster and exact.
        let spec = Spectrum::compute(h, &ResourceCaps::default())?;
        let psi: Vec<C64> = spec
            .vectors
            .column(0)
            .iter()
            .map(|&x| C64::new(x, 0.0))
            .collect();
        return Ok((
            spec.values[0],
            QuantumState::pure(Dims::field_only(dim), psi)?,
        ));
    }
    let settings = LanczosSettings {
        tol,
        ..LanczosSettings::default()
    };
    let (e0, mut psi) = lowest_eigenpair(h, &settings, None)?;
    fix_phase(&mut psi);
    Ok((e0, QuantumState::pure(Dims::field_only(dim), psi)?))
}

/// Rotates the global phase so the largest component is real positive.
fn fix_phase(v: &mut [C64]) {
    if let Some(big) = v
        .iter()
        .copied()
        .max_by(|a, b| a.norm_sqr().total_cmp(&b.norm_sqr()))
    {
        if big.norm() > 0.0 {
            let ph = big.conj() / big.norm();
            v.iter_mut().for_each(|z| *z *= ph);
        }
    }
}

/// Full eigen-decomposition of a real symmetric field Hamiltonian, sorted by
/// ascending energy.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: Vec<f64>,
    /// Column `k` is the eigenvector of `values[k]`.
    pub vectors: DMatrix<f64>,
}

impl Spectrum {
    pub fn compute(h: &FieldOperator, caps: &ResourceCaps) -> Result<Self> {
        let dim = h.matrix().rows();
        caps.check_dense("full diagonalization", dim)?;
        let dense = h
            .to_dense_real()
            .ok_or_else(|| Error::Unsupported("dense spectrum of a complex Hamiltonian".into()))?;
        let (values, vectors) = sym_eigen(&dense)?;
        Ok(Self { values, vectors })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn ground_energy(&self) -> f64 {
        self.values[0]
    }

    /// `E₁ − E₀`.
    pub fn gap(&self) -> f64 {
        self.values[1] - self.values[0]
    }

    /// Boltzmann weights `e^{−β(E_k−E₀)}/Z`.
    pub fn boltzmann_weights(&self, beta: f64) -> Vec<f64> {
        let e0 = self.values[0];
        let mut w: Vec<f64> = self
            .values
            .iter()
            .map(|&e| libm::exp(-beta * (e - e0)))
            .collect();
        let z: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= z);
        w
    }

    /// Gibbs state as an eigenvector ensemble. Components with relative
    /// weight below `1e-15` are dropped (and the rest renormalized); their
    /// total contribution is below the state-trace tolerance.
    pub fn gibbs(&self, beta: f64) -> Result<QuantumState> {
        if !(beta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "beta must be positive, got {beta}"
            )));
        }
        let dim = self.dim();
        let w = self.boltzmann_weights(beta);
        let mut members = Vec::new();
        let mut kept = 0.0;
        for (k, &wk) in w.iter().enumerate() {
            if wk < 1e-15 {
                continue;
            }
            kept += wk;
            let v = self
                .vectors
                .column(k)
                .iter()
                .map(|&x| C64::new(x, 0.0))
                .collect();
            members.push((wk, v));
        }
        members.iter_mut().for_each(|(wk, _)| *wk /= kept);
        Ok(QuantumState::Mixed(Mixture {
            dims: Dims::field_only(dim),
            members,
            coherence: None,
        }))
    }
}

/// `ρ = e^{−βH}/Tr e^{−βH}` by full diagonalization.
pub fn gibbs_state(h: &FieldOperator, beta: f64, caps: &ResourceCaps) -> Result<QuantumState> {
    Spectrum::compute(h, caps)?.gibbs(beta)
}
