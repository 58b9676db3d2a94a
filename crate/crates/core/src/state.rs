//! Quantum states on (field Fock space) ⊗ (sensor qubits).
//!
//! Joint amplitudes are stored sensor-major: index `s * field_dim + f`, where
//! `s` is the sensor basis label. Sensor `j` of a layout is bit `n - 1 - j` of
//! `s` (sensor 0 is the most significant bit) and a set bit means the excited
//! level `|1>`.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, C64};

/// Field and sensor dimensions of a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub field: usize,
    pub sensors: usize,
}

impl Dims {
    pub fn field_only(field: usize) -> Self {
        Self { field, sensors: 0 }
    }

    pub fn sensor_dim(&self) -> usize {
        1 << self.sensors
    }

    pub fn total(&self) -> usize {
        self.field * self.sensor_dim()
    }
}

/// Multiplicative damping of sensor coherences: entry `s * S + s'` scales
/// every matrix element between sensor labels `s` and `s'`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceMask {
    sensor_dim: usize,
    factors: Vec<f64>,
}

impl CoherenceMask {
    pub fn identity(sensor_dim: usize) -> Self {
        Self {
            sensor_dim,
            factors: alloc::vec![1.0; sensor_dim * sensor_dim],
        }
    }

    pub fn from_fn(sensor_dim: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut factors = Vec::with_capacity(sensor_dim * sensor_dim);
        for s in 0..sensor_dim {
            for t in 0..sensor_dim {
                factors.push(f(s, t));
            }
        }
        Self {
            sensor_dim,
            factors,
        }
    }

    pub fn get(&self, s: usize, t: usize) -> f64 {
        self.factors[s * self.sensor_dim + t]
    }

    /// Elementwise product (composition of dephasing channels).
    pub fn compose(&self, other: &Self) -> Self {
        assert_eq!(self.sensor_dim, other.sensor_dim);
        Self {
            sensor_dim: self.sensor_dim,
            factors: self
                .factors
                .iter()
                .zip(&other.factors)
                .map(|(a, b)| a * b)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    pub dims: Dims,
    pub amps: Vec<C64>,
}

impl PureState {
    pub fn new(dims: Dims, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != dims.total() {
            return Err(Error::InvalidInput(alloc::format!(
                "state has {} amplitudes, expected {}",
                amps.len(),
                dims.total()
            )));
        }
        Ok(Self { dims, amps })
    }

    /// Field amplitudes of the branch with sensor label `s`.
    pub fn branch(&self, s: usize) -> &[C64] {
        let f = self.dims.field;
        &self.amps[s * f..(s + 1) * f]
    }

    pub fn norm(&self) -> f64 {
        norm(&self.amps)
    }
}

/// Convex combination of pure states, optionally followed by sensor
/// dephasing (`coherence`). Represents `Σ_k w_k D(|ψ_k><ψ_k|)` where `D`
/// multiplies sensor coherences by the mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub dims: Dims,
    pub members: Vec<(f64, Vec<C64>)>,
    pub coherence: Option<CoherenceMask>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub dims: Dims,
    pub matrix: DMatrix<C64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QuantumState {
    Pure(PureState),
    Mixed(Mixture),
    Density(DensityMatrix),
}

impl QuantumState {
    pub fn pure(dims: Dims, amps: Vec<C64>) -> Result<Self> {
        PureState::new(dims, amps).map(Self::Pure)
    }

    pub fn dims(&self) -> Dims {
        match self {
            Self::Pure(p) => p.dims,
            Self::Mixed(m) => m.dims,
            Self::Density(d) => d.dims,
        }
    }

    pub fn as_pure(&self) -> Option<&PureState> {
        match self {
            Self::Pure(p) => Some(p),
            _ => None,
        }
    }

    /// Trace of the density operator (squared norm for pure states).
    pub fn trace(&self) -> f64 {
        match self {
            Self::Pure(p) => p.norm() * p.norm(),
            Self::Mixed(m) => m.members.iter().map(|(w, v)| w * dot(v, v).re).sum(),
            Self::Density(d) => d.matrix.trace().re,
        }
    }

    /// Dense density operator. Only sensible for small dimensions.
    pub fn to_density_matrix(&self) -> DMatrix<C64> {
        let dims = self.dims();
        let n = dims.total();
        match self {
            Self::Pure(p) => DMatrix::from_fn(n, n, |i, j| p.amps[i] * p.amps[j].conj()),
            Self::Mixed(m) => {
                let mut rho = DMatrix::zeros(n, n);
                for (w, v) in &m.members {
                    for i in 0..n {
                        if v[i] == C64::new(0.0, 0.0) {
                            continue;
                        }
                        for j in 0..n {
                            rho[(i, j)] += v[i] * v[j].conj() * *w;
                        }
                    }
                }
                if let Some(mask) = &m.coherence {
                    let f = dims.field;
                    for i in 0..n {
                        for j in 0..n {
                            rho[(i, j)] *= mask.get(i / f, j / f);
                        }
                    }
                }
                rho
            }
            Self::Density(d) => d.matrix.clone(),
        }
    }

    /// `<ψ|ρ|ψ>` against a pure vector of matching dimension.
    pub fn fidelity_with(&self, psi: &[C64]) -> f64 {
        match self {
            Self::Pure(p) => dot(psi, &p.amps).norm_sqr(),
            Self::Mixed(m) if m.coherence.is_none() => m
                .members
                .iter()
                .map(|(w, v)| w * dot(psi, v).norm_sqr())
                .sum(),
            _ => {
                let rho = self.to_density_matrix();
                let mut acc = C64::new(0.0, 0.0);
                for i in 0..psi.len() {
                    for j in 0..psi.len() {
                        acc += psi[i].conj() * rho[(i, j)] * psi[j];
                    }
                }
                acc.re
            }
        }
    }

    /// Checks the representation invariants: unit norm/trace within 1e-10;
    /// for dense matrices also hermiticity and positive semidefiniteness.
    pub fn validate(&self) -> Result<()> {
        let tr = self.trace();
        if (tr - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidInput(alloc::format!(
                "state trace {tr} deviates from 1"
            )));
        }
        if let Self::Mixed(m) = self {
            if m.members.iter().any(|(w, _)| *w < 0.0) {
                return Err(Error::InvalidInput("negative mixture weight".into()));
            }
        }
        if let Self::Density(d) = self {
            let m = &d.matrix;
            let herm = (m - m.adjoint()).norm();
            if herm > 1e-10 * (1.0 + m.norm()) {
                return Err(Error::InvalidInput("density matrix not hermitian".into()));
            }
            let (vals, _) = crate::linalg::herm_eigen(m)?;
            if vals.iter().any(|&l| l < -1e-10) {
                return Err(Error::InvalidInput(
                    "density matrix not positive semidefinite".into(),
                ));
            }
        }
        Ok(())
    }
}
