use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use super::{
    sensor_amplitudes, NoiseKind, NoiseModel, ParityRecord, SensorLayout, SensorPreparation,
};
use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::state::{CoherenceMask, DensityMatrix, Dims, Mixture, QuantumState};

/// `σ³` eigenvalue of sensor `j` in label `s` (`−1` for `|0⟩`).
fn z(layout_n: usize, s: usize, j: usize) -> f64 {
    if s & (1 << (layout_n - 1 - j)) != 0 {
        1.0
    } else {
        -1.0
    }
}

/// Decay rate of the coherence `|s⟩⟨s'|` under pure dephasing.
///
/// Collective `L = Σ_j σ³_j/√(2T₂)` gives `(S − S')²/4T₂` with `S = Σ_j z_j`;
/// independent `L_j = σ³_j/√(2T₂)` give `Σ_j (z_j − z'_j)²/4T₂`.
pub fn coherence_rate(noise: &NoiseModel, n: usize, s: usize, sp: usize) -> f64 {
    match noise.kind {
        NoiseKind::None => 0.0,
        NoiseKind::GlobalDephasing => {
            let d: f64 = (0..n).map(|j| z(n, s, j) - z(n, sp, j)).sum();
            d * d / (4.0 * noise.t2)
        }
        NoiseKind::LocalDephasing => {
            let d: f64 = (0..n).map(|j| (z(n, s, j) - z(n, sp, j)).powi(2)).sum();
            d / (4.0 * noise.t2)
        }
    }
}

/// The factor `f` in `e^{−f·duration/T₂}` for the coherence read out by the
/// parity: `n²` (global, GHZ), `n` (local), `0` (global, balanced Néel).
pub fn dephasing_exponent(
    noise: &NoiseModel,
    prep: &SensorPreparation,
    layout: &SensorLayout,
) -> Result<f64> {
    if noise.kind == NoiseKind::None {
        return Ok(0.0);
    }
    let amps = sensor_amplitudes(prep, layout)?;
    if amps.len() < 2 {
        return Ok(0.0);
    }
    Ok(coherence_rate(noise, layout.n(), amps[0].0, amps[1].0) * noise.t2)
}

fn check_duration(duration: f64) -> Result<()> {
    if !(duration >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "dephasing duration must be >= 0, got {duration}"
        )));
    }
    Ok(())
}

fn mask_for(noise: &NoiseModel, n: usize, duration: f64) -> CoherenceMask {
    CoherenceMask::from_fn(1 << n, |s, t| {
        libm::exp(-coherence_rate(noise, n, s, t) * duration)
    })
}

/// Analytic dephasing of a joint state over `duration`.
pub fn apply_dephasing(
    state: &QuantumState,
    noise: &NoiseModel,
    duration: f64,
    layout: &SensorLayout,
) -> Result<QuantumState> {
    check_duration(duration)?;
    noise.validate()?;
    if noise.kind == NoiseKind::None || duration == 0.0 {
        return Ok(state.clone());
    }
    let dims = state.dims();
    if dims.sensors != layout.n() {
        return Err(Error::InvalidInput(
            "state and layout disagree on sensor count".into(),
        ));
    }
    let mask = mask_for(noise, dims.sensors, duration);
    Ok(match state {
        QuantumState::Pure(p) => QuantumState::Mixed(Mixture {
            dims,
            members: alloc::vec![(1.0, p.amps.clone())],
            coherence: Some(mask),
        }),
        QuantumState::Mixed(m) => QuantumState::Mixed(Mixture {
            dims,
            members: m.members.clone(),
            coherence: Some(match &m.coherence {
                Some(old) => old.compose(&mask),
                None => mask,
            }),
        }),
        QuantumState::Density(d) => {
            let f = dims.field;
            let mut rho = d.matrix.clone();
            for i in 0..rho.nrows() {
                for j in 0..rho.ncols() {
                    rho[(i, j)] *= mask.get(i / f, j / f);
                }
            }
            QuantumState::Density(DensityMatrix { dims, matrix: rho })
        }
    })
}

/// Analytic dephasing applied to a recorded parity.
pub fn apply_dephasing_record(
    record: &ParityRecord,
    noise: &NoiseModel,
    duration: f64,
    prep: &SensorPreparation,
    layout: &SensorLayout,
) -> Result<ParityRecord> {
    check_duration(duration)?;
    noise.validate()?;
    let f = dephasing_exponent(noise, prep, layout)?;
    let factor = if f == 0.0 {
        1.0
    } else {
        libm::exp(-f * duration / noise.t2)
    };
    Ok(ParityRecord {
        value: record.value * factor,
        noise: *noise,
        ..record.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LindbladSettings {
    /// Fixed RK4 step count; `None` picks one from the generator norm.
    pub steps: Option<usize>,
}

impl Default for LindbladSettings {
    fn default() -> Self {
        Self { steps: None }
    }
}

fn jump_operators(noise: &NoiseModel, dims: Dims) -> Vec<DMatrix<C64>> {
    let n = dims.sensors;
    let f = dims.field;
    let total = dims.total();
    let g = libm::sqrt(1.0 / (2.0 * noise.t2));
    let diag = |vals: &dyn Fn(usize) -> f64| {
        DMatrix::from_fn(total, total, |i, j| {
            if i == j {
                C64::new(g * vals(i / f), 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    };
    match noise.kind {
        NoiseKind::None => Vec::new(),
        NoiseKind::GlobalDephasing => alloc::vec![diag(&|s| (0..n).map(|j| z(n, s, j)).sum())],
        NoiseKind::LocalDephasing => (0..n).map(|j| diag(&|s| z(n, s, j))).collect(),
    }
}

/// Integrates `dρ/dt = −i[H,ρ] + Σ_k (L_k ρ L_k† − ½{L_k†L_k, ρ})` with dense
/// RK4 for `duration`. Jump operators are the collective or per-sensor `σ³`
/// of the noise model; `hamiltonian` (joint, dense) is optional.
pub fn lindblad_dephase(
    rho: &DensityMatrix,
    hamiltonian: Option<&DMatrix<C64>>,
    noise: &NoiseModel,
    duration: f64,
    settings: &LindbladSettings,
) -> Result<DensityMatrix> {
    check_duration(duration)?;
    noise.validate()?;
    let dims = rho.dims;
    let total = dims.total();
    if total > 1024 {
        return Err(Error::ResourceLimit {
            what: "dense Lindblad integration",
            dim: total,
            cap: 1024,
        });
    }
    if let Some(h) = hamiltonian {
        if h.nrows() != total || h.ncols() != total {
            return Err(Error::InvalidInput("Hamiltonian dimension mismatch".into()));
        }
    }
    let jumps = jump_operators(noise, dims);
    let lsq: Vec<DMatrix<C64>> = jumps.iter().map(|l| l.adjoint() * l).collect();
    let rhs = |r: &DMatrix<C64>| -> DMatrix<C64> {
        let mut out = DMatrix::zeros(total, total);
        if let Some(h) = hamiltonian {
            out += (h * r - r * h) * C64::new(0.0, -1.0);
        }
        for (l, ll) in jumps.iter().zip(&lsq) {
            out += l * r * l.adjoint() - (ll * r + r * ll) * C64::new(0.5, 0.0);
        }
        out
    };
    let scale: f64 =
        hamiltonian.map_or(0.0, |h| h.norm()) + lsq.iter().map(|m| m.norm()).sum::<f64>();
    let steps = settings
        .steps
        .unwrap_or_else(|| ((duration * scale * 20.0).ceil() as usize).max(64));
    let h = duration / steps as f64;
    let mut r = rho.matrix.clone();
    for _ in 0..steps {
        let k1 = rhs(&r);
        let k2 = rhs(&(&r + &k1 * C64::new(h / 2.0, 0.0)));
        let k3 = rhs(&(&r + &k2 * C64::new(h / 2.0, 0.0)));
        let k4 = rhs(&(&r + &k3 * C64::new(h, 0.0)));
        r += (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4) * C64::new(h / 6.0, 0.0);
    }
    Ok(DensityMatrix { dims, matrix: r })
}
