//! Z₂ sensor qubits on lattice sites: preparation, kicked evolution,
//! dephasing and spin-parity readout.
//!
//! Sensor `j` of a layout is bit `n − 1 − j` of the sensor label; a set bit
//! is the excited level `|1⟩`. Conventions: `σ³|0⟩ = −|0⟩`, `P = |0⟩⟨0|`,
//! and `H_σ = ω₀ Σ_j (1 − P_j)`, so a label with `k` set bits has energy `kω₀`.

mod evolve;
mod noise;
mod prepare;
mod protocol;

pub use evolve::{evolve_schedule, parity_expectation, EvolutionReport, ProtocolSystem};
pub use noise::{
    apply_dephasing, apply_dephasing_record, coherence_rate, dephasing_exponent, lindblad_dephase,
    LindbladSettings,
};
pub use prepare::{prepare_joint_state, sensor_amplitudes};
pub use protocol::{prepare_field, run_protocol, BranchOverlaps, FieldPreparation, Protocol};

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Lattice sites carrying sensors, and the sensor transition frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorLayout {
    sites: Vec<usize>,
    omega0: f64,
}

impl SensorLayout {
    pub fn new(sites: Vec<usize>, omega0: f64, n_sites: usize) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::InvalidParameter(
                "layout needs at least one sensor".into(),
            ));
        }
        if sites.len() > 16 {
            return Err(Error::Unsupported(format!(
                "{} sensors (max 16)",
                sites.len()
            )));
        }
        for (i, &s) in sites.iter().enumerate() {
            if s >= n_sites {
                return Err(Error::InvalidParameter(format!(
                    "sensor site {s} outside lattice of {n_sites} sites"
                )));
            }
            if sites[..i].contains(&s) {
                return Err(Error::InvalidParameter(format!("sensor site {s} repeated")));
            }
        }
        if !(omega0 > 0.0 && omega0.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "omega0 must be positive, got {omega0}"
            )));
        }
        Ok(Self { sites, omega0 })
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn n(&self) -> usize {
        self.sites.len()
    }

    /// Index of the sensor sitting on lattice site `site`.
    pub fn sensor_at(&self, site: usize) -> Option<usize> {
        self.sites.iter().position(|&s| s == site)
    }

    /// Bit of sensor `j` in a sensor label.
    pub fn bit(&self, j: usize) -> usize {
        1 << (self.n() - 1 - j)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PreparationKind {
    /// `(|0…0⟩ + |1…1⟩)/√2` on all layout sensors.
    Ghz,
    /// `(Π_{X_e}σ¹ + Π_{X_o}σ¹)|0⟩/√2`.
    NeelDfsPlus,
    /// `(Π_{X_e}σ¹ − Π_{X_o}σ¹)|0⟩/√2`.
    NeelDfsMinus,
    /// `(Π_{X_e}σ¹ + iΠ_{X_o}σ¹)|0⟩/√2`: the Néel pair in quadrature, which
    /// gives access to the antisymmetric (imaginary) part of the correlator.
    NeelDfsQuadrature,
    /// `|0…0⟩`.
    ProductDown,
}

impl PreparationKind {
    pub fn is_neel(self) -> bool {
        matches!(
            self,
            Self::NeelDfsPlus | Self::NeelDfsMinus | Self::NeelDfsQuadrature
        )
    }
}

/// Which Néel block a sensor belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Block {
    Odd,
    Even,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorPreparation {
    pub kind: PreparationKind,
    /// Block of each layout sensor (Néel kinds only). `None` alternates
    /// starting with `Odd` for the first sensor.
    pub partition: Option<Vec<Block>>,
    /// Depolarizing admixture of the sensor register, `0 ≤ ε < 1`.
    pub eps_prep: f64,
}

impl SensorPreparation {
    pub fn new(kind: PreparationKind) -> Self {
        Self {
            kind,
            partition: None,
            eps_prep: 0.0,
        }
    }

    pub fn ghz() -> Self {
        Self::new(PreparationKind::Ghz)
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps_prep = eps;
        self
    }

    /// Resolved partition for `n` sensors, validated.
    pub fn blocks(&self, n: usize) -> Result<Vec<Block>> {
        let blocks = match &self.partition {
            Some(p) => p.clone(),
            None => (0..n)
                .map(|j| if j % 2 == 0 { Block::Odd } else { Block::Even })
                .collect(),
        };
        if self.kind.is_neel() {
            if n % 2 != 0 {
                return Err(Error::InvalidParameter(format!(
                    "Néel preparation needs an even number of sensors, got {n}"
                )));
            }
            if blocks.len() != n {
                return Err(Error::InvalidParameter(format!(
                    "partition covers {} sensors, layout has {n}",
                    blocks.len()
                )));
            }
            if !blocks.contains(&Block::Odd) || !blocks.contains(&Block::Even) {
                return Err(Error::InvalidParameter(
                    "partition must have two nonempty blocks".into(),
                ));
            }
        }
        Ok(blocks)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(0.0..1.0).contains(&self.eps_prep) {
            return Err(Error::InvalidParameter(format!(
                "eps_prep must be in [0, 1), got {}",
                self.eps_prep
            )));
        }
        self.blocks(n).map(|_| ())
    }
}

/// How a kick couples to its sensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CouplingForm {
    /// `C = P = |0⟩⟨0|`.
    RamseyP,
    /// `C = σ³/2`.
    DfsSz,
}

impl CouplingForm {
    /// Eigenvalue of `C` on the sensor level `bit` (0 or 1).
    pub fn eigenvalue(self, bit: bool) -> f64 {
        match (self, bit) {
            (Self::RamseyP, false) => 1.0,
            (Self::RamseyP, true) => 0.0,
            (Self::DfsSz, false) => -0.5,
            (Self::DfsSz, true) => 0.5,
        }
    }
}

/// Instantaneous source `exp(+i 𝖩 s φ(x) ⊗ C_x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KickPulse {
    /// Lattice site; must carry a sensor.
    pub site: usize,
    pub time: f64,
    pub strength: f64,
    pub stagger_sign: i8,
    pub coupling: CouplingForm,
}

impl KickPulse {
    pub fn ramsey(site: usize, time: f64, strength: f64) -> Self {
        Self {
            site,
            time,
            strength,
            stagger_sign: 1,
            coupling: CouplingForm::RamseyP,
        }
    }
}

/// One source configuration: time-sorted kicks and the readout time.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SourceSchedule {
    pub id: u64,
    /// Preparation time of the joint state.
    pub t0: f64,
    pub pulses: Vec<KickPulse>,
    pub readout_time: f64,
}

impl SourceSchedule {
    pub fn empty(id: u64, t0: f64, readout_time: f64) -> Self {
        Self {
            id,
            t0,
            pulses: Vec::new(),
            readout_time,
        }
    }

    /// Time of the last pulse, or `t0` for an empty schedule.
    pub fn last_pulse_time(&self) -> f64 {
        self.pulses.last().map_or(self.t0, |p| p.time)
    }

    pub fn validate(&self, layout: &SensorLayout) -> Result<()> {
        let mut prev = self.t0;
        for p in &self.pulses {
            if !p.time.is_finite() || p.time < prev {
                return Err(Error::InvalidInput(format!(
                    "pulses must be time-sorted and not before t0 (pulse at {})",
                    p.time
                )));
            }
            prev = p.time;
            if layout.sensor_at(p.site).is_none() {
                return Err(Error::InvalidInput(format!(
                    "no sensor on pulse site {}",
                    p.site
                )));
            }
            if p.stagger_sign != 1 && p.stagger_sign != -1 {
                return Err(Error::InvalidInput("stagger_sign must be ±1".into()));
            }
            if !p.strength.is_finite() {
                return Err(Error::InvalidInput("pulse strength must be finite".into()));
            }
        }
        if !self.readout_time.is_finite() || self.readout_time < self.t0 {
            return Err(Error::InvalidInput("readout time before t0".into()));
        }
        if !self.pulses.is_empty() && self.readout_time <= self.last_pulse_time() {
            return Err(Error::InvalidInput(format!(
                "readout time {} must follow the last pulse at {}",
                self.readout_time,
                self.last_pulse_time()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "SCREAMING_SNAKE_CASE"))]
pub enum NoiseKind {
    None,
    GlobalDephasing,
    LocalDephasing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub t2: f64,
}

impl NoiseModel {
    pub const NONE: Self = Self {
        kind: NoiseKind::None,
        t2: f64::INFINITY,
    };

    pub fn global(t2: f64) -> Self {
        Self {
            kind: NoiseKind::GlobalDephasing,
            t2,
        }
    }

    pub fn local(t2: f64) -> Self {
        Self {
            kind: NoiseKind::LocalDephasing,
            t2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind != NoiseKind::None && !(self.t2 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "T2 must be positive, got {}",
                self.t2
            )));
        }
        Ok(())
    }
}

/// A parity measurement with its bookkeeping.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParityRecord {
    pub value: f64,
    pub schedule_id: u64,
    pub readout_time: f64,
    pub noise: NoiseModel,
    /// Relative sensor phase of the two prepared branches at readout,
    /// `Δk·ω₀·(t − t₀) mod 2π` (`Δk = n` for GHZ, 0 for balanced Néel).
    pub phase_reference: f64,
}

/// Reduces an angle to `[0, 2π)`.
pub fn wrap_phase(theta: f64) -> f64 {
    let tau = 2.0 * core::f64::consts::PI;
    let r = theta % tau;
    if r < 0.0 {
        r + tau
    } else {
        r
    }
}
