use alloc::vec::Vec;

use super::{
    coherence_rate, prepare_joint_state, sensor_amplitudes, wrap_phase, NoiseModel, ParityRecord,
    ProtocolSystem, SensorPreparation, SourceSchedule,
};
use crate::error::{Error, Result};
use crate::lattice::{ground_state, LatticeModel, ResourceCaps, Spectrum};
use crate::linalg::{dot, C64};
use crate::state::{Mixture, QuantumState};

/// Initial state of the field.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "lowercase"))]
pub enum FieldPreparation {
    Vacuum,
    Gibbs { beta: f64 },
}

/// Ground state (iterative) or Gibbs ensemble (full diagonalization).
pub fn prepare_field(
    model: &LatticeModel,
    prep: FieldPreparation,
    caps: &ResourceCaps,
) -> Result<QuantumState> {
    match prep {
        FieldPreparation::Vacuum => ground_state(&model.hamiltonian, 1e-11).map(|(_, psi)| psi),
        FieldPreparation::Gibbs { beta } => {
            Spectrum::compute(&model.hamiltonian, caps)?.gibbs(beta)
        }
    }
}

/// Overlaps `O_s = Σ_k w_k ⟨ψ_{k,s}|ψ_{k,s̄}⟩` of complementary sensor
/// branches, taken right after the last pulse.
///
/// Beyond that point the field evolves by the same unitary in every branch,
/// so the parity at any later readout time only needs the analytic sensor
/// phase and dephasing factor.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchOverlaps {
    pub n_sensors: usize,
    pub omega0: f64,
    pub t0: f64,
    pub last_pulse: f64,
    pub entries: Vec<(usize, C64)>,
    /// Labels `(a, b)` of the two prepared branches, if there are two.
    pub branches: Option<(usize, usize)>,
}

impl BranchOverlaps {
    /// `⟨Πσ¹⟩` at `readout_time ≥ last_pulse`.
    pub fn parity_at(&self, readout_time: f64, noise: &NoiseModel) -> Result<f64> {
        noise.validate()?;
        if readout_time < self.last_pulse {
            return Err(Error::InvalidInput("readout before the last pulse".into()));
        }
        let all = (1usize << self.n_sensors) - 1;
        let tau = readout_time - self.t0;
        let mut acc = C64::new(0.0, 0.0);
        for &(s, o) in &self.entries {
            let dk = s.count_ones() as f64 - (s ^ all).count_ones() as f64;
            let damp = libm::exp(-coherence_rate(noise, self.n_sensors, s, s ^ all) * tau);
            acc += o * C64::new(0.0, self.omega0 * dk * tau).exp() * damp;
        }
        Ok(acc.re)
    }

    /// Relative branch phase `Δk·ω₀·(t − t₀) mod 2π`.
    pub fn phase_reference(&self, readout_time: f64) -> f64 {
        match self.branches {
            Some((a, b)) => {
                let dk = b.count_ones() as f64 - a.count_ones() as f64;
                wrap_phase(dk * self.omega0 * (readout_time - self.t0))
            }
            None => 0.0,
        }
    }

    pub fn record(
        &self,
        schedule_id: u64,
        readout_time: f64,
        noise: &NoiseModel,
    ) -> Result<ParityRecord> {
        Ok(ParityRecord {
            value: self.parity_at(readout_time, noise)?,
            schedule_id,
            readout_time,
            noise: *noise,
            phase_reference: self.phase_reference(readout_time),
        })
    }
}

/// A prepared field state bound to a protocol system; runs are independent
/// and only read shared data.
#[derive(Debug, Clone)]
pub struct Protocol<'a> {
    pub system: ProtocolSystem<'a>,
    pub field: &'a QuantumState,
}

impl<'a> Protocol<'a> {
    pub fn new(system: ProtocolSystem<'a>, field: &'a QuantumState) -> Result<Self> {
        let d = field.dims();
        if d.sensors != 0 || d.field != system.model.field_dim() {
            return Err(Error::InvalidInput(
                "field state does not match the lattice model".into(),
            ));
        }
        Ok(Self { system, field })
    }

    pub fn overlaps(
        &self,
        prep: &SensorPreparation,
        schedule: &SourceSchedule,
    ) -> Result<BranchOverlaps> {
        let layout = &self.system.layout;
        schedule.validate(layout)?;
        self.system
            .caps
            .check_sparse("joint Hilbert space", self.system.dims().total())?;
        let joint = prepare_joint_state(self.field, layout, prep)?;
        let members: Vec<(f64, Vec<C64>)> = match joint {
            QuantumState::Pure(p) => alloc::vec![(1.0, p.amps)],
            QuantumState::Mixed(Mixture { members, .. }) => members,
            QuantumState::Density(_) => {
                unreachable!("prepare_joint_state never returns a dense state")
            }
        };
        let f = self.system.model.field_dim();
        let sdim = 1usize << layout.n();
        let all = sdim - 1;
        let until = schedule.last_pulse_time();
        let mut acc = alloc::vec![C64::new(0.0, 0.0); sdim];
        for (w, mut v) in members {
            let support: Vec<bool> = v
                .chunks(f)
                .map(|b| b.iter().any(|z| *z != C64::new(0.0, 0.0)))
                .collect();
            // Branch supports are preserved by the evolution, so a member
            // without complementary pairs never contributes to the parity.
            if !(0..sdim).any(|s| support[s] && support[s ^ all]) {
                continue;
            }
            self.system.evolve_branches(&mut v, schedule, until)?;
            for s in 0..sdim {
                if support[s] && support[s ^ all] {
                    acc[s] += dot(
                        &v[s * f..(s + 1) * f],
                        &v[(s ^ all) * f..((s ^ all) + 1) * f],
                    ) * w;
                }
            }
        }
        let amps = sensor_amplitudes(prep, layout)?;
        Ok(BranchOverlaps {
            n_sensors: layout.n(),
            omega0: layout.omega0(),
            t0: schedule.t0,
            last_pulse: until,
            entries: acc
                .into_iter()
                .enumerate()
                .filter(|(_, o)| *o != C64::new(0.0, 0.0))
                .collect(),
            branches: (amps.len() == 2).then(|| (amps[0].0, amps[1].0)),
        })
    }

    pub fn run(
        &self,
        prep: &SensorPreparation,
        schedule: &SourceSchedule,
        noise: &NoiseModel,
    ) -> Result<ParityRecord> {
        self.overlaps(prep, schedule)?
            .record(schedule.id, schedule.readout_time, noise)
    }
}

/// Prepare → evolve → read out, for one schedule.
pub fn run_protocol(
    model: &LatticeModel,
    field_prep: FieldPreparation,
    layout: super::SensorLayout,
    prep: &SensorPreparation,
    schedule: &SourceSchedule,
    noise: &NoiseModel,
    caps: &ResourceCaps,
) -> Result<ParityRecord> {
    let field = prepare_field(model, field_prep, caps)?;
    let mut system = ProtocolSystem::new(model, layout)?;
    system.caps = *caps;
    Protocol::new(system, &field)?.run(prep, schedule, noise)
}
