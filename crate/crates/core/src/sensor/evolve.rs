use alloc::vec::Vec;

use super::{apply_dephasing, NoiseModel, SensorLayout, SourceSchedule};
use crate::error::{Error, Result};
use crate::lattice::{apply_local, LatticeModel, ResourceCaps};
use crate::linalg::{dot, herm_eigen, propagate, KrylovSettings, KrylovStats, C64};
use crate::state::{Dims, Mixture, QuantumState};

/// The joint field + sensor system a schedule acts on. The field Hamiltonian
/// is borrowed read-only, so one model can serve many concurrent runs.
#[derive(Debug, Clone)]
pub struct ProtocolSystem<'a> {
    pub model: &'a LatticeModel,
    pub layout: SensorLayout,
    pub krylov: KrylovSettings,
    pub caps: ResourceCaps,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EvolutionReport {
    pub krylov: KrylovStats,
    pub kicks: usize,
}

impl EvolutionReport {
    pub fn merge(&mut self, other: EvolutionReport) {
        self.krylov.merge(other.krylov);
        self.kicks += other.kicks;
    }
}

impl<'a> ProtocolSystem<'a> {
    pub fn new(model: &'a LatticeModel, layout: SensorLayout) -> Result<Self> {
        if layout.sites().iter().any(|&s| s >= model.n_sites()) {
            return Err(Error::InvalidParameter(
                "sensor site outside the lattice".into(),
            ));
        }
        Ok(Self {
            model,
            layout,
            krylov: KrylovSettings::default(),
            caps: ResourceCaps::default(),
        })
    }

    pub fn dims(&self) -> Dims {
        Dims {
            field: self.model.field_dim(),
            sensors: self.layout.n(),
        }
    }

    /// Evolves every nonzero sensor branch of `amps` from `schedule.t0` to
    /// `until` under the field Hamiltonian and the kicks with time `<= until`.
    /// Sensor phases are *not* applied.
    pub(crate) fn evolve_branches(
        &self,
        amps: &mut [C64],
        schedule: &SourceSchedule,
        until: f64,
    ) -> Result<EvolutionReport> {
        let f = self.model.field_dim();
        let n_sites = self.model.n_sites();
        let h = &self.model.hamiltonian;
        let mut report = EvolutionReport::default();
        for (s, block) in amps.chunks_mut(f).enumerate() {
            if block.iter().all(|z| *z == C64::new(0.0, 0.0)) {
                continue;
            }
            let mut t = schedule.t0;
            for p in schedule.pulses.iter().take_while(|p| p.time <= until) {
                if p.time > t {
                    report
                        .krylov
                        .merge(propagate(h, block, p.time - t, &self.krylov)?);
                    t = p.time;
                }
                let j = self
                    .layout
                    .sensor_at(p.site)
                    .ok_or_else(|| Error::InvalidInput("pulse on a site without sensor".into()))?;
                let bit = s & self.layout.bit(j) != 0;
                let c = p.strength * p.stagger_sign as f64 * p.coupling.eigenvalue(bit);
                if c != 0.0 {
                    apply_local(&self.model.kick_unitary(c), p.site, n_sites, block);
                    report.kicks += 1;
                }
            }
            if until > t {
                report
                    .krylov
                    .merge(propagate(h, block, until - t, &self.krylov)?);
            }
        }
        Ok(report)
    }

    /// Multiplies branch `s` by `e^{−iω₀ k_s τ}`.
    pub(crate) fn apply_sensor_phase(&self, amps: &mut [C64], tau: f64) {
        let f = self.model.field_dim();
        let w = self.layout.omega0();
        for (s, block) in amps.chunks_mut(f).enumerate() {
            let k = s.count_ones() as f64;
            if k == 0.0 {
                continue;
            }
            let ph = C64::new(0.0, -w * k * tau).exp();
            block.iter_mut().for_each(|z| *z *= ph);
        }
    }

    fn check_dims(&self, state: &QuantumState) -> Result<()> {
        if state.dims() != self.dims() {
            return Err(Error::InvalidInput(
                "state dimensions do not match the system".into(),
            ));
        }
        self.caps
            .check_sparse("joint Hilbert space", self.dims().total())
    }
}

/// Full joint evolution from `t0` to the readout time: Krylov propagation
/// between pulses, exact kick unitaries `exp(i𝖩sφ(x)⊗C_x)`, the free sensor
/// phase, and then dephasing over the whole window.
pub fn evolve_schedule(
    system: &ProtocolSystem<'_>,
    state: &QuantumState,
    schedule: &SourceSchedule,
    noise: &NoiseModel,
) -> Result<(QuantumState, EvolutionReport)> {
    schedule.validate(&system.layout)?;
    noise.validate()?;
    system.check_dims(state)?;
    let tau = schedule.readout_time - schedule.t0;
    let mut report = EvolutionReport::default();
    let mut run = |v: &mut Vec<C64>| -> Result<()> {
        report.merge(system.evolve_branches(v, schedule, schedule.readout_time)?);
        system.apply_sensor_phase(v, tau);
        Ok(())
    };
    let evolved = match state {
        QuantumState::Pure(p) => {
            let mut v = p.amps.clone();
            run(&mut v)?;
            QuantumState::pure(p.dims, v)?
        }
        QuantumState::Mixed(m) => {
            let mut members = m.members.clone();
            for (_, v) in members.iter_mut() {
                run(v)?;
            }
            QuantumState::Mixed(Mixture {
                dims: m.dims,
                members,
                coherence: m.coherence.clone(),
            })
        }
        QuantumState::Density(d) => {
            let (vals, vecs) = herm_eigen(&d.matrix)?;
            let mut members = Vec::new();
            for (k, &w) in vals.iter().enumerate() {
                if w > 1e-15 {
                    let mut v: Vec<C64> = vecs.column(k).iter().copied().collect();
                    run(&mut v)?;
                    members.push((w, v));
                }
            }
            QuantumState::Mixed(Mixture {
                dims: d.dims,
                members,
                coherence: None,
            })
        }
    };
    let out = apply_dephasing(&evolved, noise, tau, &system.layout)?;
    Ok((out, report))
}

/// `⟨Π_j σ¹_j⟩` over all sensors of the state.
pub fn parity_expectation(state: &QuantumState, layout: &SensorLayout) -> f64 {
    let dims = state.dims();
    debug_assert_eq!(dims.sensors, layout.n());
    let f = dims.field;
    let all = dims.sensor_dim() - 1;
    let pure_sum = |v: &[C64], mask: Option<&crate::state::CoherenceMask>| -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for s in 0..=all {
            let a = &v[s * f..(s + 1) * f];
            let b = &v[(s ^ all) * f..((s ^ all) + 1) * f];
            let factor = mask.map_or(1.0, |m| m.get(s, s ^ all));
            if factor != 0.0 {
                acc += dot(a, b) * factor;
            }
        }
        acc
    };
    let total = match state {
        QuantumState::Pure(p) => pure_sum(&p.amps, None),
        QuantumState::Mixed(m) => m
            .members
            .iter()
            .map(|(w, v)| pure_sum(v, m.coherence.as_ref()) * *w)
            .sum(),
        QuantumState::Density(d) => {
            let mut acc = C64::new(0.0, 0.0);
            for s in 0..=all {
                for i in 0..f {
                    acc += d.matrix[((s ^ all) * f + i, s * f + i)];
                }
            }
            acc
        }
    };
    total.re
}
