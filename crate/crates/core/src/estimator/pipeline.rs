use alloc::vec::Vec;

use core::f64::consts::{FRAC_PI_2, PI};

use super::{
    build_source_sets, combine_general, extract_propagator, richardson_extrapolate, DerivativeData,
    PropagatorEstimate, StencilPlan, StencilVariant,
};
use crate::error::Result;
use crate::lattice::{LatticeModel, ResourceCaps};
use crate::linalg::KrylovSettings;
use crate::sensor::{
    NoiseModel, ParityRecord, PreparationKind, Protocol, ProtocolSystem, SensorPreparation,
};
use crate::state::QuantumState;

/// Smallest `T ≥ earliest` with `dk·ω₀·(T − t₀) ≡ θ (mod 2π)`.
pub fn readout_for_phase(theta: f64, dk: usize, omega0: f64, t0: f64, earliest: f64) -> f64 {
    if dk == 0 {
        return earliest;
    }
    let w = dk as f64 * omega0;
    let r = libm::ceil(((earliest - t0) * w - theta) / (2.0 * PI) - 1e-12);
    t0 + (theta + 2.0 * PI * r) / w
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub omega0: f64,
    pub noise: NoiseModel,
    pub krylov: KrylovSettings,
    pub caps: ResourceCaps,
    /// Branch phases for the GHZ readouts (real part at 0, imaginary at π/2).
    pub phases: [f64; 2],
    /// Preparation infidelity passed to the sensor register.
    pub eps_prep: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            omega0: 4.0,
            noise: NoiseModel::NONE,
            krylov: KrylovSettings::default(),
            caps: ResourceCaps::default(),
            phases: [0.0, FRAC_PI_2],
            eps_prep: 0.0,
        }
    }
}

/// Runs the stencils of a plan against one prepared field state.
#[derive(Debug, Clone)]
pub struct PropagatorEstimator<'a> {
    pub model: &'a LatticeModel,
    pub field: &'a QuantumState,
    pub config: EstimatorConfig,
}

impl<'a> PropagatorEstimator<'a> {
    pub fn new(model: &'a LatticeModel, field: &'a QuantumState, config: EstimatorConfig) -> Self {
        Self {
            model,
            field,
            config,
        }
    }

    fn preparation(&self, variant: StencilVariant) -> SensorPreparation {
        let kind = match variant {
            StencilVariant::GhzPhased => PreparationKind::Ghz,
            StencilVariant::DfsReal => PreparationKind::NeelDfsPlus,
            StencilVariant::DfsImag => PreparationKind::NeelDfsQuadrature,
        };
        SensorPreparation::new(kind).with_eps(self.config.eps_prep)
    }

    /// Parity records of every source set, grouped by readout phase.
    pub fn records(&self, plan: &StencilPlan) -> Result<Vec<(f64, Vec<ParityRecord>)>> {
        let schedules = build_source_sets(plan)?;
        let layout = plan.layout(self.config.omega0, self.model.n_sites())?;
        let n_sensors = layout.n();
        let mut system = ProtocolSystem::new(self.model, layout)?;
        system.krylov = self.config.krylov;
        system.caps = self.config.caps;
        let protocol = Protocol::new(system, self.field)?;
        let prep = self.preparation(plan.variant);

        let readouts: Vec<f64> = match plan.variant {
            StencilVariant::GhzPhased => self
                .config
                .phases
                .iter()
                .map(|&th| {
                    readout_for_phase(
                        th,
                        n_sensors,
                        self.config.omega0,
                        plan.t0,
                        plan.readout_time,
                    )
                })
                .collect(),
            _ => alloc::vec![plan.readout_time],
        };
        let mut groups: Vec<(f64, Vec<ParityRecord>)> =
            readouts.iter().map(|_| (0.0, Vec::new())).collect();
        for sched in &schedules {
            let ov = protocol.overlaps(&prep, sched)?;
            for (g, &t) in groups.iter_mut().zip(&readouts) {
                let rec = ov.record(sched.id, t, &self.config.noise)?;
                g.0 = rec.phase_reference;
                g.1.push(rec);
            }
        }
        Ok(groups)
    }

    /// Raw (un-extrapolated) estimate at the plan strengths.
    pub fn estimate(&self, plan: &StencilPlan) -> Result<PropagatorEstimate> {
        let groups = self.records(plan)?;
        let mut samples = Vec::new();
        let mut diagnostics = Vec::new();
        for (theta, recs) in &groups {
            samples.push((*theta, combine_general(recs, &plan.strengths)?));
            diagnostics.extend(recs.iter().map(|r| r.value));
        }
        let data = match plan.variant {
            StencilVariant::GhzPhased => DerivativeData::Phased {
                n: plan.n(),
                samples,
            },
            StencilVariant::DfsReal => DerivativeData::DfsReal {
                value: samples[0].1,
            },
            StencilVariant::DfsImag => DerivativeData::DfsImag {
                value: samples[0].1,
                first_later: plan.first_later(),
            },
        };
        let (value, parts) = extract_propagator(&data)?;
        Ok(PropagatorEstimate {
            value,
            parts,
            bias_order: 2.0,
            strengths: plan.strengths.clone(),
            diagnostics,
        })
    }

    /// Estimates at `𝖩` and `𝖩/2`, combined by Richardson extrapolation.
    pub fn estimate_richardson(&self, plan: &StencilPlan) -> Result<PropagatorEstimate> {
        let coarse = self.estimate(plan)?;
        let fine = self.estimate(&plan.scaled(0.5))?;
        richardson_extrapolate(&coarse, &fine)
    }

    /// Real and imaginary parts from the two Néel variants, extrapolated.
    pub fn estimate_dfs(
        &self,
        points: &[(f64, usize)],
        strength: f64,
    ) -> Result<PropagatorEstimate> {
        let re = StencilPlan::uniform(points.to_vec(), strength, StencilVariant::DfsReal);
        let im = StencilPlan::uniform(points.to_vec(), strength, StencilVariant::DfsImag);
        PropagatorEstimate::join(
            &self.estimate_richardson(&re)?,
            &self.estimate_richardson(&im)?,
        )
    }
}
