use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::Instant;

use anyhow::{anyhow, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use zsense_core::estimator::{
    extract_mass, EstimatorConfig, MassFit, Parts, PropagatorEstimate, PropagatorEstimator,
    StencilPlan, StencilVariant,
};
use zsense_core::ions::{
    effective_couplings, soft_mode_check, solve_equilibrium, zigzag_thresholds, FieldParams,
    SiteCouplings,
};
use zsense_core::lattice::{
    free_propagator_exact, ground_state, Boundary, CorrelatorOracle, Couplings, FockBasis,
    LatticeModel,
};
use zsense_core::linalg::C64;
use zsense_core::sensor::{
    prepare_field, FieldPreparation, NoiseKind, ParityRecord, Protocol, ProtocolSystem,
    SensorLayout, SensorPreparation, SourceSchedule,
};
use zsense_core::state::QuantumState;
use zsense_core::Error as CoreError;

use crate::config::{ExperimentConfig, RunPoint, Task, Variant};

pub const RESULT_SCHEMA: &str = "zsense.result_set";
pub const RESULT_SCHEMA_VERSION: u32 = 1;

pub fn code_version() -> String {
    format!("zsense {}", env!("CARGO_PKG_VERSION"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleSource {
    FreeModeSum,
    ExactDiagonalization,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    /// A resource cap was hit; the rest of the experiment continued.
    Skipped(String),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    GroundState {
        energy: f64,
        gap: Option<f64>,
        dim: usize,
    },
    Parity {
        points: Vec<(f64, usize)>,
        variant: StencilVariant,
        strengths: Vec<f64>,
        record: ParityRecord,
    },
    Propagator {
        points: Vec<(f64, usize)>,
        estimate: PropagatorEstimate,
        oracle: Option<C64>,
        oracle_source: Option<OracleSource>,
        /// Error over the parts the estimate carries.
        abs_error: Option<f64>,
    },
    Mass {
        m0sq: f64,
        lambda: f64,
        fit: MassFit,
        ed_gap: Option<f64>,
    },
    NoiseScaling {
        n: usize,
        noise: NoiseKind,
        t2: f64,
        rate: f64,
        reference: f64,
    },
    IonSite {
        site: usize,
        couplings: SiteCouplings,
    },
    IonCrystal {
        length_scale: f64,
        kappa: f64,
        bulk: Option<FieldParams>,
        unstable_sites: Vec<usize>,
        quasi_1d: bool,
        soft_mode_omega_sq: f64,
        staggered_overlap: f64,
        threshold_local: f64,
        threshold_hessian: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub run: usize,
    pub params: BTreeMap<String, Value>,
    pub config_hash: String,
    pub code_version: String,
    #[serde(flatten)]
    pub status: RowStatus,
    pub payload: Option<Payload>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultSet {
    pub schema: String,
    pub schema_version: u32,
    pub code_version: String,
    pub task: Task,
    pub runs: Vec<RunPoint>,
    pub rows: Vec<Row>,
}

impl ResultSet {
    pub fn is_partial(&self) -> bool {
        self.rows.iter().any(|r| r.status != RowStatus::Ok)
    }

    pub fn count(&self, pred: impl Fn(&Payload) -> bool) -> usize {
        self.rows.iter().filter(|r| r.payload.as_ref().is_some_and(&pred)).count()
    }
}

fn status_of(e: &anyhow::Error) -> RowStatus {
    match e.downcast_ref::<CoreError>() {
        Some(CoreError::ResourceLimit { .. }) => RowStatus::Skipped(e.to_string()),
        _ => RowStatus::Failed(format!("{e:#}")),
    }
}

/// Shared per-run state: the model, its prepared field and (where the
/// dimension permits) the exact-diagonalization oracle.
struct Context {
    config: ExperimentConfig,
    couplings: Couplings,
    model: LatticeModel,
    prep: FieldPreparation,
    field: QuantumState,
    oracle: Option<CorrelatorOracle>,
}

impl Context {
    fn build(config: &ExperimentConfig, with_oracle: bool) -> Result<Self> {
        let spec = config.lattice_spec()?;
        let couplings = resolve_couplings(config)?;
        let basis = match config.basis.local_freq {
            Some(w) => FockBasis::new(config.basis.n_max, w)?,
            None => FockBasis::adapted(config.basis.n_max, &spec, &couplings),
        };
        let caps = config.caps();
        let model = LatticeModel::build(spec, couplings, basis, &caps)?;
        let prep = config.field.preparation()?;
        let field = prepare_field(&model, prep, &caps)?;
        let oracle = if with_oracle {
            match CorrelatorOracle::new(&model, &caps) {
                Ok(o) => Some(o),
                Err(CoreError::ResourceLimit { .. }) => None,
                Err(e) => return Err(e.into()),
            }
        } else {
            None
        };
        Ok(Self { config: config.clone(), couplings, model, prep, field, oracle })
    }

    fn estimator(&self) -> PropagatorEstimator<'_> {
        let c = &self.config;
        let config = EstimatorConfig {
            omega0: c.sensors.omega0,
            noise: c.noise.model().expect("validated"),
            caps: c.caps(),
            eps_prep: c.sensors.eps_prep,
            ..EstimatorConfig::default()
        };
        PropagatorEstimator::new(&self.model, &self.field, config)
    }

    fn oracle(&self, points: &[(f64, usize)]) -> Result<Option<(C64, OracleSource)>> {
        let spec = &self.model.spec;
        let free_vacuum = self.couplings.lambda == 0.0
            && self.prep == FieldPreparation::Vacuum
            && spec.boundary == Boundary::Periodic
            && points.len() == 2;
        if free_vacuum {
            let dt = points[1].0 - points[0].0;
            let dx = points[1].1 as i64 - points[0].1 as i64;
            let g = free_propagator_exact(spec, self.couplings.m0sq, dt, dx)?;
            return Ok(Some((g, OracleSource::FreeModeSum)));
        }
        let Some(o) = &self.oracle else { return Ok(None) };
        let g = match self.prep {
            FieldPreparation::Vacuum => o.vacuum(points)?,
            FieldPreparation::Gibbs { beta } => o.thermal(beta, points)?,
        };
        Ok(Some((g, OracleSource::ExactDiagonalization)))
    }
}

fn resolve_couplings(config: &ExperimentConfig) -> Result<Couplings> {
    if let Some(c) = &config.couplings {
        return Ok(Couplings::new(c.m0sq, c.lambda)?);
    }
    let ions = config.ions.as_ref().ok_or_else(|| anyhow!("no coupling source"))?;
    let crystal = ions.crystal();
    let pos = solve_equilibrium(&crystal)?;
    Ok(effective_couplings(&crystal, &pos)?.lattice_couplings()?)
}

fn plan_for(points: &[(f64, usize)], j: f64, variant: StencilVariant) -> StencilPlan {
    StencilPlan::uniform(points.to_vec(), j, variant)
}

fn estimate(
    est: &PropagatorEstimator<'_>,
    points: &[(f64, usize)],
    c: &ExperimentConfig,
) -> Result<PropagatorEstimate> {
    let j = c.propagator.strength;
    let one = |variant| {
        let plan = plan_for(points, j, variant);
        if c.propagator.richardson {
            est.estimate_richardson(&plan)
        } else {
            est.estimate(&plan)
        }
    };
    Ok(match c.propagator.variant {
        Variant::GhzPhased => one(StencilVariant::GhzPhased)?,
        Variant::DfsReal => one(StencilVariant::DfsReal)?,
        Variant::DfsImag => one(StencilVariant::DfsImag)?,
        Variant::Dfs => PropagatorEstimate::join(
            &one(StencilVariant::DfsReal)?,
            &one(StencilVariant::DfsImag)?,
        )?,
    })
}

fn core_variants(v: Variant) -> Vec<StencilVariant> {
    match v {
        Variant::GhzPhased => vec![StencilVariant::GhzPhased],
        Variant::DfsReal => vec![StencilVariant::DfsReal],
        Variant::DfsImag => vec![StencilVariant::DfsImag],
        Variant::Dfs => vec![StencilVariant::DfsReal, StencilVariant::DfsImag],
    }
}

fn abs_error(est: &PropagatorEstimate, oracle: C64) -> f64 {
    let d = est.value - oracle;
    match est.parts {
        Parts::Both => d.norm(),
        Parts::RealOnly => d.re.abs(),
        Parts::ImagOnly => d.im.abs(),
    }
}

/// Output of one unit of work, before provenance is attached.
type Unit = (Result<Vec<Payload>>, f64);

fn timed(f: impl FnOnce() -> Result<Vec<Payload>>) -> Unit {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

fn propagator_payloads(ctx: &Context, points: &[(f64, usize)], parities: bool) -> Result<Vec<Payload>> {
    let est = ctx.estimator();
    let c = &ctx.config;
    let mut out = Vec::new();
    if parities {
        let mut scales = vec![1.0];
        if c.propagator.richardson {
            scales.push(0.5);
        }
        for variant in core_variants(c.propagator.variant) {
            for &s in &scales {
                let plan = plan_for(points, c.propagator.strength, variant).scaled(s);
                for (_, recs) in est.records(&plan)? {
                    out.extend(recs.into_iter().map(|record| Payload::Parity {
                        points: points.to_vec(),
                        variant,
                        strengths: plan.strengths.clone(),
                        record,
                    }));
                }
            }
        }
    }
    let estimate = estimate(&est, points, c)?;
    let oracle = ctx.oracle(points)?;
    out.push(Payload::Propagator {
        points: points.to_vec(),
        abs_error: oracle.map(|(g, _)| abs_error(&estimate, g)),
        oracle: oracle.map(|o| o.0),
        oracle_source: oracle.map(|o| o.1),
        estimate,
    });
    Ok(out)
}

fn ground_state_payload(ctx: &Context) -> Result<Vec<Payload>> {
    let (energy, _) = ground_state(&ctx.model.hamiltonian, 1e-11)?;
    let gap = ctx.oracle.as_ref().map(|o| o.spectrum().gap());
    Ok(vec![Payload::GroundState { energy, gap, dim: ctx.model.field_dim() }])
}

fn mass_payload(ctx: &Context) -> Result<Vec<Payload>> {
    let est = ctx.estimator();
    let c = &ctx.config;
    let n = ctx.model.n_sites();
    let samples: Vec<(f64, C64)> = (1..=c.mass.samples)
        .into_par_iter()
        .map(|k| {
            let t = c.mass.dt * k as f64;
            let mut sum = C64::new(0.0, 0.0);
            for x in 0..n {
                let plan = plan_for(&[(0.0, 0), (t, x)], c.propagator.strength, StencilVariant::GhzPhased);
                sum += est.estimate_richardson(&plan)?.value;
            }
            Ok((t, sum))
        })
        .collect::<Result<_>>()?;
    let fit = extract_mass(&samples)?;
    Ok(vec![Payload::Mass {
        m0sq: ctx.couplings.m0sq,
        lambda: ctx.couplings.lambda,
        fit,
        ed_gap: ctx.oracle.as_ref().map(|o| o.spectrum().gap()),
    }])
}

/// Decay rate of the `J = 0` GHZ parity envelope, read at full branch-phase
/// periods and fitted as a straight line in `ln P`.
fn noise_payload(ctx: &Context, n: usize) -> Result<Vec<Payload>> {
    let c = &ctx.config;
    let noise = c.noise.model()?;
    let omega0 = c.sensors.omega0;
    let layout = SensorLayout::new((0..n).collect(), omega0, ctx.model.n_sites())?;
    let mut system = ProtocolSystem::new(&ctx.model, layout)?;
    system.caps = c.caps();
    let proto = Protocol::new(system, &ctx.field)?;
    let period = 2.0 * PI / (n as f64 * omega0);
    let prep = SensorPreparation::ghz().with_eps(c.sensors.eps_prep);
    let ov = proto.overlaps(&prep, &SourceSchedule::empty(0, 0.0, 0.0))?;
    let pts = (1..=c.noise_scaling.readouts)
        .map(|k| {
            let tau = k as f64 * period;
            Ok((tau, ov.parity_at(tau, &noise)?.abs().ln()))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let np = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / np;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / np;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let f = match noise.kind {
        NoiseKind::GlobalDephasing => (n * n) as f64,
        _ => n as f64,
    };
    Ok(vec![Payload::NoiseScaling {
        n,
        noise: noise.kind,
        t2: noise.t2,
        rate: -sxy / sxx,
        reference: f / noise.t2,
    }])
}

fn ion_payloads(config: &ExperimentConfig) -> Result<Vec<Payload>> {
    let crystal = config.ions.as_ref().ok_or_else(|| anyhow!("no ions block"))?.crystal();
    let pos = solve_equilibrium(&crystal)?;
    let e = effective_couplings(&crystal, &pos)?;
    let soft = soft_mode_check(&crystal, &pos)?;
    let th = zigzag_thresholds(&crystal, &pos)?;
    let mut out: Vec<Payload> = e
        .sites
        .iter()
        .enumerate()
        .map(|(site, s)| Payload::IonSite { site, couplings: *s })
        .collect();
    out.push(Payload::IonCrystal {
        length_scale: e.length_scale,
        kappa: e.kappa,
        bulk: e.bulk,
        unstable_sites: e.unstable_sites.clone(),
        quasi_1d: e.quasi_1d,
        soft_mode_omega_sq: soft.omega_sq,
        staggered_overlap: soft.staggered_overlap,
        threshold_local: th.local,
        threshold_hessian: th.hessian,
    });
    Ok(out)
}

fn run_point(run: &RunPoint) -> Vec<Unit> {
    let c = &run.config;
    if c.task == Task::IonMap {
        return vec![timed(|| ion_payloads(c))];
    }
    let with_oracle = !matches!(c.task, Task::NoiseScaling);
    let start = Instant::now();
    let ctx = match Context::build(c, with_oracle) {
        Ok(ctx) => ctx,
        Err(e) => return vec![(Err(e), start.elapsed().as_secs_f64())],
    };
    match c.task {
        Task::GroundState => vec![timed(|| ground_state_payload(&ctx))],
        Task::Propagator | Task::Protocol => {
            let parities = c.task == Task::Protocol;
            c.propagator
                .plans()
                .par_iter()
                .map(|pts| timed(|| propagator_payloads(&ctx, pts, parities)))
                .collect()
        }
        Task::Mass => vec![timed(|| mass_payload(&ctx))],
        Task::NoiseScaling => c
            .noise_scaling
            .sensors
            .par_iter()
            .map(|&n| timed(|| noise_payload(&ctx, n)))
            .collect(),
        Task::IonMap => unreachable!(),
    }
}

/// Runs every sweep point. Points and the work units inside them run in
/// parallel; row order is fixed by the plan, so the output is deterministic.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultSet> {
    let runs = config.expand()?;
    let work = || -> Vec<Vec<Unit>> { runs.par_iter().map(run_point).collect() };
    let units = match config.workers() {
        Some(w) => rayon::ThreadPoolBuilder::new().num_threads(w).build()?.install(work),
        None => work(),
    };
    let version = code_version();
    let mut rows = Vec::new();
    for (run, units) in runs.iter().zip(units) {
        let row = |status, payload, wall_time_s| Row {
            run: run.index,
            params: run.params.clone(),
            config_hash: run.config_hash.clone(),
            code_version: version.clone(),
            status,
            payload,
            wall_time_s,
        };
        for (out, wall) in units {
            match out {
                Ok(payloads) => {
                    rows.extend(payloads.into_iter().map(|p| row(RowStatus::Ok, Some(p), wall)))
                }
                Err(e) => rows.push(row(status_of(&e), None, wall)),
            }
        }
    }
    Ok(ResultSet {
        schema: RESULT_SCHEMA.into(),
        schema_version: RESULT_SCHEMA_VERSION,
        code_version: version,
        task: config.task,
        runs,
        rows,
    })
}
