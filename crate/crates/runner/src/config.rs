use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use zsense_core::ions::{Geometry, IonCrystalConfig, SpringKernel};
use zsense_core::lattice::{Boundary, Couplings, FockBasis, LatticeSpec, ResourceCaps};
use zsense_core::sensor::{FieldPreparation, NoiseKind, NoiseModel};

pub const ENV_MAX_DIM: &str = "ZSENSE_MAX_DIM";
pub const ENV_MAX_WORKERS: &str = "ZSENSE_MAX_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    GroundState,
    #[default]
    Propagator,
    Protocol,
    Mass,
    NoiseScaling,
    IonMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub task: Task,
    #[serde(default)]
    pub lattice: LatticeConfig,
    #[serde(default)]
    pub couplings: Option<CouplingsConfig>,
    #[serde(default)]
    pub ions: Option<IonsConfig>,
    #[serde(default)]
    pub basis: BasisConfig,
    #[serde(default)]
    pub sensors: SensorConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub field: FieldConfig,
    #[serde(default)]
    pub propagator: PropagatorConfig,
    #[serde(default)]
    pub mass: MassConfig,
    #[serde(default)]
    pub noise_scaling: NoiseScalingConfig,
    /// Dotted parameter path → list of values; expanded as a cartesian product.
    #[serde(default)]
    pub sweep: BTreeMap<String, Vec<Value>>,
    #[serde(default)]
    pub resources: ResourceConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Recorded for provenance; all current noise models are deterministic.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    #[serde(default = "default_sites")]
    pub n_sites: usize,
    #[serde(default = "default_boundary")]
    pub boundary: Boundary,
    #[serde(default = "one")]
    pub spacing: f64,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self { n_sites: default_sites(), boundary: default_boundary(), spacing: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingsConfig {
    pub m0sq: f64,
    #[serde(default)]
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryKind {
    LinearChain,
    Ring,
    Subwavelength,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IonsConfig {
    pub n_ions: usize,
    #[serde(default = "default_geometry")]
    pub geometry: GeometryKind,
    /// Nearest-neighbour spacing of periodic geometries.
    #[serde(default = "one")]
    pub spacing: f64,
    /// `[ω_x, ω_y, ω_z]`.
    pub omega: [f64; 3],
    #[serde(default = "one")]
    pub mass: f64,
    #[serde(default = "one")]
    pub e0_sq: f64,
    #[serde(default)]
    pub kernel: SpringKernel,
}

impl IonsConfig {
    pub fn crystal(&self) -> IonCrystalConfig {
        let geometry = match self.geometry {
            GeometryKind::LinearChain => Geometry::LinearChain,
            GeometryKind::Ring => Geometry::Ring { spacing: self.spacing },
            GeometryKind::Subwavelength => Geometry::Subwavelength { spacing: self.spacing },
        };
        IonCrystalConfig {
            n_ions: self.n_ions,
            geometry,
            omega: self.omega,
            mass: self.mass,
            e0_sq: self.e0_sq,
            kernel: self.kernel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    /// Oscillator frequency of the Fock basis; adapted to the couplings if absent.
    #[serde(default)]
    pub local_freq: Option<f64>,
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self { n_max: default_n_max(), local_freq: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    #[serde(default = "default_omega0")]
    pub omega0: f64,
    #[serde(default)]
    pub eps_prep: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self { omega0: default_omega0(), eps_prep: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default = "default_noise_kind")]
    pub kind: NoiseKind,
    #[serde(default)]
    pub t2: Option<f64>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { kind: NoiseKind::None, t2: None }
    }
}

impl NoiseConfig {
    pub fn model(&self) -> Result<NoiseModel> {
        let model = match (self.kind, self.t2) {
            (NoiseKind::None, _) => NoiseModel::NONE,
            (_, None) => bail!("noise.t2 is required for {:?}", self.kind),
            (kind, Some(t2)) => NoiseModel { kind, t2 },
        };
        model.validate().map_err(|e| anyhow!("noise: {e}"))?;
        Ok(model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Vacuum,
    Gibbs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    #[serde(default = "default_field_kind")]
    pub preparation: FieldKind,
    #[serde(default)]
    pub beta: Option<f64>,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self { preparation: FieldKind::Vacuum, beta: None }
    }
}

impl FieldConfig {
    pub fn preparation(&self) -> Result<FieldPreparation> {
        match (self.preparation, self.beta) {
            (FieldKind::Vacuum, _) => Ok(FieldPreparation::Vacuum),
            (FieldKind::Gibbs, Some(beta)) if beta > 0.0 => Ok(FieldPreparation::Gibbs { beta }),
            (FieldKind::Gibbs, Some(beta)) => bail!("field.beta must be positive, got {beta}"),
            (FieldKind::Gibbs, None) => bail!("field.beta is required for a gibbs preparation"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Variant {
    GhzPhased,
    DfsReal,
    DfsImag,
    /// Both Néel variants, joined into a complex estimate.
    Dfs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagatorConfig {
    #[serde(default = "default_strength")]
    pub strength: f64,
    #[serde(default = "default_variant")]
    pub variant: Variant,
    #[serde(default = "yes")]
    pub richardson: bool,
    /// Grid of two-point plans `[(0, 0), (t, x)]`.
    #[serde(default = "default_times")]
    pub times: Vec<f64>,
    #[serde(default = "default_separations")]
    pub separations: Vec<usize>,
    /// Additional explicit plans, each a list of `[t, site]` points.
    #[serde(default)]
    pub stencils: Vec<Vec<(f64, usize)>>,
}

impl Default for PropagatorConfig {
    fn default() -> Self {
        Self {
            strength: default_strength(),
            variant: default_variant(),
            richardson: true,
            times: default_times(),
            separations: default_separations(),
            stencils: Vec::new(),
        }
    }
}

impl PropagatorConfig {
    pub fn plans(&self) -> Vec<Vec<(f64, usize)>> {
        let mut out: Vec<Vec<(f64, usize)>> = self
            .times
            .iter()
            .flat_map(|&t| self.separations.iter().map(move |&x| vec![(0.0, 0), (t, x)]))
            .collect();
        out.extend(self.stencils.iter().cloned());
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MassConfig {
    /// Zero-momentum correlator sampled at `t = k·dt`, `k = 1..=samples`.
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_mass_samples")]
    pub samples: usize,
}

impl Default for MassConfig {
    fn default() -> Self {
        Self { dt: default_dt(), samples: default_mass_samples() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseScalingConfig {
    /// GHZ register sizes; sensor `j` sits on site `j`.
    #[serde(default = "default_register_sizes")]
    pub sensors: Vec<usize>,
    /// Readouts at the first `readouts` full branch-phase periods.
    #[serde(default = "default_readouts")]
    pub readouts: usize,
}

impl Default for NoiseScalingConfig {
    fn default() -> Self {
        Self { sensors: default_register_sizes(), readouts: default_readouts() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceConfig {
    /// Largest joint Hilbert dimension for sparse evolution.
    #[serde(default)]
    pub max_dim: Option<usize>,
    /// Largest field dimension for dense diagonalization (oracles, Gibbs states).
    #[serde(default)]
    pub max_dense_dim: Option<usize>,
    #[serde(default)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: String,
    #[serde(default = "default_name")]
    pub name: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_dir(), name: default_name() }
    }
}

fn default_sites() -> usize {
    4
}
fn default_boundary() -> Boundary {
    Boundary::Periodic
}
fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn default_geometry() -> GeometryKind {
    GeometryKind::LinearChain
}
fn default_n_max() -> usize {
    8
}
fn default_omega0() -> f64 {
    4.0
}
fn default_noise_kind() -> NoiseKind {
    NoiseKind::None
}
fn default_field_kind() -> FieldKind {
    FieldKind::Vacuum
}
fn default_strength() -> f64 {
    0.05
}
fn default_variant() -> Variant {
    Variant::GhzPhased
}
fn default_times() -> Vec<f64> {
    vec![0.5, 1.0]
}
fn default_separations() -> Vec<usize> {
    vec![0, 1]
}
fn default_dt() -> f64 {
    0.25
}
fn default_mass_samples() -> usize {
    32
}
fn default_register_sizes() -> Vec<usize> {
    vec![1, 2, 3, 4]
}
fn default_readouts() -> usize {
    12
}
fn default_dir() -> String {
    "results".into()
}
fn default_name() -> String {
    "run".into()
}

/// Reads a TOML document, applies `key=value` overrides and validates.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    load_config(Some(path), &[])
}

pub fn load_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
    let mut doc = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            text.parse::<toml::Table>()
                .with_context(|| format!("parsing config {}", p.display()))?
        }
        None => toml::Table::new(),
    };
    for (key, raw) in overrides {
        set_toml(&mut doc, key, parse_scalar(raw))?;
    }
    let config: ExperimentConfig = toml::Value::Table(doc)
        .try_into()
        .map_err(|e: toml::de::Error| anyhow!("invalid config: {}", e.message()))?;
    config.validate()?;
    Ok(config)
}

/// Parses an override value as a TOML scalar or array, falling back to a string.
fn parse_scalar(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_toml(doc: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let leaf = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| anyhow!("empty override key"))?;
    let mut table = doc;
    for p in parts {
        table = table
            .entry(p)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| anyhow!("override `{key}`: `{p}` is not a table"))?;
    }
    table.insert(leaf.to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        match (&self.couplings, &self.ions) {
            (Some(_), Some(_)) => {
                bail!("exactly one coupling source allowed: found both `couplings` and `ions`")
            }
            (None, None) if self.task != Task::IonMap => {
                bail!("a coupling source is required: give `couplings` or `ions`")
            }
            (None, None) => bail!("task ion_map requires an `ions` block"),
            (Some(_), None) if self.task == Task::IonMap => {
                bail!("task ion_map requires an `ions` block")
            }
            _ => {}
        }
        self.lattice_spec()?;
        if let Some(c) = &self.couplings {
            Couplings::new(c.m0sq, c.lambda).map_err(|e| anyhow!("couplings: {e}"))?;
        }
        if let Some(ions) = &self.ions {
            ions.crystal().validate().map_err(|e| anyhow!("ions: {e}"))?;
        }
        if let Some(w) = self.basis.local_freq {
            FockBasis::new(self.basis.n_max, w).map_err(|e| anyhow!("basis: {e}"))?;
        }
        if !(self.sensors.omega0 > 0.0) {
            bail!("sensors.omega0 must be positive");
        }
        if !(0.0..1.0).contains(&self.sensors.eps_prep) {
            bail!("sensors.eps_prep must lie in [0, 1)");
        }
        self.noise.model()?;
        self.field.preparation()?;
        if !(self.propagator.strength > 0.0) {
            bail!("propagator.strength must be positive");
        }
        let n = self.lattice.n_sites;
        for plan in self.propagator.plans() {
            if let Some(&(_, x)) = plan.iter().find(|p| p.1 >= n) {
                bail!("propagator: site {x} outside a lattice of {n} sites");
            }
        }
        if !(self.mass.dt > 0.0) || self.mass.samples < 8 {
            bail!("mass: need dt > 0 and at least 8 samples");
        }
        if self.task == Task::NoiseScaling {
            if self.noise.kind == NoiseKind::None {
                bail!("task noise_scaling needs a dephasing noise model");
            }
            if let Some(&s) = self.noise_scaling.sensors.iter().find(|&&s| s == 0 || s > n) {
                bail!("noise_scaling: register size {s} must lie in 1..={n}");
            }
            if self.noise_scaling.readouts < 2 {
                bail!("noise_scaling.readouts must be at least 2");
            }
        }
        if self.resources.workers == Some(0) {
            bail!("resources.workers must be positive");
        }
        let doc = serde_json::to_value(self)?;
        for key in self.sweep.keys() {
            lookup(&doc, key)?;
        }
        Ok(())
    }

    pub fn lattice_spec(&self) -> Result<LatticeSpec> {
        LatticeSpec::new(self.lattice.n_sites, self.lattice.boundary, self.lattice.spacing)
            .map_err(|e| anyhow!("lattice: {e}"))
    }

    /// Caps from the config, tightened by the environment.
    pub fn caps(&self) -> ResourceCaps {
        let env = env_usize(ENV_MAX_DIM);
        let d = ResourceCaps::default();
        let sparse = [self.resources.max_dim, env].into_iter().flatten().fold(d.max_sparse_dim, usize::min);
        let dense = [self.resources.max_dense_dim, self.resources.max_dim, env]
            .into_iter()
            .flatten()
            .fold(d.max_dense_dim, usize::min);
        ResourceCaps { max_sparse_dim: sparse, max_dense_dim: dense }
    }

    pub fn workers(&self) -> Option<usize> {
        match (self.resources.workers, env_usize(ENV_MAX_WORKERS)) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    /// Canonical hash of the resolved configuration.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        format!("{:x}", Sha256::digest(bytes))
    }

    /// Cartesian expansion of the sweep axes, in key order with the last
    /// key varying fastest. An empty sweep yields the config itself.
    pub fn expand(&self) -> Result<Vec<RunPoint>> {
        let base = ExperimentConfig { sweep: BTreeMap::new(), ..self.clone() };
        let axes: Vec<(&String, &Vec<Value>)> = self.sweep.iter().collect();
        if let Some((k, _)) = axes.iter().find(|(_, v)| v.is_empty()) {
            bail!("sweep axis `{k}` has no values");
        }
        let total: usize = axes.iter().map(|(_, v)| v.len()).product();
        let mut runs = Vec::with_capacity(total);
        for index in 0..total {
            let mut doc = serde_json::to_value(&base)?;
            let mut params = BTreeMap::new();
            let mut rem = index;
            for (key, values) in axes.iter().rev() {
                let v = &values[rem % values.len()];
                rem /= values.len();
                *lookup_mut(&mut doc, key)? = v.clone();
                params.insert((*key).clone(), v.clone());
            }
            let config: ExperimentConfig = serde_json::from_value(doc)
                .map_err(|e| anyhow!("sweep point {index}: {e}"))?;
            config.validate().with_context(|| format!("sweep point {index}"))?;
            let config_hash = config.hash();
            runs.push(RunPoint { index, params, config, config_hash });
        }
        Ok(runs)
    }
}

/// One resolved point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunPoint {
    pub index: usize,
    pub params: BTreeMap<String, Value>,
    pub config: ExperimentConfig,
    pub config_hash: String,
}

fn env_usize(name: &str) -> Option<usize> {
    std::env::var(name).ok().and_then(|s| s.trim().parse().ok())
}

fn lookup<'a>(doc: &'a Value, key: &str) -> Result<&'a Value> {
    let mut cur = doc;
    for p in key.split('.') {
        cur = cur
            .as_object()
            .and_then(|o| o.get(p))
            .ok_or_else(|| anyhow!("sweep axis `{key}` does not name a config parameter"))?;
    }
    if cur.is_object() {
        bail!("sweep axis `{key}` names a table, not a parameter");
    }
    Ok(cur)
}

fn lookup_mut<'a>(doc: &'a mut Value, key: &str) -> Result<&'a mut Value> {
    let mut cur = doc;
    for p in key.split('.') {
        cur = cur
            .as_object_mut()
            .and_then(|o| o.get_mut(p))
            .ok_or_else(|| anyhow!("sweep axis `{key}` does not name a config parameter"))?;
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, text).unwrap();
        parse_config(&p)
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let c = parse("[couplings]\nm0sq = 1.0\n").unwrap();
        assert_eq!(c.basis.n_max, 8);
        assert_eq!(c.propagator.strength, 0.05);
        assert_eq!(c.noise.model().unwrap(), NoiseModel::NONE);
        assert_eq!(c.couplings.as_ref().unwrap().lambda, 0.0);
    }

    #[test]
    fn both_coupling_sources_rejected() {
        let e = parse("[couplings]\nm0sq = 1.0\n[ions]\nn_ions = 4\nomega = [5.0, 50.0, 1.0]\n")
            .unwrap_err();
        assert!(e.to_string().contains("exactly one coupling source"), "{e}");
    }

    #[test]
    fn unknown_key_is_named() {
        let e = parse("[couplings]\nm0sq = 1.0\nlamda = 0.5\n").unwrap_err();
        assert!(e.to_string().contains("lamda"), "{e}");
        let e = parse("[couplings]\nm0sq = 1.0\n[basis]\nnmax = 3\n").unwrap_err();
        assert!(e.to_string().contains("nmax"), "{e}");
    }

    #[test]
    fn sweep_expands_cartesian() {
        let c = parse("[couplings]\nm0sq = 1.0\n[sweep]\n\"couplings.lambda\" = [0.0, 0.25, 0.5]\n")
            .unwrap();
        let runs = c.expand().unwrap();
        assert_eq!(runs.len(), 3);
        let l: Vec<f64> = runs.iter().map(|r| r.config.couplings.as_ref().unwrap().lambda).collect();
        assert_eq!(l, vec![0.0, 0.25, 0.5]);
        assert!(runs.iter().all(|r| r.config.sweep.is_empty()));

        let c = parse(
            "[couplings]\nm0sq = 1.0\n[sweep]\n\"couplings.lambda\" = [0.0, 0.5]\n\"basis.n_max\" = [3, 4, 5]\n",
        )
        .unwrap();
        let runs = c.expand().unwrap();
        assert_eq!(runs.len(), 6);
        let mut hashes: Vec<&str> = runs.iter().map(|r| r.config_hash.as_str()).collect();
        hashes.sort();
        hashes.dedup();
        assert_eq!(hashes.len(), 6);
    }

    #[test]
    fn empty_sweep_is_one_run() {
        let c = parse("[couplings]\nm0sq = 1.0\n").unwrap();
        let runs = c.expand().unwrap();
        assert_eq!(runs.len(), 1);
        assert_eq!(runs[0].config_hash, c.hash());
    }

    #[test]
    fn sweep_axis_must_exist() {
        let e = parse("[couplings]\nm0sq = 1.0\n[sweep]\n\"couplings.mu\" = [1.0]\n").unwrap_err();
        assert!(e.to_string().contains("couplings.mu"), "{e}");
        let e = parse("[couplings]\nm0sq = 1.0\n[sweep]\n\"ions.n_ions\" = [4]\n").unwrap_err();
        assert!(e.to_string().contains("ions.n_ions"), "{e}");
    }

    #[test]
    fn overrides_replace_keys() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "[couplings]\nm0sq = 1.0\n[basis]\nn_max = 6\n").unwrap();
        let c = load_config(
            Some(&p),
            &[
                ("basis.n_max".into(), "3".into()),
                ("couplings.lambda".into(), "0.5".into()),
                ("noise.kind".into(), "GLOBAL_DEPHASING".into()),
                ("noise.t2".into(), "2.0".into()),
            ],
        )
        .unwrap();
        assert_eq!(c.basis.n_max, 3);
        assert_eq!(c.couplings.unwrap().lambda, 0.5);
        assert_eq!(c.noise.model().unwrap(), NoiseModel::global(2.0));
    }

    #[test]
    fn noise_needs_t2() {
        assert!(parse("[couplings]\nm0sq = 1.0\n[noise]\nkind = \"LOCAL_DEPHASING\"\n").is_err());
    }
}
