//! Run configuration: TOML with dotted sections, validated at parse time.

use std::fs;
use std::path::{Path, PathBuf};

use nflab_core::attractor::AttractorSpec;
use nflab_core::dynamics::{FlowParams, Integrator};
use nflab_core::equilibria::{MultistartSpec, NewtonOptions, SpectrumOptions};
use nflab_core::firing::FiringRate;
use nflab_core::grid::CircleGrid;
use nflab_core::kernel::{Kernel, KernelProfile};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Syntax(String),
    #[error("invalid value at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("{0}")]
    Constraint(String),
    #[error("kernel table {path}: {message}")]
    Table { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    pub kernel: KernelSection,
    pub firing: FiringSection,
    pub dynamics: DynamicsSection,
    pub sim: SimSection,
    pub tolerances: Tolerances,
    pub equilibria: EquilibriaSection,
    pub attractor: AttractorSection,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub tau: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Bump,
    ScaledBump,
    TruncatedMexicanHat,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSection {
    pub kind: KernelKind,
    /// Half-width of `scaled_bump`.
    pub a: f64,
    pub b1: f64,
    pub b2: f64,
    /// CSV of `x,value` rows, relative to the config file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiringSection {
    pub beta: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorKind {
    Etd1,
    Rk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsSection {
    pub h: f64,
    pub dt: f64,
    pub integrator: IntegratorKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    #[serde(rename = "T")]
    pub t_end: f64,
    /// Keep every `stride`-th state.
    pub stride: usize,
    pub n_ic: usize,
    pub seed: u64,
    /// Initial conditions are drawn with `‖u₀‖ ≤ ic_radius·R√(2τ)`.
    pub ic_radius: f64,
    pub ic_modes: usize,
    /// Write full-state snapshots alongside trajectory CSVs.
    pub snapshots: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub newton_tol: f64,
    pub zero_tol: f64,
    pub gap_tol: f64,
    pub hyp_tol: f64,
    /// Allowed relative ℱ increase per step.
    pub energy_tol: f64,
    /// Dense against analytic constant-state spectrum.
    pub spectrum_tol: f64,
    /// Slack of the absorbing-ball checks.
    pub ball_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquilibriaSection {
    pub max_mode: usize,
    pub amplitudes: Vec<f64>,
    pub destabilized_only: bool,
    pub random_seeds: usize,
    pub random_amplitude: f64,
    pub dedup_tol: f64,
    pub max_iter: usize,
    /// Leading eigenvalues written per orbit.
    pub kmax: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttractorSection {
    pub ic_modes: usize,
    pub burn_in: f64,
    pub tail_count: usize,
    pub tail_stride: f64,
    pub trace_time: f64,
    pub trace_stride: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub connections: bool,
    pub max_connections: usize,
    pub connection_time: f64,
    pub edge_horizon: f64,
    pub edge_tol: f64,
    pub edge_separation: f64,
    /// Write each sample point as a CSV under `attractor_points/`.
    pub dump_points: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepFamily {
    ScaledBump,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub family: SweepFamily,
    /// Family parameters; the last one is the reference kernel.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { tau: 1.2, n: 256 }
    }
}

impl Default for KernelSection {
    fn default() -> Self {
        KernelSection {
            kind: KernelKind::Bump,
            a: 1.0,
            b1: 8.0,
            b2: 2.0,
            table_path: None,
        }
    }
}

impl Default for FiringSection {
    fn default() -> Self {
        FiringSection {
            beta: 1.0,
            theta: 0.0,
        }
    }
}

impl Default for DynamicsSection {
    fn default() -> Self {
        DynamicsSection {
            h: 0.5,
            dt: 0.05,
            integrator: IntegratorKind::Etd1,
        }
    }
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            t_end: 40.0,
            stride: 10,
            n_ic: 64,
            seed: 0,
            ic_radius: 1.0,
            ic_modes: 12,
            snapshots: false,
        }
    }
}

impl Default for Tolerances {
    fn default() -> Self {
        let spec = SpectrumOptions::default();
        Tolerances {
            newton_tol: NewtonOptions::default().tol,
            zero_tol: spec.zero_tol,
            gap_tol: spec.gap_tol,
            hyp_tol: spec.hyp_tol,
            energy_tol: nflab_core::energy::DEFAULT_TOL,
            spectrum_tol: 1e-8,
            ball_tol: 1e-6,
        }
    }
}

impl Default for EquilibriaSection {
    fn default() -> Self {
        let m = MultistartSpec::default();
        EquilibriaSection {
            max_mode: m.max_mode,
            amplitudes: m.amplitudes,
            destabilized_only: m.destabilized_only,
            random_seeds: m.random_seeds,
            random_amplitude: m.random_amplitude,
            dedup_tol: m.dedup_tol,
            max_iter: m.newton.max_iter,
            kmax: 16,
        }
    }
}

impl Default for AttractorSection {
    fn default() -> Self {
        let a = AttractorSpec::default();
        AttractorSection {
            ic_modes: a.ic_modes,
            burn_in: a.burn_in,
            tail_count: a.tail_count,
            tail_stride: a.tail_stride,
            trace_time: a.trace_time,
            trace_stride: a.trace_stride,
            epsilon: a.epsilon,
            connections: a.connections,
            max_connections: a.max_connections,
            connection_time: a.connection_time,
            edge_horizon: a.edge_horizon,
            edge_tol: a.edge_tol,
            edge_separation: a.edge_separation,
            dump_points: false,
        }
    }
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            family: SweepFamily::ScaledBump,
            values: vec![0.9, 0.95, 0.99, 1.0],
        }
    }
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: "out".into() }
    }
}

/// A validated configuration with its resolved kernel profile.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub profile: KernelProfile,
    /// Raw bytes of the kernel table, if any (part of the fingerprint).
    table_bytes: Vec<u8>,
}

/// Reads and validates a config file.
pub fn parse_config(path: &Path) -> Result<Loaded, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_str(&text, base)
}

/// Parses config text; relative table paths resolve against `base`.
pub fn parse_str(text: &str, base: &Path) -> Result<Loaded, ConfigError> {
    let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    let mut config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let message = e.into_inner().message().trim().to_string();
        ConfigError::Schema { path, message }
    })?;
    if let Some(p) = &config.kernel.table_path {
        if p.is_relative() {
            config.kernel.table_path = Some(base.join(p));
        }
    }
    Loaded::new(config)
}

impl Loaded {
    pub fn new(config: RunConfig) -> Result<Self, ConfigError> {
        validate(&config)?;
        let (profile, table_bytes) = resolve_kernel(&config.kernel)?;
        let loaded = Loaded {
            config,
            profile,
            table_bytes,
        };
        // surface kernel and parameter errors at parse time
        loaded.params()?;
        Ok(loaded)
    }

    /// Flow parameters for the configured kernel.
    pub fn params(&self) -> Result<FlowParams, ConfigError> {
        self.params_with(self.profile.clone())
    }

    pub fn params_with(&self, profile: KernelProfile) -> Result<FlowParams, ConfigError> {
        let c = &self.config;
        let core = |e: nflab_core::Error| ConfigError::Constraint(e.to_string());
        let grid = CircleGrid::new(c.grid.tau, c.grid.n).map_err(core)?;
        let kernel = Kernel::new(profile, grid).map_err(core)?;
        let firing = FiringRate::new(c.firing.beta, c.firing.theta).map_err(core)?;
        let p = FlowParams::new(kernel, firing, c.dynamics.h, c.dynamics.dt).map_err(core)?;
        Ok(p.with_integrator(match c.dynamics.integrator {
            IntegratorKind::Etd1 => Integrator::Etd1,
            IntegratorKind::Rk4 => Integrator::Rk4,
        }))
    }

    pub fn spectrum_options(&self) -> SpectrumOptions {
        let t = &self.config.tolerances;
        SpectrumOptions {
            zero_tol: t.zero_tol,
            gap_tol: t.gap_tol,
            hyp_tol: t.hyp_tol,
        }
    }

    pub fn multistart(&self) -> MultistartSpec {
        let e = &self.config.equilibria;
        MultistartSpec {
            max_mode: e.max_mode,
            amplitudes: e.amplitudes.clone(),
            destabilized_only: e.destabilized_only,
            random_seeds: e.random_seeds,
            random_amplitude: e.random_amplitude,
            seed: self.config.sim.seed,
            dedup_tol: e.dedup_tol,
            newton: NewtonOptions {
                tol: self.config.tolerances.newton_tol,
                max_iter: e.max_iter,
            },
            spectrum: self.spectrum_options(),
        }
    }

    pub fn attractor(&self) -> AttractorSpec {
        let a = &self.config.attractor;
        AttractorSpec {
            n_ic: self.config.sim.n_ic,
            ic_modes: a.ic_modes,
            burn_in: a.burn_in,
            tail_count: a.tail_count,
            tail_stride: a.tail_stride,
            trace_time: a.trace_time,
            trace_stride: a.trace_stride,
            epsilon: a.epsilon,
            connections: a.connections,
            max_connections: a.max_connections,
            connection_time: a.connection_time,
            edge_horizon: a.edge_horizon,
            edge_tol: a.edge_tol,
            edge_separation: a.edge_separation,
            seed: self.config.sim.seed,
        }
    }

    /// The effective configuration as TOML.
    pub fn effective_toml(&self) -> String {
        toml::to_string(&self.config).expect("config serializes")
    }

    /// SHA-256 of the effective configuration (output section excluded) and
    /// the kernel table contents.
    pub fn fingerprint(&self) -> String {
        let mut c = self.config.clone();
        c.output = OutputSection::default();
        let mut hasher = Sha256::new();
        hasher.update(toml::to_string(&c).expect("config serializes").as_bytes());
        hasher.update(&self.table_bytes);
        hex::encode(hasher.finalize())
    }
}

fn validate(c: &RunConfig) -> Result<(), ConfigError> {
    let fail = |msg: String| Err(ConfigError::Constraint(msg));
    if !(c.grid.tau > 1.0 && c.grid.tau.is_finite()) {
        return fail(format!("tau must exceed 1 (grid.tau = {})", c.grid.tau));
    }
    if c.grid.n < nflab_core::grid::MIN_POINTS || !c.grid.n.is_multiple_of(2) {
        return fail(format!(
            "grid.n must be an even integer >= {} (got {})",
            nflab_core::grid::MIN_POINTS,
            c.grid.n
        ));
    }
    if !(c.dynamics.h > 0.0 && c.dynamics.h.is_finite()) {
        return fail(format!(
            "h must be positive (dynamics.h = {})",
            c.dynamics.h
        ));
    }
    if !(c.dynamics.dt > 0.0 && c.dynamics.dt.is_finite()) {
        return fail(format!(
            "dt must be positive (dynamics.dt = {})",
            c.dynamics.dt
        ));
    }
    if !(c.firing.beta > 0.0 && c.firing.beta.is_finite()) {
        return fail(format!(
            "beta must be positive (firing.beta = {})",
            c.firing.beta
        ));
    }
    if !c.firing.theta.is_finite() {
        return fail("firing.theta must be finite".into());
    }
    if c.sim.t_end.is_nan() || c.sim.t_end < c.dynamics.dt {
        return fail(format!(
            "sim.T must be at least one time step (got {})",
            c.sim.t_end
        ));
    }
    if c.sim.stride == 0 {
        return fail("sim.stride must be at least 1".into());
    }
    if !(c.sim.ic_radius > 0.0 && c.sim.ic_radius.is_finite()) {
        return fail("sim.ic_radius must be positive".into());
    }
    if c.sweep.values.is_empty() {
        return fail("sweep.values must not be empty".into());
    }
    if c.sweep.values.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
        return fail("sweep.values must lie in (0, 1] for scaled_bump".into());
    }
    let t = &c.tolerances;
    for (name, v) in [
        ("newton_tol", t.newton_tol),
        ("zero_tol", t.zero_tol),
        ("gap_tol", t.gap_tol),
        ("hyp_tol", t.hyp_tol),
        ("energy_tol", t.energy_tol),
        ("spectrum_tol", t.spectrum_tol),
        ("ball_tol", t.ball_tol),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return fail(format!("tolerances.{name} must be positive"));
        }
    }
    if c.equilibria.max_iter == 0 {
        return fail("equilibria.max_iter must be at least 1".into());
    }
    Ok(())
}

fn resolve_kernel(k: &KernelSection) -> Result<(KernelProfile, Vec<u8>), ConfigError> {
    let table_only = |name: &str| {
        ConfigError::Constraint(format!(
            "kernel.table_path is only valid with kind = \"table\" (got {name})"
        ))
    };
    match k.kind {
        KernelKind::Bump if k.table_path.is_some() => Err(table_only("bump")),
        KernelKind::Bump => Ok((KernelProfile::Bump, Vec::new())),
        KernelKind::ScaledBump if k.table_path.is_some() => Err(table_only("scaled_bump")),
        KernelKind::ScaledBump => Ok((KernelProfile::ScaledBump { a: k.a }, Vec::new())),
        KernelKind::TruncatedMexicanHat if k.table_path.is_some() => {
            Err(table_only("truncated_mexican_hat"))
        }
        KernelKind::TruncatedMexicanHat => Ok((
            KernelProfile::TruncatedMexicanHat { b1: k.b1, b2: k.b2 },
            Vec::new(),
        )),
        KernelKind::Table => {
            let path = k.table_path.as_ref().ok_or_else(|| {
                ConfigError::Constraint("kernel.kind = \"table\" needs kernel.table_path".into())
            })?;
            let bytes = fs::read(path).map_err(|source| ConfigError::Io {
                path: path.clone(),
                source,
            })?;
            let points = read_table(&bytes).map_err(|message| ConfigError::Table {
                path: path.clone(),
                message,
            })?;
            Ok((KernelProfile::Table { points }, bytes))
        }
    }
}

/// Parses `x,value` rows; `#` lines and a non-numeric header are skipped.
pub fn read_table(bytes: &[u8]) -> Result<Vec<(f64, f64)>, String> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut points = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| e.to_string())?;
        if record.len() != 2 {
            return Err(format!(
                "row {} has {} columns, expected 2",
                i + 1,
                record.len()
            ));
        }
        let parsed = (record[0].parse::<f64>(), record[1].parse::<f64>());
        match parsed {
            (Ok(x), Ok(v)) => points.push((x, v)),
            _ if i == 0 => continue,
            _ => return Err(format!("row {} is not numeric", i + 1)),
        }
    }
    Ok(points)
}
