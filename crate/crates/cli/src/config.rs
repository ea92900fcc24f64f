use std::fmt;
use std::path::{Path, PathBuf};

use pgflow_core::homog::{DissipationMode, EnergyMode};
use pgflow_core::lab::Metric;
use pgflow_core::model::{build_system, catalog_names, ModelError};
use pgflow_core::rds::{coefficient_instance, COEFFICIENT_INSTANCES};
use pgflow_core::solver::Method;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Cells per period required in ε-sweeps (`h <= ε/16`).
pub const CELLS_PER_PERIOD: usize = 16;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid override `{0}`: expected KEY=VALUE")]
    BadOverride(String),
    #[error("{field}: {msg}")]
    Field { field: String, msg: String },
    #[error("system: unknown system `{name}`; catalog: {}", known.join(", "))]
    UnknownSystem { name: String, known: Vec<String> },
    #[error("eps_sweep: resolution rule h <= eps/16 violated for eps = {eps}: h = {h} > {limit}")]
    ResolutionRule { eps: f64, h: f64, limit: f64 },
}

fn field_err(field: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: field.into(),
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Solve,
    Edb,
    Moreau,
    Cell,
    Means,
    TauSweep,
    EpsSweep,
    Probes,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Edb => "edb",
            Command::Moreau => "moreau",
            Command::Cell => "cell",
            Command::Means => "means",
            Command::TauSweep => "tau-sweep",
            Command::EpsSweep => "eps-sweep",
            Command::Probes => "probes",
        }
    }

    fn uses_system(&self) -> bool {
        matches!(self, Command::Solve | Command::Edb | Command::Moreau | Command::TauSweep)
    }

    fn uses_instance(&self) -> bool {
        matches!(self, Command::Cell | Command::Means | Command::EpsSweep)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeConfig {
    pub t0: f64,
    pub horizon: f64,
    pub steps: usize,
    /// `horizon / steps`; filled in by validation.
    pub tau: Option<f64>,
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig {
            t0: 0.0,
            horizon: 1.0,
            steps: 64,
            tau: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub rel_grad_tol: f64,
    pub max_iters_per_dim: usize,
    pub max_iters: Option<usize>,
    pub method: Method,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rel_grad_tol: 1e-9,
            max_iters_per_dim: 500,
            max_iters: None,
            method: Method::Lbfgs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EdbConfig {
    pub quadrature_substeps: usize,
    pub check_resolution: bool,
    /// Window `[from, to]`; the whole run when unset.
    pub from: Option<f64>,
    pub to: Option<f64>,
    /// A DUEE violation is `slack < -violation_factor * budget`.
    pub violation_factor: f64,
}

impl Default for EdbConfig {
    fn default() -> Self {
        EdbConfig {
            quadrature_substeps: 8,
            check_resolution: true,
            from: None,
            to: None,
            violation_factor: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MoreauConfig {
    pub t: f64,
    /// Base state; the initial state when unset.
    pub u: Option<Vec<f64>>,
    /// Covector; zero when unset.
    pub w: Option<Vec<f64>>,
    /// `r = 2^-k` for `k = k_max, ..., 0`.
    pub k_max: u32,
    pub limit_tol: f64,
}

impl Default for MoreauConfig {
    fn default() -> Self {
        MoreauConfig {
            t: 0.0,
            u: None,
            w: None,
            k_max: 10,
            limit_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CellConfig {
    pub u: f64,
    pub grad: f64,
    pub resolution: usize,
}

impl Default for CellConfig {
    fn default() -> Self {
        CellConfig {
            u: 0.0,
            grad: 1.0,
            resolution: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeansConfig {
    pub u: f64,
    pub quad_points: usize,
}

impl Default for MeansConfig {
    fn default() -> Self {
        MeansConfig { u: 0.0, quad_points: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TauSweepConfig {
    /// Step counts on `[t0, t0 + horizon]`, increasing.
    pub steps: Vec<usize>,
    /// Compare states with the closed-form flow where the catalog has one.
    pub exact: bool,
    pub edb_residual: bool,
}

impl Default for TauSweepConfig {
    fn default() -> Self {
        TauSweepConfig {
            steps: vec![8, 16, 32, 64],
            exact: true,
            edb_residual: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridChoice {
    /// Every ε on the grid of the finest ε.
    Uniform,
    /// 16 cells per period for each ε.
    PerPeriod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialChoice {
    /// `u⁰_ε = u⁰`.
    Plain,
    /// `u⁰ + εφ(x/ε)` with the cell corrector; plain when 𝔽 does not depend on `y`.
    CorrectorAdjusted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpsSweepConfig {
    pub eps: Vec<f64>,
    pub horizon: f64,
    pub steps: usize,
    pub grid: GridChoice,
    /// Fixed cell count for every ε (overrides `grid`).
    pub cells: Option<usize>,
    pub dissipation: DissipationMode,
    pub energy: EnergyMode,
    pub initial: InitialChoice,
    pub metrics: Vec<String>,
    /// Metrics whose strict decrease decides the exit code; all by default.
    pub gate: Option<Vec<String>>,
    /// Coarse windows (in fine steps) for the liminf witness.
    pub liminf_windows: Vec<usize>,
}

impl Default for EpsSweepConfig {
    fn default() -> Self {
        EpsSweepConfig {
            eps: vec![0.25, 0.125, 0.0625],
            horizon: 0.25,
            steps: 64,
            grid: GridChoice::Uniform,
            cells: None,
            dissipation: DissipationMode::Aver,
            energy: EnergyMode::Homogenized,
            initial: InitialChoice::CorrectorAdjusted,
            metrics: Metric::ALL.iter().map(|m| m.name().to_string()).collect(),
            gate: None,
            liminf_windows: vec![4, 8, 16, 32],
        }
    }
}

impl EpsSweepConfig {
    fn eps_min(&self) -> f64 {
        self.eps.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Cell count used for `eps`.
    pub fn cells_for(&self, eps: f64) -> usize {
        match (self.cells, self.grid) {
            (Some(n), _) => n,
            (None, GridChoice::Uniform) => (CELLS_PER_PERIOD as f64 / self.eps_min() - 1e-9).ceil() as usize,
            (None, GridChoice::PerPeriod) => (CELLS_PER_PERIOD as f64 / eps - 1e-9).ceil() as usize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbesConfig {
    /// Catalog systems to probe; all when empty.
    pub systems: Vec<String>,
    pub samples: usize,
    pub radius: f64,
    pub horizon: f64,
}

impl Default for ProbesConfig {
    fn default() -> Self {
        ProbesConfig {
            systems: Vec::new(),
            samples: 1000,
            radius: 2.0,
            horizon: 1.0,
        }
    }
}

fn default_system() -> String {
    "decay".into()
}

fn default_instance() -> String {
    "default".into()
}

fn default_seed() -> u64 {
    2024
}

/// Fully validated run description. Serialized back (with defaults filled)
/// as the echoed `config.toml` of every run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    /// Catalog system for `solve`, `edb`, `moreau` and `tau-sweep`.
    #[serde(default = "default_system")]
    pub system: String,
    /// Coefficient family for `cell`, `means` and `eps-sweep`.
    #[serde(default = "default_instance")]
    pub instance: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Initial state; `1` for scalar systems, `sin²(πx)` for grids.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub edb: EdbConfig,
    #[serde(default)]
    pub moreau: MoreauConfig,
    #[serde(default)]
    pub cell: CellConfig,
    #[serde(default)]
    pub means: MeansConfig,
    #[serde(default)]
    pub tau_sweep: TauSweepConfig,
    #[serde(default)]
    pub eps_sweep: EpsSweepConfig,
    #[serde(default)]
    pub probes: ProbesConfig,
}

/// Where a configuration comes from, plus command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct ConfigSource {
    pub path: Option<PathBuf>,
    pub command: Option<Command>,
    /// `KEY=VALUE` with dotted keys, VALUE in TOML syntax (bare strings allowed).
    pub overrides: Vec<String>,
    pub substeps: Option<usize>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

fn set_path(root: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), ConfigError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::BadOverride(key.into()));
    }
    let mut table = root;
    for p in &parts[..parts.len() - 1] {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| field_err(key, format!("`{p}` is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Read, merge overrides, fill defaults and validate.
pub fn parse_config(src: &ConfigSource) -> Result<RunConfig, ConfigError> {
    let mut table = match &src.path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| ConfigError::Io {
                path: p.clone(),
                source: e,
            })?;
            text.parse::<toml::Table>().map_err(|e| ConfigError::Parse(e.to_string()))?
        }
        None => toml::Table::new(),
    };
    if let Some(c) = src.command {
        if let Some(existing) = table.get("command").and_then(|v| v.as_str()) {
            if existing != c.name() {
                return Err(field_err(
                    "command",
                    format!("config is for `{existing}` but `{}` was requested", c.name()),
                ));
            }
        }
        table.insert("command".into(), toml::Value::String(c.name().into()));
    }
    for o in &src.overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| ConfigError::BadOverride(o.clone()))?;
        set_path(&mut table, k.trim(), parse_value(v.trim()))?;
    }
    if let Some(n) = src.substeps {
        set_path(&mut table, "edb.quadrature_substeps", toml::Value::Integer(n as i64))?;
    }
    if let Some(t) = src.tol {
        set_path(&mut table, "solver.rel_grad_tol", toml::Value::Float(t))?;
    }
    if let Some(s) = src.seed {
        set_path(&mut table, "seed", toml::Value::Integer(s as i64))?;
    }
    if !table.contains_key("command") {
        return Err(field_err("command", "missing; pass a verb or set `command`"));
    }
    let mut cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn check(cond: bool, field: &str, msg: impl Into<String>) -> Result<(), ConfigError> {
    if cond {
        Ok(())
    } else {
        Err(field_err(field, msg))
    }
}

fn positive(x: f64, field: &str) -> Result<(), ConfigError> {
    check(x > 0.0 && x.is_finite(), field, format!("must be positive and finite, got {x}"))
}

impl RunConfig {
    /// Check every setting against the preconditions of the module the
    /// command dispatches to, and fill derived fields.
    pub fn validate(&mut self) -> Result<(), ConfigError> {
        let cmd = self.command;
        if cmd.uses_system() {
            let sys = build_system(&self.system).map_err(|e| match e {
                ModelError::UnknownSystem { name, known } => ConfigError::UnknownSystem { name, known },
                other => field_err("system", other.to_string()),
            })?;
            if let Some(u) = &self.initial {
                check(
                    u.len() == sys.dim(),
                    "initial",
                    format!("has {} entries, system `{}` has dimension {}", u.len(), self.system, sys.dim()),
                )?;
                check(u.iter().all(|x| x.is_finite()), "initial", "entries must be finite")?;
            }
        }
        if cmd.uses_instance() {
            check(
                coefficient_instance(&self.instance).is_some(),
                "instance",
                format!("unknown coefficient family `{}`; known: {}", self.instance, COEFFICIENT_INSTANCES.join(", ")),
            )?;
        }

        let t = &mut self.time;
        check(t.t0 >= 0.0 && t.t0.is_finite(), "time.t0", "must be nonnegative")?;
        positive(t.horizon, "time.horizon")?;
        check(t.steps >= 1, "time.steps", "must be at least 1")?;
        let tau = t.horizon / t.steps as f64;
        if let Some(given) = t.tau {
            check(
                (given - tau).abs() <= 1e-12 * tau,
                "time.tau",
                format!("{given} disagrees with horizon/steps = {tau}"),
            )?;
        }
        t.tau = Some(tau);

        positive(self.solver.rel_grad_tol, "solver.rel_grad_tol")?;
        check(self.solver.max_iters_per_dim >= 1, "solver.max_iters_per_dim", "must be at least 1")?;
        if let Some(m) = self.solver.max_iters {
            check(m >= 1, "solver.max_iters", "must be at least 1")?;
        }

        check(self.edb.quadrature_substeps >= 1, "edb.quadrature_substeps", "must be at least 1")?;
        positive(self.edb.violation_factor, "edb.violation_factor")?;
        let (lo, hi) = (self.time.t0, self.time.t0 + self.time.horizon);
        let from = self.edb.from.unwrap_or(lo);
        let to = self.edb.to.unwrap_or(hi);
        check(
            lo <= from && from < to && to <= hi * (1.0 + 1e-12),
            "edb.from/edb.to",
            format!("window [{from}, {to}] must be a nonempty subinterval of [{lo}, {hi}]"),
        )?;

        check(self.moreau.k_max <= 40, "moreau.k_max", "at most 40")?;
        check(self.moreau.t >= 0.0, "moreau.t", "must be nonnegative")?;
        positive(self.moreau.limit_tol, "moreau.limit_tol")?;
        if cmd == Command::Moreau {
            let dim = build_system(&self.system).map(|s| s.dim()).unwrap_or(0);
            for (name, v) in [("moreau.u", &self.moreau.u), ("moreau.w", &self.moreau.w)] {
                if let Some(v) = v {
                    check(v.len() == dim, name, format!("has {} entries, expected {dim}", v.len()))?;
                }
            }
        }

        check(self.cell.resolution >= 8, "cell.resolution", "must be at least 8")?;
        check(self.cell.u.is_finite() && self.cell.grad.is_finite(), "cell.u/cell.grad", "must be finite")?;
        check(self.means.quad_points >= 2, "means.quad_points", "must be at least 2")?;

        let ts = &self.tau_sweep;
        check(ts.steps.len() >= 3, "tau_sweep.steps", "needs at least 3 entries")?;
        check(
            ts.steps.windows(2).all(|w| w[1] > w[0]) && ts.steps[0] >= 1,
            "tau_sweep.steps",
            "must be positive and strictly increasing",
        )?;

        self.validate_eps_sweep()?;

        let p = &self.probes;
        check(p.samples >= 1, "probes.samples", "must be at least 1")?;
        positive(p.radius, "probes.radius")?;
        positive(p.horizon, "probes.horizon")?;
        let known = catalog_names();
        if let Some(bad) = p.systems.iter().find(|s| !known.contains(s)) {
            return Err(ConfigError::UnknownSystem {
                name: bad.clone(),
                known,
            });
        }
        Ok(())
    }

    fn validate_eps_sweep(&self) -> Result<(), ConfigError> {
        let e = &self.eps_sweep;
        check(e.eps.len() >= 3, "eps_sweep.eps", "needs at least 3 values")?;
        check(
            e.eps.iter().all(|x| *x > 0.0 && *x <= 1.0),
            "eps_sweep.eps",
            "values must lie in (0, 1]",
        )?;
        check(
            e.eps.windows(2).all(|w| w[1] < w[0]),
            "eps_sweep.eps",
            "must be strictly decreasing",
        )?;
        positive(e.horizon, "eps_sweep.horizon")?;
        check(e.steps >= 8, "eps_sweep.steps", "must be at least 8")?;
        for m in &e.metrics {
            check(Metric::parse(m).is_some(), "eps_sweep.metrics", format!("unknown metric `{m}`"))?;
        }
        check(!e.metrics.is_empty(), "eps_sweep.metrics", "must not be empty")?;
        if let Some(g) = &e.gate {
            for m in g {
                check(
                    e.metrics.contains(m) || m == "initial_energy_gap",
                    "eps_sweep.gate",
                    format!("`{m}` is not a computed metric"),
                )?;
            }
        }
        check(
            e.liminf_windows.iter().all(|w| *w >= 1 && e.steps % w == 0),
            "eps_sweep.liminf_windows",
            format!("windows must divide steps = {}", e.steps),
        )?;
        let finest = e.cells_for(e.eps_min());
        for &eps in &e.eps {
            let cells = e.cells_for(eps);
            check(cells >= 2, "eps_sweep.cells", "need at least 2 cells")?;
            let h = 1.0 / cells as f64;
            let limit = eps / CELLS_PER_PERIOD as f64;
            if h > limit * (1.0 + 1e-12) {
                return Err(ConfigError::ResolutionRule { eps, h, limit });
            }
            check(
                finest % cells == 0,
                "eps_sweep.grid",
                format!("{cells} cells do not nest into the finest grid with {finest} cells"),
            )?;
        }
        Ok(())
    }

    /// Canonical TOML echo of the effective configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs always serialize")
    }

    /// SHA-256 of the canonical echo, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// `--out`, else `$PGFLOW_OUTPUT_ROOT` joined with `output_dir` (or
    /// `<command>-<hash>`), else `output_dir`, else `pgflow-runs/<command>-<hash>`.
    pub fn output_path(&self, out: Option<&Path>, env_root: Option<&Path>) -> PathBuf {
        if let Some(o) = out {
            return o.to_path_buf();
        }
        let default_name = PathBuf::from(format!("{}-{}", self.command, &self.hash()[..12]));
        match (env_root, &self.output_dir) {
            (Some(root), Some(d)) if d.is_relative() => root.join(d),
            (_, Some(d)) => d.clone(),
            (Some(root), None) => root.join(default_name),
            (None, None) => Path::new("pgflow-runs").join(default_name),
        }
    }
}
