//! Experiment configuration.
//!
//! A config is one TOML document. Top-level scalar keys can be overridden
//! from the environment with `FEATHER_<KEY>` (for example `FEATHER_SEED=3`
//! or `FEATHER_SCHEDULER=fcfs`). The value is read as a TOML literal and
//! falls back to a plain string.
//!
//! ```toml
//! scheduler = "feather-bandit"
//! seed = 7
//! chunk_size = 16
//! cost_file = "cost_calibrated.toml"   # relative to this file
//!
//! [workload]
//! total_requests = 1000
//! suffix_len = 100
//! decode_len = 200
//! shape = { kind = "prefix_groups", num_groups = 5, prefix_len = 5000 }
//! arrival = { kind = "poisson", rate = 20.0 }
//!
//! [cost]          # partial overrides on top of cost_file or the defaults
//! kv_capacity_bytes = 4.0e10
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use feather_core::batcher::Limits;
use feather_core::hashing::ChunkSize;
use feather_core::policy::{BanditConfig, HeuristicConfig, QConfig};
use feather_core::simcore::calibrate::{calibrate, CalibrationTargets};
use feather_core::simcore::ForcedPartition;
use feather_core::workload::WorkloadSpec;
use feather_core::{CostParams, SimConfig};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::CliError;

/// Prefix of environment overrides.
pub const ENV_PREFIX: &str = "FEATHER_";

/// Top-level keys that may be overridden from the environment.
pub const SCALAR_KEYS: &[&str] = &[
    "scheduler",
    "seed",
    "chunk_size",
    "rebuild",
    "out_dir",
    "trace",
    "cost_file",
    "calibration",
    "record_token_times",
    "max_steps",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SchedulerKind {
    #[serde(rename = "feather-heuristic")]
    FeatherHeuristic,
    #[serde(rename = "feather-bandit")]
    FeatherBandit,
    #[serde(rename = "feather-q")]
    FeatherQ,
    /// CHT ordering with a policy that always admits.
    #[serde(rename = "feather-greedy")]
    FeatherGreedy,
    #[serde(rename = "fcfs")]
    Fcfs,
    #[serde(rename = "lpm")]
    Lpm,
    #[serde(rename = "dfsw")]
    Dfsw,
    /// Fixed partition from the `[forced]` table.
    #[serde(rename = "forced")]
    Forced,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 8] = [
        SchedulerKind::FeatherHeuristic,
        SchedulerKind::FeatherBandit,
        SchedulerKind::FeatherQ,
        SchedulerKind::FeatherGreedy,
        SchedulerKind::Fcfs,
        SchedulerKind::Lpm,
        SchedulerKind::Dfsw,
        SchedulerKind::Forced,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchedulerKind::FeatherHeuristic => "feather-heuristic",
            SchedulerKind::FeatherBandit => "feather-bandit",
            SchedulerKind::FeatherQ => "feather-q",
            SchedulerKind::FeatherGreedy => "feather-greedy",
            SchedulerKind::Fcfs => "fcfs",
            SchedulerKind::Lpm => "lpm",
            SchedulerKind::Dfsw => "dfsw",
            SchedulerKind::Forced => "forced",
        }
    }

    pub fn is_feather(self) -> bool {
        matches!(
            self,
            SchedulerKind::FeatherHeuristic
                | SchedulerKind::FeatherBandit
                | SchedulerKind::FeatherQ
                | SchedulerKind::FeatherGreedy
        )
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchedulerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| format!("unknown scheduler `{s}`"))
    }
}

fn default_chunk_size() -> usize {
    16
}

/// The file as written, before cost resolution.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scheduler: SchedulerKind,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_chunk_size")]
    chunk_size: usize,
    #[serde(default)]
    rebuild: bool,
    #[serde(default)]
    out_dir: Option<PathBuf>,
    #[serde(default)]
    trace: Option<PathBuf>,
    #[serde(default)]
    cost_file: Option<PathBuf>,
    #[serde(default)]
    calibration: Option<PathBuf>,
    #[serde(default)]
    record_token_times: bool,
    #[serde(default)]
    max_steps: Option<u64>,
    workload: Option<WorkloadSpec>,
    #[serde(default)]
    cost: Table,
    #[serde(default)]
    limits: Limits,
    #[serde(default)]
    heuristic: HeuristicConfig,
    #[serde(default)]
    bandit: BanditConfig,
    #[serde(default)]
    qlearn: QConfig,
    #[serde(default)]
    forced: Option<ForcedPartition>,
    #[serde(default)]
    sweep: Option<SweepTable>,
}

/// Optional `[sweep]` table read by `feather sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepTable {
    /// Dotted config key, e.g. `workload.arrival.rate`.
    pub axis: String,
    pub values: Vec<Value>,
    /// Run every point once per scheduler; empty keeps the config's.
    #[serde(default)]
    pub schedulers: Vec<SchedulerKind>,
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub scheduler: SchedulerKind,
    /// Seeds the workload generator and the Q-learning explorer.
    pub seed: u64,
    /// CHT chunk size; the simulator's KV block size follows it.
    pub chunk_size: usize,
    /// Rebuild FEATHER batches every step instead of topping them up;
    /// ignored by the other schedulers.
    pub rebuild: bool,
    pub out_dir: Option<PathBuf>,
    /// Replay this trace instead of generating `workload`.
    pub trace: Option<PathBuf>,
    pub workload: Option<WorkloadSpec>,
    pub cost: CostParams,
    pub limits: Limits,
    pub heuristic: HeuristicConfig,
    pub bandit: BanditConfig,
    pub qlearn: QConfig,
    pub forced: Option<ForcedPartition>,
    pub record_token_times: bool,
    pub max_steps: Option<u64>,
    pub sweep: Option<SweepTable>,
}

impl ExperimentConfig {
    /// Read `path`, applying `FEATHER_*` overrides from the process
    /// environment.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        Self::load_with_env(path, std::env::vars())
    }

    pub fn load_with_env(path: &Path, env: impl IntoIterator<Item = (String, String)>) -> Result<Self, CliError> {
        let mut doc = read_table(path)?;
        apply_env(&mut doc, env);
        Self::from_table(doc, path.parent().unwrap_or(Path::new(".")), path)
    }

    /// Read `path` into a TOML tree with environment overrides applied,
    /// for callers that edit keys before resolving (sweeps).
    pub fn load_table(path: &Path) -> Result<Table, CliError> {
        let mut doc = read_table(path)?;
        apply_env(&mut doc, std::env::vars());
        Ok(doc)
    }

    /// Resolve a TOML tree; relative paths are taken from `base_dir` and
    /// errors name `origin`.
    pub fn from_table(doc: Table, base_dir: &Path, origin: &Path) -> Result<Self, CliError> {
        let bad = |msg: String| CliError::Config { path: origin.to_path_buf(), msg };
        let raw: RawConfig = Value::Table(doc).try_into().map_err(|e: toml::de::Error| bad(e.to_string()))?;
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base_dir.join(p) };

        let mut cost = toml::Table::try_from(CostParams::default()).expect("cost params serialize");
        if let Some(file) = &raw.cost_file {
            merge(&mut cost, read_table(&resolve(file))?);
        }
        merge(&mut cost, raw.cost);
        let mut cost: CostParams = Value::Table(cost).try_into().map_err(|e: toml::de::Error| bad(format!("cost: {e}")))?;
        if let Some(file) = &raw.calibration {
            let path = resolve(file);
            let text = read_text(&path)?;
            let targets: CalibrationTargets = toml::from_str(&text)
                .map_err(|e| CliError::Config { path: path.clone(), msg: e.to_string() })?;
            cost = calibrate(&cost, &targets).map_err(|e| CliError::Config { path, msg: e.to_string() })?;
        }
        cost.validate().map_err(|e| bad(e.to_string()))?;

        let trace = raw.trace.as_deref().map(resolve);
        if let Some(t) = &trace {
            if !t.is_file() {
                return Err(bad(format!("trace {} does not exist", t.display())));
            }
        }
        if trace.is_none() && raw.workload.is_none() {
            return Err(bad("either [workload] or trace is required".into()));
        }
        if ChunkSize::new(raw.chunk_size).is_err() {
            return Err(bad(format!("chunk_size {} must be >= 1", raw.chunk_size)));
        }
        if raw.limits.max_batch_size == 0 {
            return Err(bad("limits.max_batch_size must be >= 1".into()));
        }
        if raw.scheduler == SchedulerKind::Forced && raw.forced.is_none() {
            return Err(bad("scheduler `forced` needs a [forced] table".into()));
        }
        let mut workload = raw.workload;
        if let Some(w) = &mut workload {
            w.seed = raw.seed;
        }
        let mut qlearn = raw.qlearn;
        qlearn.seed = raw.seed;

        Ok(Self {
            scheduler: raw.scheduler,
            seed: raw.seed,
            chunk_size: raw.chunk_size,
            rebuild: raw.rebuild,
            out_dir: raw.out_dir.as_deref().map(resolve),
            trace,
            workload,
            cost,
            limits: raw.limits,
            heuristic: raw.heuristic,
            bandit: raw.bandit,
            qlearn,
            forced: raw.forced,
            record_token_times: raw.record_token_times,
            max_steps: raw.max_steps,
            sweep: raw.sweep,
        })
    }

    pub fn chunk(&self) -> ChunkSize {
        ChunkSize::new(self.chunk_size).expect("validated on load")
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            params: self.cost,
            limits: self.limits,
            kv_chunk_size: self.chunk(),
            record_token_times: self.record_token_times,
            max_steps: self.max_steps,
        }
    }
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::ConfigIo { path: path.to_path_buf(), source })
}

pub fn read_table(path: &Path) -> Result<Table, CliError> {
    let text = read_text(path)?;
    text.parse::<Table>().map_err(|e| CliError::Config { path: path.to_path_buf(), msg: e.to_string() })
}

/// Recursive merge; tables merge key by key, everything else is replaced.
pub fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Parse a command-line or environment value as a TOML literal, falling
/// back to a string.
pub fn parse_literal(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn apply_env(doc: &mut Table, env: impl IntoIterator<Item = (String, String)>) {
    let mut overrides: Vec<(String, String)> = env
        .into_iter()
        .filter_map(|(k, v)| {
            let key = k.strip_prefix(ENV_PREFIX)?.to_ascii_lowercase();
            SCALAR_KEYS.contains(&key.as_str()).then_some((key, v))
        })
        .collect();
    overrides.sort();
    for (key, raw) in overrides {
        let value = match key.as_str() {
            // Path and enum keys are always strings.
            "scheduler" | "out_dir" | "trace" | "cost_file" | "calibration" => Value::String(raw),
            _ => parse_literal(&raw),
        };
        doc.insert(key, value);
    }
}

/// Set a dotted key such as `workload.arrival.rate`, creating tables on
/// the way.
pub fn set_path(doc: &mut Table, path: &str, value: Value) -> Result<(), String> {
    let mut parts: Vec<&str> = path.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| format!("empty key in `{path}`"))?;
    let mut cur = doc;
    for p in parts {
        let next = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = next.as_table_mut().ok_or_else(|| format!("`{p}` in `{path}` is not a table"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
