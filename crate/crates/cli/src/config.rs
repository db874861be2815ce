//! Experiment configuration: TOML schema, defaults, validation and hashing.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use wettingsim::experiment::ReplicaPlan;
use wettingsim::{Distribution, ModelParams, Schedule};

pub const SCHEMA_VERSION: u32 = 1;
pub const THREADS_ENV: &str = "WETTINGSIM_THREADS";

/// Invalid or unreadable configuration; maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub system: SystemSection,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub replicas: ReplicaSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub runtime: RuntimeSection,
    #[serde(default)]
    pub oracle: OracleSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(rename = "J")]
    pub j: Vec<f64>,
    #[serde(rename = "K")]
    pub k: Vec<f64>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            j: (1..=10).map(f64::from).collect(),
            k: vec![0.1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub n: usize,
    pub distribution: Distribution,
}

impl Default for SystemSection {
    fn default() -> Self {
        Self {
            n: 1 << 17,
            distribution: Distribution::ExpMeanOne,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub thermalization_sweeps: u64,
    pub measure_every: u64,
    pub n_measurements: u64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self {
            thermalization_sweeps: 10_000,
            measure_every: 10,
            n_measurements: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplicaSection {
    pub count: u32,
    pub substrate_seed: u64,
    pub run_seed: u64,
}

impl Default for ReplicaSection {
    fn default() -> Self {
        Self {
            count: 8,
            substrate_seed: 1,
            run_seed: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    pub max_lag: usize,
    pub fit_range: [usize; 2],
    pub noise_floor_sigma: f64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            max_lag: 100,
            fit_range: [0, 100],
            noise_floor_sigma: 3.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuntimeSection {
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub delta: f64,
    /// Which replica's substrate the oracle uses.
    pub replica: u32,
    /// A `simulate` output directory to compare against.
    pub compare: Option<PathBuf>,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            delta: 0.1,
            replica: 0,
            compare: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| config_error(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Field-level checks; the first violation is reported.
    pub fn validate(&self) -> anyhow::Result<()> {
        let fail = |field: &str, msg: String| Err(config_error(format!("{field}: {msg}")));
        if self.schema_version != SCHEMA_VERSION {
            return fail(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            );
        }
        if self.model.j.is_empty() {
            return fail("model.J", "must list at least one value".into());
        }
        if self.model.k.is_empty() {
            return fail("model.K", "must list at least one value".into());
        }
        for (i, &j) in self.model.j.iter().enumerate() {
            if !(j.is_finite() && j >= 0.0) {
                return fail(&format!("model.J[{i}]"), format!("must be finite and >= 0, got {j}"));
            }
        }
        for (i, &k) in self.model.k.iter().enumerate() {
            if !(k.is_finite() && k > 0.0) {
                return fail(&format!("model.K[{i}]"), format!("must be finite and > 0, got {k}"));
            }
        }
        if self.system.n < 2 {
            return fail("system.n", format!("must be at least 2, got {}", self.system.n));
        }
        if self.schedule.thermalization_sweeps == 0 {
            return fail("schedule.thermalization_sweeps", "must be at least 1".into());
        }
        if self.schedule.measure_every == 0 {
            return fail("schedule.measure_every", "must be at least 1".into());
        }
        if self.schedule.n_measurements == 0 {
            return fail("schedule.n_measurements", "must be at least 1".into());
        }
        if self.replicas.count == 0 {
            return fail("replicas.count", "must be at least 1".into());
        }
        if self.analysis.max_lag >= self.system.n {
            return fail(
                "analysis.max_lag",
                format!(
                    "must be below system.n = {}, got {}",
                    self.system.n, self.analysis.max_lag
                ),
            );
        }
        let [lo, hi] = self.analysis.fit_range;
        if lo > hi {
            return fail("analysis.fit_range", format!("start {lo} exceeds end {hi}"));
        }
        if !(self.analysis.noise_floor_sigma.is_finite() && self.analysis.noise_floor_sigma >= 0.0) {
            return fail("analysis.noise_floor_sigma", "must be finite and >= 0".into());
        }
        if self.runtime.threads == Some(0) {
            return fail("runtime.threads", "must be at least 1".into());
        }
        if !(self.oracle.delta.is_finite() && self.oracle.delta > 0.0) {
            return fail(
                "oracle.delta",
                format!("must be finite and > 0, got {}", self.oracle.delta),
            );
        }
        if self.oracle.replica >= self.replicas.count {
            return fail(
                "oracle.replica",
                format!("must be below replicas.count = {}", self.replicas.count),
            );
        }
        Ok(())
    }

    /// Parameter points in row-major (K outer, J inner) order.
    pub fn points(&self) -> Vec<ModelParams> {
        self.model
            .k
            .iter()
            .flat_map(|&k| self.model.j.iter().map(move |&j| (j, k)))
            .map(|(j, k)| ModelParams::new(j, k).expect("validated"))
            .collect()
    }

    pub fn plan(&self) -> ReplicaPlan {
        ReplicaPlan {
            n: self.system.n,
            distribution: self.system.distribution,
            replicas: self.replicas.count,
            substrate_seed: self.replicas.substrate_seed,
            run_seed: self.replicas.run_seed,
            schedule: Schedule::new(
                self.schedule.thermalization_sweeps,
                self.schedule.measure_every,
                self.schedule.n_measurements,
            )
            .expect("validated"),
            max_lag: self.analysis.max_lag,
        }
    }

    /// SHA-256 of the canonical JSON form, ignoring where output goes and
    /// how many threads compute it.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output = OutputSection::default();
        canonical.runtime = RuntimeSection::default();
        canonical.oracle.compare = None;
        let json = serde_json::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn output_dir(&self, flag: Option<&Path>) -> anyhow::Result<PathBuf> {
        flag.map(Path::to_path_buf)
            .or_else(|| self.output.dir.clone())
            .ok_or_else(|| config_error("output.dir: not set in config and no --out given"))
    }
}

/// `--threads`, then `runtime.threads`, then `WETTINGSIM_THREADS`, then all cores.
pub fn thread_budget(flag: Option<usize>, cfg: Option<&ExperimentConfig>) -> anyhow::Result<usize> {
    if let Some(t) = flag {
        if t == 0 {
            return Err(config_error("--threads: must be at least 1"));
        }
        return Ok(t);
    }
    if let Some(t) = cfg.and_then(|c| c.runtime.threads) {
        return Ok(t);
    }
    if let Ok(v) = std::env::var(THREADS_ENV) {
        return match v.trim().parse::<usize>() {
            Ok(t) if t > 0 => Ok(t),
            _ => Err(config_error(format!(
                "{THREADS_ENV}: expected a positive integer, got '{v}'"
            ))),
        };
    }
    Ok(std::thread::available_parallelism().map_or(1, |n| n.get()))
}
