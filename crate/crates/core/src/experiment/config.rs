//! Experiment configuration files.
//!
//! A config is a TOML document with `task`, `population`, `scheme` and
//! `training` tables plus a top-level `seed`. An optional top-level
//! `include = ["file.toml", ...]` pulls in shared tables; keys in the
//! including file win over included ones.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::{Table, Value};

use crate::channel::{dbm_to_watts, ChannelError, DeviceProfile, LinkBudget, PathLossSpec, PopulationSpec};
use crate::federated::TaskSpec;
use crate::optimizer::Baseline;

const MAX_INCLUDE_DEPTH: usize = 8;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("include nesting deeper than {MAX_INCLUDE_DEPTH} (cycle?) at {0}")]
    IncludeDepth(String),
    #[error("includes are not available here: {0}")]
    IncludeUnavailable(String),
    #[error("invalid value for {name}: {reason}")]
    Invalid { name: &'static str, reason: String },
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

fn invalid(name: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { name, reason: reason.into() }
}

/// Transmission scheme under test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scheme {
    Jcdo,
    Fedavg,
    FixedR { ratio: f64, deadline: f64 },
    Co { deadline: f64 },
    Do { ratio: f64 },
    Fedtoe { deadline: f64, target_q: f64 },
}

impl Scheme {
    pub fn label(&self) -> &'static str {
        match self {
            Scheme::Jcdo => "jcdo",
            Scheme::Fedavg => "fedavg",
            Scheme::FixedR { .. } => "fixed_r",
            Scheme::Co { .. } => "co",
            Scheme::Do { .. } => "do",
            Scheme::Fedtoe { .. } => "fedtoe",
        }
    }

    /// The comparison-scheme plan generator, or `None` for JCDO.
    pub fn baseline(&self) -> Option<Baseline> {
        Some(match *self {
            Scheme::Jcdo => return None,
            Scheme::Fedavg => Baseline::Fedavg,
            Scheme::FixedR { ratio, deadline } => Baseline::FixedR { ratio, deadline },
            Scheme::Co { deadline } => Baseline::Co { deadline },
            Scheme::Do { ratio } => Baseline::Do { ratio },
            Scheme::Fedtoe { deadline, target_q } => Baseline::Fedtoe { deadline, target_q },
        })
    }

    /// Whether rounds last a fixed or optimised deadline rather than until
    /// the slowest device finishes.
    pub fn uses_deadline(&self) -> bool {
        !matches!(self, Scheme::Fedavg)
    }
}

/// Radio and compute parameters of the device population, in the units a
/// link budget is usually written in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationConfig {
    pub tx_power_dbm: f64,
    pub noise_dbm_per_hz: f64,
    pub bandwidth_hz: f64,
    pub cpu_cycles_per_batch: f64,
    pub encode_bits: u32,
    pub cpu_freq_hz: [f64; 2],
    pub distance_km: [f64; 2],
    #[serde(default = "default_intercept")]
    pub path_loss_intercept_db: f64,
    #[serde(default = "default_slope")]
    pub path_loss_slope_db: f64,
    /// Explicit device list. When present it replaces the generated
    /// population; `data_size` is still taken from the data partition.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub devices: Vec<DeviceProfile>,
}

fn default_intercept() -> f64 {
    PathLossSpec::default().intercept_db
}

fn default_slope() -> f64 {
    PathLossSpec::default().slope_db
}

impl PopulationConfig {
    pub fn link_budget(&self) -> Result<LinkBudget, ConfigError> {
        Ok(LinkBudget::from_dbm_per_hz(self.bandwidth_hz, self.noise_dbm_per_hz)?)
    }

    pub fn population_spec(&self, count: usize) -> PopulationSpec {
        PopulationSpec {
            count,
            tx_power_w: dbm_to_watts(self.tx_power_dbm),
            cpu_cycles_per_batch: self.cpu_cycles_per_batch,
            encode_bits: self.encode_bits,
            cpu_freq_range_hz: (self.cpu_freq_hz[0], self.cpu_freq_hz[1]),
            path_loss: PathLossSpec {
                min_km: self.distance_km[0],
                max_km: self.distance_km[1],
                intercept_db: self.path_loss_intercept_db,
                slope_db: self.path_loss_slope_db,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub chi: f64,
    pub nu: f64,
    pub batch_size: usize,
    /// Target loss gap.
    pub epsilon: f64,
    pub max_rounds: u64,
    /// Simulated-time budget in seconds.
    pub max_time: f64,
    /// Mini-batches per device used to estimate the gradient noise at the
    /// initial model.
    #[serde(default = "default_resamples")]
    pub calibration_resamples: usize,
    /// Stopping threshold of the ratio/deadline alternation, in seconds.
    #[serde(default = "default_alt_tolerance")]
    pub alt_tolerance: f64,
    /// Upper end of the deadline search in seconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadline_cap: Option<f64>,
}

fn default_resamples() -> usize {
    200
}

fn default_alt_tolerance() -> f64 {
    crate::optimizer::DEFAULT_ALT_TOLERANCE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Label used in suite tables; defaults to the scheme name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// At most `i64::MAX`, the largest integer TOML can hold.
    pub seed: u64,
    pub task: TaskSpec,
    pub population: PopulationConfig,
    pub scheme: Scheme,
    pub training: TrainingConfig,
}

impl ExperimentConfig {
    /// Parses a config, resolving `include` entries through `resolve`, which
    /// maps an include string to the included document's text.
    pub fn from_toml_str<F>(text: &str, mut resolve: F) -> Result<Self, ConfigError>
    where
        F: FnMut(&str) -> Result<String, ConfigError>,
    {
        let table = expand(text, &mut resolve, 0)?;
        let config: Self = Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file; includes are resolved relative to the file
    /// that names them.
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = read(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, |inc| read(&base.join(inc)))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.scheme.label().to_string())
    }

    /// Checks that do not need the generated task. Learning-rate conditions
    /// that depend on the task constants are checked when a run is prepared.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let t = &self.training;
        let p = &self.population;
        if i64::try_from(self.seed).is_err() {
            return Err(invalid("seed", format!("{} exceeds {}", self.seed, i64::MAX)));
        }
        finite_positive("training.chi", t.chi)?;
        if !(t.nu.is_finite() && t.nu >= 0.0) {
            return Err(invalid("training.nu", format!("{} is not a finite non-negative number", t.nu)));
        }
        finite_positive("training.epsilon", t.epsilon)?;
        if !(t.max_time > 0.0) {
            return Err(invalid("training.max_time", format!("{} is not positive", t.max_time)));
        }
        if t.batch_size == 0 {
            return Err(invalid("training.batch_size", "must be at least 1"));
        }
        if t.calibration_resamples == 0 {
            return Err(invalid("training.calibration_resamples", "must be at least 1"));
        }
        finite_positive("training.alt_tolerance", t.alt_tolerance)?;
        if let Some(cap) = t.deadline_cap {
            finite_positive("training.deadline_cap", cap)?;
        }
        if self.task.devices == 0 {
            return Err(invalid("task.devices", "must be at least 1"));
        }
        if !p.devices.is_empty() && p.devices.len() != self.task.devices {
            return Err(invalid(
                "population.devices",
                format!("{} profiles for {} devices", p.devices.len(), self.task.devices),
            ));
        }
        for (m, dev) in p.devices.iter().enumerate() {
            if dev.id != m {
                return Err(invalid("population.devices", format!("entry {m} has id {}", dev.id)));
            }
        }
        finite_positive("population.bandwidth_hz", p.bandwidth_hz)?;
        if !(p.tx_power_dbm.is_finite() && p.noise_dbm_per_hz.is_finite()) {
            return Err(invalid("population", "dBm values must be finite"));
        }
        if p.encode_bits == 0 {
            return Err(invalid("population.encode_bits", "must be at least 1"));
        }
        self.population.link_budget()?;
        match self.scheme {
            Scheme::Jcdo | Scheme::Fedavg => {}
            Scheme::FixedR { ratio, deadline } => {
                unit_interval("scheme.ratio", ratio)?;
                finite_positive("scheme.deadline", deadline)?;
            }
            Scheme::Co { deadline } => finite_positive("scheme.deadline", deadline)?,
            Scheme::Do { ratio } => unit_interval("scheme.ratio", ratio)?,
            Scheme::Fedtoe { deadline, target_q } => {
                finite_positive("scheme.deadline", deadline)?;
                if !(target_q > 0.0 && target_q < 1.0) {
                    return Err(invalid("scheme.target_q", format!("{target_q} is not in (0, 1)")));
                }
            }
        }
        Ok(())
    }
}

fn finite_positive(name: &'static str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("{v} is not a finite positive number")))
    }
}

fn unit_interval(name: &'static str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("{v} is not in (0, 1]")))
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })
}

fn expand<F>(text: &str, resolve: &mut F, depth: usize) -> Result<Table, ConfigError>
where
    F: FnMut(&str) -> Result<String, ConfigError>,
{
    let mut table: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    let includes = match table.remove("include") {
        None => return Ok(table),
        Some(Value::String(s)) => vec![s],
        Some(Value::Array(items)) => items
            .into_iter()
            .map(|v| match v {
                Value::String(s) => Ok(s),
                other => Err(ConfigError::Parse(format!("include entry {other} is not a string"))),
            })
            .collect::<Result<_, _>>()?,
        Some(other) => return Err(ConfigError::Parse(format!("include must be a string or array, got {other}"))),
    };
    let mut merged = Table::new();
    for inc in includes {
        if depth >= MAX_INCLUDE_DEPTH {
            return Err(ConfigError::IncludeDepth(inc));
        }
        let child = expand(&resolve(&inc)?, resolve, depth + 1)?;
        merge(&mut merged, child);
    }
    merge(&mut merged, table);
    Ok(merged)
}

/// Deep merge; values from `over` replace those in `base` except where both
/// are tables.
fn merge(base: &mut Table, over: Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}
