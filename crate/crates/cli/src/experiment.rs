//! Experiment documents: which network, which analysis, and its settings.
//!
//! ```toml
//! network = "tandem"            # example name, path to a network file, or inline table
//! seeds = [1, 2, 3]
//! load = 0.8                    # optional: rescale so the busiest pool carries this load
//!
//! [simulation]
//! policy = "sf"                 # sf | ps | bp
//! horizon = 100000.0
//! unit = "time"                 # time | events
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use switchnet_core::catalog;
use switchnet_core::config::NetworkConfig;
use switchnet_core::sim::{ArrivalModel, Horizon, InitialState, SimConfig};
use switchnet_core::{Error, NetworkSpec, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Analyze,
    Simulate,
    Compare,
    Independence,
    Ldp,
    Balance,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Analyze => "analyze",
            Kind::Simulate => "simulate",
            Kind::Compare => "compare",
            Kind::Independence => "independence",
            Kind::Ldp => "ldp",
            Kind::Balance => "balance",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyName {
    #[default]
    Sf,
    Ps,
    Bp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HorizonUnit {
    #[default]
    Time,
    Events,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Start {
    #[default]
    Empty,
    Stationary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Simulation {
    pub policy: PolicyName,
    pub horizon: f64,
    pub unit: HorizonUnit,
    pub warmup: f64,
    pub batches: usize,
    pub arrivals: ArrivalModel,
    pub initial: Start,
    pub snapshot_interval: f64,
}

impl Default for Simulation {
    fn default() -> Self {
        Self {
            policy: PolicyName::Sf,
            horizon: 100_000.0,
            unit: HorizonUnit::Time,
            warmup: 0.2,
            batches: 20,
            arrivals: ArrivalModel::Poisson,
            initial: Start::Empty,
            snapshot_interval: 10.0,
        }
    }
}

impl Simulation {
    pub fn to_config(&self, seed: u64) -> Result<SimConfig> {
        let horizon = match self.unit {
            HorizonUnit::Time => Horizon::Time(self.horizon),
            HorizonUnit::Events => {
                if !(self.horizon.is_finite() && self.horizon >= 1.0 && self.horizon.fract() == 0.0) {
                    return Err(Error::Config(format!(
                        "simulation.horizon: event counts must be positive integers, got {}",
                        self.horizon
                    )));
                }
                Horizon::Events(self.horizon as u64)
            }
        };
        let mut cfg = SimConfig::new(horizon, seed);
        cfg.warmup_fraction = self.warmup;
        cfg.batches = self.batches;
        cfg.arrivals = self.arrivals;
        cfg.snapshot_interval = self.snapshot_interval;
        cfg.initial = match self.initial {
            Start::Empty => InitialState::Empty,
            Start::Stationary => InitialState::Stationary,
        };
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleSource {
    #[default]
    Exact,
    Ctmc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndependenceSettings {
    /// Queue-name pairs; every pair when empty.
    pub pairs: Vec<(String, String)>,
    pub samples: usize,
    pub source: SampleSource,
    pub p_threshold: f64,
    pub corr_threshold: f64,
}

impl Default for IndependenceSettings {
    fn default() -> Self {
        Self {
            pairs: Vec::new(),
            samples: 100_000,
            source: SampleSource::Exact,
            p_threshold: 0.001,
            corr_threshold: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdpSettings {
    /// Queue vector for the scaling limit and the rate at the stationary composition.
    pub q: Vec<u32>,
    pub scales: Vec<u32>,
    /// Also simulate the Proportional Scheduler and report the drift of the rate.
    pub drift: bool,
    /// Packets per route at the start of the drift run.
    pub initial_packets: u64,
    pub checkpoint_interval: f64,
}

impl Default for LdpSettings {
    fn default() -> Self {
        Self {
            q: Vec::new(),
            scales: vec![8, 32, 128, 512],
            drift: false,
            initial_packets: 1000,
            checkpoint_interval: 1000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BalanceSettings {
    pub checks: usize,
}

impl Default for BalanceSettings {
    fn default() -> Self {
        Self { checks: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Example name, path to a network file, or an inline network table.
    pub network: toml::Value,
    #[serde(default)]
    pub kind: Option<Kind>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub load: Option<f64>,
    #[serde(default)]
    pub simulation: Simulation,
    #[serde(default)]
    pub independence: IndependenceSettings,
    #[serde(default)]
    pub ldp: LdpSettings,
    #[serde(default)]
    pub balance: BalanceSettings,
}

fn default_seeds() -> Vec<u64> {
    vec![1]
}

/// A parsed experiment with the merged document it came from.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub document: toml::Table,
    /// Directory that relative network paths are resolved against.
    pub base_dir: PathBuf,
}

impl Experiment {
    /// Reads `path` (or starts from an empty document), applies `key=value`
    /// overrides in order, and validates the result.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let (mut document, base_dir) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
                let table: toml::Table =
                    text.parse().map_err(|e: toml::de::Error| Error::Config(format!("{}: {e}", p.display())))?;
                (table, p.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (toml::Table::new(), PathBuf::from(".")),
        };
        for (key, value) in overrides {
            apply_override(&mut document, key, value)?;
        }
        if !document.contains_key("network") {
            return Err(Error::Config("network: required (example name, file path or inline table)".into()));
        }
        let config: ExperimentConfig = toml::Value::Table(document.clone())
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string().trim_end().to_string()))?;
        if config.seeds.is_empty() {
            return Err(Error::Config("seeds: at least one seed is required".into()));
        }
        Ok(Self { config, document, base_dir })
    }

    /// SHA-256 of the merged document in canonical (sorted-key) form.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(&self.document).expect("tables serialize");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn network(&self) -> Result<NetworkSpec> {
        let spec = match &self.config.network {
            toml::Value::Table(_) => NetworkConfig::from_value(self.config.network.clone())
                .and_then(|c| c.to_spec())
                .map_err(|e| within("network", e))?,
            toml::Value::String(name) => {
                if catalog::example_names().contains(&name.as_str()) {
                    catalog::example(name)?
                } else {
                    let path = self.base_dir.join(name);
                    let text = std::fs::read_to_string(&path).map_err(|e| {
                        Error::Config(format!(
                            "network: {name:?} is neither an example ({}) nor a readable file: {e}",
                            catalog::example_names().join(", ")
                        ))
                    })?;
                    NetworkConfig::parse(&text)
                        .and_then(|c| c.to_spec())
                        .map_err(|e| within(&path.display().to_string(), e))?
                }
            }
            other => {
                return Err(Error::Config(format!(
                    "network: expected an example name, a file path or a table, got a {}",
                    other.type_str()
                )))
            }
        };
        match self.config.load {
            Some(load) if !(load > 0.0 && load.is_finite()) => {
                Err(Error::Config(format!("load: must be positive, got {load}")))
            }
            Some(load) => spec.with_max_pool_load(load),
            None => Ok(spec),
        }
    }
}

/// Prefixes the message of `e` with where it came from.
fn within(place: &str, e: Error) -> Error {
    match e {
        Error::Config(msg) => Error::Config(format!("{place}: {msg}")),
        other => Error::Config(format!("{place}: {other}")),
    }
}

/// Sets the dotted `key` to `value`, read as a TOML value when it parses as
/// one and as a plain string otherwise.
pub fn apply_override(document: &mut toml::Table, key: &str, value: &str) -> Result<()> {
    let parsed = format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key {key:?} is malformed")));
    }
    let mut table = document;
    for part in &parts[..parts.len() - 1] {
        let entry = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table =
            entry.as_table_mut().ok_or_else(|| Error::Config(format!("override {key:?}: {part:?} is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), parsed);
    Ok(())
}

pub fn parse_override(raw: &str) -> std::result::Result<(String, String), String> {
    raw.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected key=value, got {raw:?}"))
}
