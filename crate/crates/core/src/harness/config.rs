//! Scenario configuration read from TOML.
//!
//! ```toml
//! protocol = "tdfsa"        # tdfsa | ideal_tdfsa | ideal_dfsa | fixed_fsa | threshold_aloha
//! n_nodes = 100
//! lambda = 0.3
//! w_min = 3                 # or "sweep" for the best of 1..=5
//! total_slots = 1000000
//! warmup_slots = 200000     # default: 20% of total_slots
//! seed = 1
//! replications = 4
//! initial_y = "ramp"        # ramp | uniform | [y_0, y_1, ...]
//! reset_patience = 50
//! complexity_shortcut = false
//! fsa_frame_len = 40        # default: grid search
//! ta_threshold = 30         # default: grid search
//! ta_tx_prob = 0.1          # default: grid search
//!
//! [sweep]                   # run_sweep only: cartesian grid over any key
//! lambda = [0.1, 0.3, 0.6]
//! protocol = ["tdfsa", "fixed_fsa"]
//! ```

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    Tdfsa,
    IdealTdfsa,
    IdealDfsa,
    FixedFsa,
    ThresholdAloha,
}

impl ProtocolKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProtocolKind::Tdfsa => "tdfsa",
            ProtocolKind::IdealTdfsa => "ideal_tdfsa",
            ProtocolKind::IdealDfsa => "ideal_dfsa",
            ProtocolKind::FixedFsa => "fixed_fsa",
            ProtocolKind::ThresholdAloha => "threshold_aloha",
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawWMin", into = "RawWMin")]
pub enum WMin {
    Fixed(u64),
    Sweep,
}

impl Default for WMin {
    fn default() -> Self {
        WMin::Fixed(1)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawWMin {
    Value(u64),
    Name(String),
}

impl TryFrom<RawWMin> for WMin {
    type Error = String;
    fn try_from(raw: RawWMin) -> std::result::Result<Self, String> {
        match raw {
            RawWMin::Value(v) => Ok(WMin::Fixed(v)),
            RawWMin::Name(s) if s == "sweep" => Ok(WMin::Sweep),
            RawWMin::Name(s) => Err(format!("w_min must be an integer or \"sweep\", got {s:?}")),
        }
    }
}

impl From<WMin> for RawWMin {
    fn from(w: WMin) -> Self {
        match w {
            WMin::Fixed(v) => RawWMin::Value(v),
            WMin::Sweep => RawWMin::Name("sweep".into()),
        }
    }
}

/// Initial AP ages; every node starts with a fresh update of age 1.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "RawInitialY", into = "RawInitialY")]
pub enum InitialY {
    /// `y_0^i = i + 1`.
    #[default]
    Ramp,
    /// `y_0^i = N` for every node.
    Uniform,
    Explicit(Vec<u64>),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawInitialY {
    Name(String),
    List(Vec<u64>),
}

impl TryFrom<RawInitialY> for InitialY {
    type Error = String;
    fn try_from(raw: RawInitialY) -> std::result::Result<Self, String> {
        match raw {
            RawInitialY::Name(s) if s == "ramp" => Ok(InitialY::Ramp),
            RawInitialY::Name(s) if s == "uniform" => Ok(InitialY::Uniform),
            RawInitialY::Name(s) => Err(format!(
                "initial_y must be \"ramp\", \"uniform\" or a list, got {s:?}"
            )),
            RawInitialY::List(v) => Ok(InitialY::Explicit(v)),
        }
    }
}

impl From<InitialY> for RawInitialY {
    fn from(y: InitialY) -> Self {
        match y {
            InitialY::Ramp => RawInitialY::Name("ramp".into()),
            InitialY::Uniform => RawInitialY::Name("uniform".into()),
            InitialY::Explicit(v) => RawInitialY::List(v),
        }
    }
}

impl InitialY {
    pub fn ages(&self, n: u64) -> Vec<u64> {
        match self {
            InitialY::Ramp => (1..=n).collect(),
            InitialY::Uniform => vec![n.max(1); n as usize],
            InitialY::Explicit(v) => v.clone(),
        }
    }
}

/// Bounds for the baseline grid searches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    /// Frame lengths and TA thresholds are searched in `1..=factor * N`.
    pub range_factor: u64,
    pub tx_prob_step: f64,
    /// Grid points per zoom level.
    pub points: u64,
    /// Horizon of each search evaluation; defaults to the scenario's.
    pub total_slots: Option<u64>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            range_factor: 4,
            tx_prob_step: 0.02,
            points: 12,
            total_slots: None,
        }
    }
}

fn default_slots() -> u64 {
    1_000_000
}
fn default_one() -> u64 {
    1
}
fn default_patience() -> u64 {
    50
}
fn default_window() -> u64 {
    10_000
}
fn default_epsilon() -> f64 {
    1e-3
}
fn default_protocol() -> ProtocolKind {
    ProtocolKind::Tdfsa
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_protocol")]
    pub protocol: ProtocolKind,
    #[serde(alias = "N")]
    pub n_nodes: u64,
    pub lambda: f64,
    #[serde(default)]
    pub w_min: WMin,
    #[serde(default = "default_slots")]
    pub total_slots: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup_slots: Option<u64>,
    #[serde(default = "default_one")]
    pub seed: u64,
    #[serde(default = "default_one")]
    pub replications: u64,
    #[serde(default)]
    pub initial_y: InitialY,
    #[serde(default = "default_patience")]
    pub reset_patience: u64,
    #[serde(default)]
    pub complexity_shortcut: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fsa_frame_len: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ta_threshold: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ta_tx_prob: Option<f64>,
    #[serde(default = "default_window")]
    pub stability_window: u64,
    #[serde(default = "default_epsilon")]
    pub stability_epsilon: f64,
    #[serde(default)]
    pub search: SearchConfig,
}

/// A scenario file: the base scenario plus an optional sweep grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigFile {
    pub base: ScenarioConfig,
    /// Key to values, in key order.
    pub sweep: BTreeMap<String, Vec<toml::Value>>,
}

impl ScenarioConfig {
    pub fn new(protocol: ProtocolKind, n_nodes: u64, lambda: f64) -> Self {
        Self {
            protocol,
            n_nodes,
            lambda,
            w_min: WMin::default(),
            total_slots: default_slots(),
            warmup_slots: None,
            seed: 1,
            replications: 1,
            initial_y: InitialY::Ramp,
            reset_patience: default_patience(),
            complexity_shortcut: false,
            fsa_frame_len: None,
            ta_threshold: None,
            ta_tx_prob: None,
            stability_window: default_window(),
            stability_epsilon: default_epsilon(),
            search: SearchConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn warmup(&self) -> u64 {
        self.warmup_slots.unwrap_or(self.total_slots / 5)
    }

    pub fn initial_ap_ages(&self) -> Vec<u64> {
        self.initial_y.ages(self.n_nodes)
    }

    /// Every constraint violation, as `field: message`.
    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            out.push("lambda: lambda must be in (0,1]".to_string());
        }
        if self.n_nodes == 0 {
            out.push("n_nodes: N must be at least 1".to_string());
        }
        if self.total_slots == 0 {
            out.push("total_slots: must be at least 1".to_string());
        }
        if self.warmup() >= self.total_slots {
            out.push(format!(
                "warmup_slots: warmup {} must be below total_slots {}",
                self.warmup(),
                self.total_slots
            ));
        }
        if self.replications == 0 {
            out.push("replications: must be at least 1".to_string());
        }
        if self.w_min == WMin::Fixed(0) {
            out.push("w_min: must be at least 1".to_string());
        }
        if let InitialY::Explicit(v) = &self.initial_y {
            if v.len() as u64 != self.n_nodes {
                out.push(format!(
                    "initial_y: {} values given for {} nodes",
                    v.len(),
                    self.n_nodes
                ));
            }
            if v.contains(&0) {
                out.push("initial_y: AP ages must be at least 1".to_string());
            }
        }
        if self.fsa_frame_len == Some(0) {
            out.push("fsa_frame_len: must be at least 1".to_string());
        }
        if self.ta_threshold == Some(0) {
            out.push("ta_threshold: must be at least 1".to_string());
        }
        if let Some(p) = self.ta_tx_prob {
            if !(p > 0.0 && p <= 1.0) {
                out.push("ta_tx_prob: must be in (0,1]".to_string());
            }
        }
        if self.stability_window == 0 {
            out.push("stability_window: must be at least 1".to_string());
        }
        if self.stability_epsilon.is_nan() || self.stability_epsilon < 0.0 {
            out.push("stability_epsilon: must be non-negative".to_string());
        }
        if self.search.range_factor == 0 {
            out.push("search.range_factor: must be at least 1".to_string());
        }
        if !(self.search.tx_prob_step > 0.0 && self.search.tx_prob_step <= 1.0) {
            out.push("search.tx_prob_step: must be in (0,1]".to_string());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.diagnostics();
        if d.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(d.join("; ")))
        }
    }

    /// Copy with `key` replaced by `value`, re-validated by deserialization.
    pub fn with_field(&self, key: &str, value: &toml::Value) -> Result<Self> {
        let mut table = toml::Value::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        let t = table
            .as_table_mut()
            .ok_or_else(|| Error::Config("scenario did not serialize to a table".into()))?;
        let key = if key == "N" { "n_nodes" } else { key };
        if let Some((outer, inner)) = key.split_once('.') {
            let sub = t
                .entry(outer.to_string())
                .or_insert_with(|| toml::Value::Table(Default::default()));
            sub.as_table_mut()
                .ok_or_else(|| Error::Config(format!("{outer}: not a table")))?
                .insert(inner.to_string(), value.clone());
        } else {
            t.insert(key.to_string(), value.clone());
        }
        table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("{key}: {}", e.message())))
    }
}

impl ConfigFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        let sweep = match table.remove("sweep") {
            None => BTreeMap::new(),
            Some(toml::Value::Table(t)) => {
                let mut out = BTreeMap::new();
                for (k, v) in t {
                    match v {
                        toml::Value::Array(a) if !a.is_empty() => {
                            out.insert(k, a);
                        }
                        _ => {
                            return Err(Error::Config(format!(
                                "sweep.{k}: must be a non-empty array"
                            )))
                        }
                    }
                }
                out
            }
            Some(_) => return Err(Error::Config("sweep: must be a table".into())),
        };
        let base: ScenarioConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        Ok(Self { base, sweep })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    /// Cartesian product of the sweep grid in row-major key order (the
    /// last key varies fastest). A file without a grid yields its base.
    pub fn points(&self) -> Vec<Result<ScenarioConfig>> {
        let keys: Vec<&String> = self.sweep.keys().collect();
        let sizes: Vec<usize> = keys.iter().map(|k| self.sweep[*k].len()).collect();
        let total: usize = sizes.iter().product();
        (0..total)
            .map(|mut idx| {
                let mut choice = vec![0; keys.len()];
                for j in (0..keys.len()).rev() {
                    choice[j] = idx % sizes[j];
                    idx /= sizes[j];
                }
                let mut cfg = self.base.clone();
                for (j, k) in keys.iter().enumerate() {
                    cfg = cfg.with_field(k, &self.sweep[*k][choice[j]])?;
                }
                Ok(cfg)
            })
            .collect()
    }
}
