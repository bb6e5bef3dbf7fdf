use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ScenarioError;
use crate::buffers::BufferPolicy;
use crate::metrics::{LOSS_BIN_WIDTH_PP, MOS_BIN_WIDTH};
use crate::sim::LinkConfig;
use crate::traffic::{FlowSpec, Source, Trace, TrafficError};
use crate::units;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Measured interval, after the warmup.
    #[serde(with = "units::seconds")]
    pub duration: f64,
    #[serde(with = "units::seconds", default = "default_warmup")]
    pub warmup: f64,
    #[serde(default = "default_repetitions")]
    pub repetitions: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Flow start offsets are drawn uniformly from `[0, start_offset_window]`.
    #[serde(with = "units::seconds", default = "default_offset_window")]
    pub start_offset_window: f64,
    /// Loss histogram bin width in percentage points.
    #[serde(default = "default_loss_bin")]
    pub loss_bin_width: f64,
    #[serde(default = "default_mos_bin")]
    pub mos_bin_width: f64,
}

fn default_warmup() -> f64 {
    2.0
}
fn default_repetitions() -> u32 {
    40
}
fn default_seed() -> u64 {
    1
}
fn default_offset_window() -> f64 {
    2.0
}
fn default_loss_bin() -> f64 {
    LOSS_BIN_WIDTH_PP
}
fn default_mos_bin() -> f64 {
    MOS_BIN_WIDTH
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Buffer capacity in the configured unit.
    BufferSize,
    ROut,
    RIn,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::BufferSize => "buffer_size",
            SweepParameter::ROut => "r_out",
            SweepParameter::RIn => "r_in",
        }
    }
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SweepParameter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "buffer_size" | "buffer" => Ok(SweepParameter::BufferSize),
            "r_out" => Ok(SweepParameter::ROut),
            "r_in" => Ok(SweepParameter::RIn),
            other => Err(format!("unknown sweep parameter {other:?} (buffer_size, r_out, r_in)")),
        }
    }
}

/// One swept value; rates may carry unit suffixes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SweepValue(#[serde(with = "units::rate")] pub f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<SweepValue>,
}

impl SweepSpec {
    pub fn values(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.0).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub link: LinkConfig,
    pub buffer: BufferPolicy,
    pub flows: Vec<FlowSpec>,
    pub run: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    /// Directory that relative trace paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// A violated invariant, located by its dotted field path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

fn set_path(root: &mut toml::Value, path: &str, value: toml::Value) -> Result<(), String> {
    let keys: Vec<&str> = path.split('.').collect();
    let mut node = root;
    for (i, key) in keys.iter().enumerate() {
        let last = i + 1 == keys.len();
        node = match node {
            toml::Value::Table(t) => {
                if last {
                    t.insert(key.to_string(), value);
                    return Ok(());
                }
                t.entry(key.to_string())
                    .or_insert_with(|| toml::Value::Table(Default::default()))
            }
            toml::Value::Array(a) => {
                let idx: usize = key
                    .parse()
                    .map_err(|_| format!("{key:?} is not an array index"))?;
                let len = a.len();
                let slot = a
                    .get_mut(idx)
                    .ok_or_else(|| format!("index {idx} out of range (length {len})"))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(format!("{key:?} does not name a table or array")),
        };
    }
    unreachable!("split yields at least one key")
}

/// Parses the right-hand side of `key=value` as a TOML value, falling back to a
/// bare string so `link.r_out=5Mbps` works without quoting.
fn parse_override_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()))
}

/// Applies `key=value` overrides to a parsed document.
pub fn apply_overrides(doc: &mut toml::Value, overrides: &[String]) -> Result<(), ScenarioError> {
    for spec in overrides {
        let bad = |message: String| ScenarioError::Override {
            spec: spec.clone(),
            message,
        };
        let (key, raw) = spec
            .split_once('=')
            .ok_or_else(|| bad("expected key=value".into()))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(bad("empty key".into()));
        }
        set_path(doc, key, parse_override_value(raw)).map_err(bad)?;
    }
    Ok(())
}

impl ScenarioConfig {
    pub fn from_toml_str(
        text: &str,
        base_dir: &Path,
        overrides: &[String],
    ) -> Result<Self, ScenarioError> {
        let mut doc: toml::Value = toml::from_str::<toml::Table>(text)
            .map(toml::Value::Table)
            .map_err(|e| ScenarioError::Parse(e.to_string()))?;
        apply_overrides(&mut doc, overrides)?;
        let mut config: ScenarioConfig = doc
            .try_into()
            .map_err(|e: toml::de::Error| ScenarioError::Parse(e.to_string()))?;
        config.base_dir = base_dir.to_path_buf();
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Self::from_toml_str(&text, &base, overrides)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable")
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config is always serializable");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// A copy with one parameter replaced, as used by sweeps.
    pub fn with_parameter(&self, parameter: SweepParameter, value: f64) -> Self {
        let mut c = self.clone();
        match parameter {
            SweepParameter::BufferSize => c.buffer.capacity = value.round().max(0.0) as u64,
            SweepParameter::ROut => c.link.r_out = value,
            SweepParameter::RIn => c.link.r_in = value,
        }
        c.sweep = None;
        c
    }

    fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    fn issues(&self) -> Vec<ConfigIssue> {
        let mut out = Vec::new();
        let mut push = |path: String, message: String| out.push(ConfigIssue { path, message });
        for (name, v) in [("r_in", self.link.r_in), ("r_out", self.link.r_out)] {
            if !(v > 0.0 && v.is_finite()) {
                push(format!("link.{name}"), format!("must be positive, got {v}"));
            }
        }
        for (field, msg) in self.buffer.check() {
            push(format!("buffer.{field}"), msg);
        }
        if self.flows.is_empty() {
            push("flows".into(), "at least one flow is required".into());
        }
        let mut seen = BTreeMap::new();
        for (i, f) in self.flows.iter().enumerate() {
            if let Some(first) = seen.insert(f.id, i) {
                push(
                    format!("flows.{i}.id"),
                    format!("duplicate id {} (also flows.{first})", f.id),
                );
            }
            for (field, msg) in f.check() {
                push(format!("flows.{i}.{field}"), msg);
            }
        }
        let r = &self.run;
        if !(r.warmup >= 0.0) {
            push("run.warmup".into(), "must be nonnegative".into());
        }
        if !(r.duration > r.warmup) || !r.duration.is_finite() {
            push(
                "run.duration".into(),
                format!("must exceed run.warmup ({} s), got {} s", r.warmup, r.duration),
            );
        }
        if r.repetitions == 0 {
            push("run.repetitions".into(), "must be at least 1".into());
        }
        if !(r.start_offset_window >= 0.0) {
            push("run.start_offset_window".into(), "must be nonnegative".into());
        }
        for (name, w) in [("loss_bin_width", r.loss_bin_width), ("mos_bin_width", r.mos_bin_width)] {
            if !(w > 0.0) {
                push(format!("run.{name}"), "must be positive".into());
            }
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                push("sweep.values".into(), "must not be empty".into());
            }
            for (i, v) in s.values.iter().enumerate() {
                let ok = match s.parameter {
                    SweepParameter::BufferSize => v.0 >= 1.0 && v.0.fract() == 0.0,
                    _ => v.0 > 0.0,
                };
                if !ok {
                    push(format!("sweep.values.{i}"), format!("invalid {} {}", s.parameter, v.0));
                }
            }
        }
        out
    }

    /// Checks every invariant, loads traces and computes the offered load.
    pub fn validate(self) -> Result<Validated, ScenarioError> {
        let mut issues = self.issues();
        let mut traces = BTreeMap::new();
        for (i, f) in self.flows.iter().enumerate() {
            if let Source::Trace(p) = &f.source {
                match Trace::load(&self.resolve(&p.path)) {
                    Ok(t) if t.records.is_empty() => issues.push(ConfigIssue {
                        path: format!("flows.{i}.path"),
                        message: "trace has no packets".into(),
                    }),
                    Ok(t) => {
                        traces.insert(f.id, t);
                    }
                    Err(TrafficError::TraceIo { path, source }) => {
                        return Err(ScenarioError::Io { path, source })
                    }
                    Err(e) => issues.push(ConfigIssue {
                        path: format!("flows.{i}.path"),
                        message: e.to_string(),
                    }),
                }
            }
        }
        if !issues.is_empty() {
            return Err(ScenarioError::Invalid(issues));
        }
        let offered_rate = self
            .flows
            .iter()
            .filter_map(|f| f.mean_rate(traces.get(&f.id)))
            .sum::<f64>();
        Ok(Validated {
            advisory_utilization: offered_rate / self.link.r_out,
            offered_rate,
            traces,
            config: self,
        })
    }
}

/// A configuration that passed validation, with its traces loaded.
#[derive(Debug, Clone)]
pub struct Validated {
    pub config: ScenarioConfig,
    pub traces: BTreeMap<u32, Trace>,
    /// Sum of the flows' long-run mean rates, bit/s.
    pub offered_rate: f64,
    /// `offered_rate / r_out`.
    pub advisory_utilization: f64,
}
