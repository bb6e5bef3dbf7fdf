//! Scenario files, validation and the repetition harness.
//!
//! A scenario is a TOML document with `[link]`, `[buffer]`, `[[flows]]`,
//! `[run]` and an optional `[sweep]` section. Quantities accept unit suffixes
//! (`"3.5Mbps"`, `"20ms"`, `"1500B"`).

mod config;
mod harness;
pub mod report;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{
    apply_overrides, ConfigIssue, RunConfig, ScenarioConfig, SweepParameter, SweepSpec, SweepValue,
    Validated,
};
pub use harness::{
    aggregate, mos_report, run_experiment, sweep, ExperimentOptions, ExperimentResult, FlowRecord,
    GroupHistogram, MetricSummary, MosAtDelay, MosReport, Provenance, SweepPoint, COMBINED,
    VOIP_SERVICE,
};

use crate::sim::SimError;

/// Network delays, ms, used for the default MOS report.
pub const MOS_NETWORK_DELAYS_MS: [f64; 6] = [20.0, 40.0, 60.0, 100.0, 120.0, 140.0];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("bad override {spec:?}: {message}")]
    Override { spec: String, message: String },
    #[error("invalid scenario:\n{}", .0.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<ConfigIssue>),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("scenario has no flow with service = \"voip\"")]
    NoVoip,
}

impl ScenarioError {
    pub fn is_io(&self) -> bool {
        matches!(self, ScenarioError::Io { .. })
    }
}
