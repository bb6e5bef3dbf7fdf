//! Shared fixtures for the benchmarks.

use std::path::PathBuf;

use accessq_core::{ScenarioConfig, Validated};

/// A bundled scenario with optional `key=value` overrides.
pub fn scenario(name: &str, overrides: &[&str]) -> Validated {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name);
    let overrides: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    ScenarioConfig::load(&path, &overrides)
        .and_then(ScenarioConfig::validate)
        .unwrap_or_else(|e| panic!("{name}: {e}"))
}
