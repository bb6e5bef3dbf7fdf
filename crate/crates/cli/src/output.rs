//! Text and JSON rendering that share one set of formatted values.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use accessq_core::scenario::{ConfigIssue, MetricSummary, MosReport, SweepParameter, SweepPoint, COMBINED};
use accessq_core::units::{fmt6, pretty_bytes, pretty_rate};
use serde_json::{json, Map, Value};

/// JSON number carrying exactly the digits printed in text mode.
fn number(x: f64) -> Value {
    serde_json::from_str(&fmt6(x)).unwrap_or(Value::Null)
}

fn opt_number(x: Option<f64>) -> Value {
    x.map(number).unwrap_or(Value::Null)
}

pub struct Output {
    json: bool,
    fields: Map<String, Value>,
    lines: Vec<String>,
    errors: Vec<String>,
    failed: bool,
}

impl Output {
    pub fn new(json: bool) -> Self {
        Self {
            json,
            fields: Map::new(),
            lines: Vec::new(),
            errors: Vec::new(),
            failed: false,
        }
    }

    pub fn text(&mut self, key: &str, value: &str) {
        self.fields.insert(key.into(), Value::String(value.into()));
        self.lines.push(format!("{key}: {value}"));
    }

    pub fn path(&mut self, key: &str, p: &Path) {
        self.text(key, &p.display().to_string());
    }

    pub fn int(&mut self, key: &str, v: u64) {
        self.fields.insert(key.into(), Value::from(v));
        self.lines.push(format!("{key}: {v}"));
    }

    pub fn flag(&mut self, key: &str, v: bool) {
        self.fields.insert(key.into(), Value::Bool(v));
        self.lines.push(format!("{key}: {v}"));
    }

    pub fn number(&mut self, key: &str, v: f64) {
        self.fields.insert(key.into(), number(v));
        self.lines.push(format!("{key}: {}", fmt6(v)));
    }

    /// Stored under `<key>_bps`; text adds a rounded rendering.
    pub fn rate(&mut self, key: &str, bps: f64) {
        self.fields.insert(format!("{key}_bps"), number(bps));
        self.lines.push(format!("{key}: {} bit/s ({})", fmt6(bps), pretty_rate(bps)));
    }

    pub fn bytes(&mut self, key: &str, b: f64) {
        self.fields.insert(format!("{key}_bytes"), number(b));
        self.lines.push(format!("{key}: {} B ({})", fmt6(b), pretty_bytes(b)));
    }

    pub fn seconds(&mut self, key: &str, s: f64) {
        self.fields.insert(format!("{key}_s"), number(s));
        self.lines.push(format!("{key}: {} s", fmt6(s)));
    }

    pub fn summaries(&mut self, summaries: &[MetricSummary]) {
        let rows: Vec<Value> = summaries
            .iter()
            .map(|s| {
                json!({
                    "metric": s.metric,
                    "group": s.group,
                    "mean": number(s.summary.mean),
                    "ci95_halfwidth": opt_number(s.summary.ci95_half_width),
                    "n": s.summary.n,
                })
            })
            .collect();
        self.fields.insert("summaries".into(), Value::Array(rows));
        self.lines.push(format!(
            "{:<16} {:<24} {:>12} {:>14} {:>5}",
            "metric", "group", "mean", "ci95_halfwidth", "n"
        ));
        for s in summaries {
            self.lines.push(format!(
                "{:<16} {:<24} {:>12} {:>14} {:>5}",
                s.metric,
                s.group,
                fmt6(s.summary.mean),
                s.summary.ci95_half_width.map(fmt6).unwrap_or_else(|| "-".into()),
                s.summary.n
            ));
        }
    }

    pub fn sweep(&mut self, parameter: SweepParameter, points: &[SweepPoint]) {
        let combined = |p: &SweepPoint| p.result.summary("loss", COMBINED).copied();
        let rows: Vec<Value> = points
            .iter()
            .map(|p| {
                let s = combined(p);
                json!({
                    "value": number(p.value),
                    "advisory_utilization": number(p.result.advisory_utilization),
                    "config_hash": p.result.provenance.config_hash,
                    "mean_loss": opt_number(s.map(|s| s.mean)),
                    "ci95_halfwidth": opt_number(s.and_then(|s| s.ci95_half_width)),
                })
            })
            .collect();
        self.fields.insert("points".into(), Value::Array(rows));
        self.lines.push(format!(
            "{:>12} {:>12} {:>12} {:>14}",
            parameter.name(),
            "utilization",
            "mean_loss",
            "ci95_halfwidth"
        ));
        for p in points {
            let s = combined(p);
            self.lines.push(format!(
                "{:>12} {:>12} {:>12} {:>14}",
                fmt6(p.value),
                fmt6(p.result.advisory_utilization),
                s.map(|s| fmt6(s.mean)).unwrap_or_else(|| "-".into()),
                s.and_then(|s| s.ci95_half_width).map(fmt6).unwrap_or_else(|| "-".into()),
            ));
        }
    }

    pub fn mos(&mut self, report: &MosReport) {
        let rows: Vec<Value> = report
            .per_delay
            .iter()
            .map(|d| {
                json!({
                    "network_delay_ms": number(d.network_delay_ms),
                    "total_delay_ms": number(d.total_delay_ms),
                    "mean_mos": opt_number(d.mean),
                })
            })
            .collect();
        self.fields.insert("per_delay".into(), Value::Array(rows));
        self.lines.push(format!("{:>16} {:>14} {:>10}", "network_delay_ms", "total_delay_ms", "mean_mos"));
        for d in &report.per_delay {
            self.lines.push(format!(
                "{:>16} {:>14} {:>10}",
                fmt6(d.network_delay_ms),
                fmt6(d.total_delay_ms),
                d.mean.map(fmt6).unwrap_or_else(|| "-".into())
            ));
        }
    }

    /// Validation problems go to stderr in text mode.
    pub fn issues(&mut self, issues: &[ConfigIssue]) {
        let rows: Vec<Value> = issues
            .iter()
            .map(|i| json!({ "path": i.path, "message": i.message }))
            .collect();
        self.fields.insert("issues".into(), Value::Array(rows));
        self.errors.extend(issues.iter().map(|i| format!("error: {i}")));
    }

    pub fn files(&mut self, dir: &Path, files: &[PathBuf]) {
        self.fields.insert("output_dir".into(), Value::String(dir.display().to_string()));
        self.fields.insert(
            "files".into(),
            Value::Array(files.iter().map(|f| Value::String(f.display().to_string())).collect()),
        );
        self.lines.push(format!("wrote {} files to {}", files.len(), dir.display()));
    }

    pub fn fail(&mut self) {
        self.failed = true;
    }

    pub fn finish(self) -> ExitCode {
        // a closed pipe (`accessq ... | head`) is not an error worth reporting
        let mut stdout = std::io::stdout().lock();
        if self.json {
            let text = serde_json::to_string_pretty(&Value::Object(self.fields)).expect("plain data");
            let _ = writeln!(stdout, "{text}");
        } else {
            for l in &self.lines {
                if writeln!(stdout, "{l}").is_err() {
                    break;
                }
            }
            for e in &self.errors {
                eprintln!("{e}");
            }
        }
        if self.failed {
            ExitCode::from(1)
        } else {
            ExitCode::SUCCESS
        }
    }
}
