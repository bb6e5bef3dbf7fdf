//! CSV output plus gnuplot-friendly `.dat` mirrors.

use std::fs;
use std::path::{Path, PathBuf};

use super::harness::{ExperimentResult, MosReport, SweepPoint, COMBINED};
use super::{ScenarioError, SweepParameter};
use crate::metrics::Histogram;
use crate::units::fmt6;

/// A rectangular table; `None` cells are written empty in CSV and `NaN` in
/// `.dat` files.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<String>>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Option<String>>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.as_deref().unwrap_or("")))
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
    }

    pub fn to_dat(&self) -> String {
        let mut out = format!("# {}\n", self.header.join(" "));
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c.as_deref() {
                    None => "NaN".to_string(),
                    Some(s) if s.contains(char::is_whitespace) || s.is_empty() => format!("\"{s}\""),
                    Some(s) => s.to_string(),
                })
                .collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
        out
    }

    /// Writes `<stem>.csv` and `<stem>.dat` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>, ScenarioError> {
        let csv = dir.join(format!("{stem}.csv"));
        let dat = dir.join(format!("{stem}.dat"));
        write_file(&csv, &self.to_csv())?;
        write_file(&dat, &self.to_dat())?;
        Ok(vec![csv, dat])
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), ScenarioError> {
    fs::write(path, contents).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn ensure_dir(dir: &Path) -> Result<(), ScenarioError> {
    fs::create_dir_all(dir).map_err(|source| ScenarioError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn num(x: f64) -> Option<String> {
    Some(fmt6(x))
}

fn opt(x: Option<f64>) -> Option<String> {
    x.map(fmt6)
}

fn int(x: impl ToString) -> Option<String> {
    Some(x.to_string())
}

fn text(s: &str) -> Option<String> {
    Some(s.to_string())
}

/// Group key turned into a file-name fragment.
fn slug(group: &str) -> String {
    group
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

pub fn summary_table(result: &ExperimentResult) -> Table {
    let mut t = Table::new(&["metric", "flow", "mean", "ci95_halfwidth", "n"]);
    for s in &result.summaries {
        t.push(vec![
            text(&s.metric),
            text(&s.group),
            num(s.summary.mean),
            opt(s.summary.ci95_half_width),
            int(s.summary.n),
        ]);
    }
    t
}

pub fn repetitions_table(result: &ExperimentResult) -> Table {
    let mut t = Table::new(&[
        "rep",
        "flow",
        "sent",
        "delivered",
        "dropped",
        "loss",
        "mean_delay",
        "max_jitter",
        "smoothed_jitter",
    ]);
    for r in &result.records {
        t.push(vec![
            int(r.repetition),
            int(r.flow_id),
            int(r.sent),
            int(r.delivered),
            int(r.dropped),
            opt(r.loss),
            opt(r.mean_delay),
            opt(r.max_jitter),
            opt(r.smoothed_jitter),
        ]);
    }
    t
}

pub fn histogram_table(h: &Histogram) -> Table {
    let mut t = Table::new(&["bin_lo", "bin_hi", "fraction"]);
    for b in &h.bins {
        t.push(vec![num(b.lo), num(b.hi), num(b.fraction)]);
    }
    t
}

/// Writes the files of one experiment and returns their paths.
pub fn write_experiment(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>, ScenarioError> {
    ensure_dir(dir)?;
    let mut written = summary_table(result).write(dir, "summary")?;
    written.extend(repetitions_table(result).write(dir, "repetitions")?);
    for h in &result.histograms {
        let stem = if h.group == COMBINED {
            format!("histogram_{}", h.metric)
        } else {
            format!("histogram_{}_{}", h.metric, slug(&h.group))
        };
        written.extend(histogram_table(&h.histogram).write(dir, &stem)?);
    }
    let prov = dir.join("provenance.json");
    let json = serde_json::json!({
        "provenance": result.provenance,
        "offered_rate": result.offered_rate,
        "advisory_utilization": result.advisory_utilization,
        "config": result.config,
    });
    write_file(&prov, &(serde_json::to_string_pretty(&json).expect("plain data") + "\n"))?;
    written.push(prov);
    Ok(written)
}

fn value_label(parameter: SweepParameter, value: f64) -> String {
    match parameter {
        SweepParameter::BufferSize => format!("{value}"),
        _ => fmt6(value),
    }
}

pub fn sweep_table(parameter: SweepParameter, points: &[SweepPoint]) -> Table {
    let mut t = Table::new(&[parameter.name(), "metric", "flow", "mean", "ci95_halfwidth", "n"]);
    for p in points {
        for s in &p.result.summaries {
            t.push(vec![
                Some(value_label(parameter, p.value)),
                text(&s.metric),
                text(&s.group),
                num(s.summary.mean),
                opt(s.summary.ci95_half_width),
                int(s.summary.n),
            ]);
        }
    }
    t
}

/// `sweep_summary.*` at the top, one sub-directory per value.
pub fn write_sweep(
    parameter: SweepParameter,
    points: &[SweepPoint],
    dir: &Path,
) -> Result<Vec<PathBuf>, ScenarioError> {
    ensure_dir(dir)?;
    let mut written = sweep_table(parameter, points).write(dir, "sweep_summary")?;
    for p in points {
        let sub = dir.join(format!("{}_{}", parameter.name(), value_label(parameter, p.value)));
        written.extend(write_experiment(&p.result, &sub)?);
    }
    Ok(written)
}

pub fn mos_table(report: &MosReport) -> Table {
    let mut t = Table::new(&["network_delay_ms", "total_delay_ms", "calls", "mean_mos"]);
    for d in &report.per_delay {
        t.push(vec![
            num(d.network_delay_ms),
            num(d.total_delay_ms),
            int(d.values.len()),
            opt(d.mean),
        ]);
    }
    t
}

pub fn write_mos(report: &MosReport, dir: &Path) -> Result<Vec<PathBuf>, ScenarioError> {
    ensure_dir(dir)?;
    let mut written = mos_table(report).write(dir, "mos_summary")?;
    for d in &report.per_delay {
        let stem = format!("histogram_mos_{}ms", fmt6(d.network_delay_ms).trim_end_matches('0').trim_end_matches('.'));
        written.extend(histogram_table(&d.histogram).write(dir, &stem)?);
    }
    Ok(written)
}
