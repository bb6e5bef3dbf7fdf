use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ScenarioConfig, ScenarioError, SweepParameter, Validated};
use crate::metrics::{self, FlowStats, Histogram, RepetitionSummary};
use crate::qos::{self, EModelInput};
use crate::rng::{stream, Purpose, ROUTER_STREAM};
use crate::sim::{self, EngineInput, FlowInput, SimError, SimResult, SimTime, Window};

/// Service name that marks a flow as a voice call for MOS reports.
pub const VOIP_SERVICE: &str = "voip";

/// Group key for all flows together.
pub const COMBINED: &str = "combined";

impl Validated {
    /// One repetition. Flows are simulated in id order so that reordering the
    /// flow list cannot change any result; stats come back in config order.
    pub fn simulate(&self, repetition: u32, record_log: bool) -> Result<SimResult, SimError> {
        let c = &self.config;
        let seed = c.run.seed;
        let warmup = SimTime::from_secs_f64(c.run.warmup);
        let horizon = SimTime::from_secs_f64(c.run.warmup + c.run.duration);
        let mut order: Vec<usize> = (0..c.flows.len()).collect();
        order.sort_by_key(|&i| c.flows[i].id);
        let inputs = order
            .iter()
            .map(|&i| {
                let f = &c.flows[i];
                let offset = f.start_offset.unwrap_or_else(|| {
                    let mut rng = stream(seed, repetition, f.id, Purpose::StartOffset);
                    rng.random::<f64>() * c.run.start_offset_window
                });
                let mut rng = stream(seed, repetition, f.id, Purpose::Generator);
                FlowInput {
                    flow_id: f.id,
                    packets: f.generate(
                        horizon,
                        SimTime::from_secs_f64(offset),
                        &mut rng,
                        self.traces.get(&f.id),
                    ),
                }
            })
            .collect();
        let mut result = sim::simulate(EngineInput {
            link: c.link,
            buffer: &c.buffer,
            flows: inputs,
            window: Window {
                start: warmup,
                end: horizon,
            },
            red_rng: stream(seed, repetition, ROUTER_STREAM, Purpose::Red),
            record_log,
        })?;
        let mut by_position: Vec<Option<FlowStats>> = vec![None; c.flows.len()];
        for (stats, &i) in result.flows.drain(..).zip(&order) {
            by_position[i] = Some(stats);
        }
        result.flows = by_position.into_iter().map(|s| s.expect("every flow simulated")).collect();
        Ok(result)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExperimentOptions {
    /// Worker threads for repetitions; all cores when absent.
    pub threads: Option<usize>,
}

/// Per-repetition, per-flow measurements. Delay samples are reduced to their
/// mean and jitter figures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub repetition: u32,
    pub flow_id: u32,
    pub service: String,
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub dropped_full: u64,
    pub dropped_red: u64,
    pub in_flight: u64,
    pub loss: Option<f64>,
    /// Seconds.
    pub mean_delay: Option<f64>,
    pub max_jitter: Option<f64>,
    pub smoothed_jitter: Option<f64>,
    /// Sum of delays, seconds, so group means can be weighted exactly.
    pub delay_sum: f64,
}

impl FlowRecord {
    fn new(repetition: u32, service: &str, s: &FlowStats) -> Self {
        let jitter = s.jitter();
        Self {
            repetition,
            flow_id: s.flow_id,
            service: service.to_string(),
            sent: s.sent,
            delivered: s.delivered,
            dropped: s.dropped,
            dropped_full: s.dropped_full,
            dropped_red: s.dropped_red,
            in_flight: s.in_flight,
            loss: s.loss_ratio(),
            mean_delay: s.mean_delay(),
            max_jitter: jitter.map(|j| j.max_variation),
            smoothed_jitter: jitter.map(|j| j.smoothed),
            delay_sum: s.delay_samples.iter().sum(),
        }
    }

    pub fn is_conserved(&self) -> bool {
        self.sent == self.delivered + self.dropped + self.in_flight
            && self.dropped == self.dropped_full + self.dropped_red
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub repetitions: u32,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    /// `combined`, `service:<name>` or `flow:<id>`.
    pub group: String,
    pub summary: RepetitionSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupHistogram {
    pub metric: String,
    pub group: String,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub provenance: Provenance,
    pub config: ScenarioConfig,
    pub offered_rate: f64,
    pub advisory_utilization: f64,
    /// Repetition-major, flows in config order.
    pub records: Vec<FlowRecord>,
    pub summaries: Vec<MetricSummary>,
    pub histograms: Vec<GroupHistogram>,
}

/// Metrics of one group in one repetition.
#[derive(Debug, Clone, Copy, Default)]
struct GroupSample {
    sent: u64,
    dropped: u64,
    delivered: u64,
    delay_sum: f64,
}

impl GroupSample {
    fn add(&mut self, r: &FlowRecord) {
        self.sent += r.sent;
        self.dropped += r.dropped;
        self.delivered += r.delivered;
        self.delay_sum += r.delay_sum;
    }

    fn loss(&self) -> Option<f64> {
        metrics::loss_ratio(self.sent, self.dropped)
    }

    fn mean_delay(&self) -> Option<f64> {
        (self.delivered > 0).then(|| self.delay_sum / self.delivered as f64)
    }
}

enum Group {
    Combined,
    Service(String),
    Flow(u32),
}

impl Group {
    fn key(&self) -> String {
        match self {
            Group::Combined => COMBINED.to_string(),
            Group::Service(s) => format!("service:{s}"),
            Group::Flow(id) => format!("flow:{id}"),
        }
    }

    fn contains(&self, r: &FlowRecord) -> bool {
        match self {
            Group::Combined => true,
            Group::Service(s) => &r.service == s,
            Group::Flow(id) => r.flow_id == *id,
        }
    }
}

fn groups(config: &ScenarioConfig) -> Vec<Group> {
    let mut services: Vec<String> = config.flows.iter().map(|f| f.service_name().to_string()).collect();
    services.sort();
    services.dedup();
    std::iter::once(Group::Combined)
        .chain(services.into_iter().map(Group::Service))
        .chain(config.flows.iter().map(|f| Group::Flow(f.id)))
        .collect()
}

/// Rebuilds summaries and histograms from the raw records.
pub fn aggregate(config: &ScenarioConfig, records: &[FlowRecord]) -> (Vec<MetricSummary>, Vec<GroupHistogram>) {
    let mut summaries = Vec::new();
    let mut histograms = Vec::new();
    for group in groups(config) {
        let key = group.key();
        let mut per_rep = vec![GroupSample::default(); config.run.repetitions as usize];
        for r in records.iter().filter(|r| group.contains(r)) {
            per_rep[r.repetition as usize].add(r);
        }
        let losses: Vec<f64> = per_rep.iter().filter_map(GroupSample::loss).collect();
        let delays: Vec<f64> = per_rep.iter().filter_map(GroupSample::mean_delay).collect();
        let mut push = |metric: &str, values: &[f64]| {
            if let Some(summary) = metrics::summarize(values) {
                summaries.push(MetricSummary {
                    metric: metric.into(),
                    group: key.clone(),
                    summary,
                });
            }
        };
        push("loss", &losses);
        push("mean_delay", &delays);
        if let Group::Flow(_) = group {
            let of_flow = |pick: fn(&FlowRecord) -> Option<f64>| -> Vec<f64> {
                records.iter().filter(|r| group.contains(r)).filter_map(pick).collect()
            };
            push("max_jitter", &of_flow(|r| r.max_jitter));
            push("smoothed_jitter", &of_flow(|r| r.smoothed_jitter));
        }
        let pct: Vec<f64> = losses.iter().map(|l| l * 100.0).collect();
        histograms.push(GroupHistogram {
            metric: "loss".into(),
            group: key,
            histogram: metrics::histogram(&pct, config.run.loss_bin_width),
        });
    }
    (summaries, histograms)
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool, ScenarioError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| ScenarioError::Parse(format!("thread pool: {e}")))
}

/// Runs every repetition, in parallel, and folds the results in index order.
pub fn run_experiment(
    scenario: &Validated,
    options: ExperimentOptions,
) -> Result<ExperimentResult, ScenarioError> {
    let c = &scenario.config;
    let per_rep: Vec<Result<Vec<FlowRecord>, SimError>> = pool(options.threads)?.install(|| {
        (0..c.run.repetitions)
            .into_par_iter()
            .map(|rep| {
                let res = scenario.simulate(rep, false)?;
                Ok(res
                    .flows
                    .iter()
                    .zip(&c.flows)
                    .map(|(s, f)| {
                        debug_assert!(s.is_conserved());
                        FlowRecord::new(rep, f.service_name(), s)
                    })
                    .collect())
            })
            .collect()
    });
    let mut records = Vec::with_capacity(c.flows.len() * c.run.repetitions as usize);
    for r in per_rep {
        records.extend(r?);
    }
    let (summaries, histograms) = aggregate(c, &records);
    Ok(ExperimentResult {
        provenance: Provenance {
            config_hash: c.config_hash(),
            seed: c.run.seed,
            repetitions: c.run.repetitions,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        },
        config: c.clone(),
        offered_rate: scenario.offered_rate,
        advisory_utilization: scenario.advisory_utilization,
        records,
        summaries,
        histograms,
    })
}

impl ExperimentResult {
    pub fn summary(&self, metric: &str, group: &str) -> Option<&RepetitionSummary> {
        self.summaries
            .iter()
            .find(|s| s.metric == metric && s.group == group)
            .map(|s| &s.summary)
    }

    pub fn histogram(&self, metric: &str, group: &str) -> Option<&Histogram> {
        self.histograms
            .iter()
            .find(|h| h.metric == metric && h.group == group)
            .map(|h| &h.histogram)
    }

    /// Mean combined loss ratio over repetitions.
    pub fn mean_loss(&self) -> Option<f64> {
        self.summary("loss", COMBINED).map(|s| s.mean)
    }

    /// Combined loss ratio of each repetition.
    pub fn repetition_losses(&self) -> Vec<f64> {
        let mut per_rep = vec![GroupSample::default(); self.provenance.repetitions as usize];
        for r in &self.records {
            per_rep[r.repetition as usize].add(r);
        }
        per_rep.iter().filter_map(GroupSample::loss).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub result: ExperimentResult,
}

/// One experiment per value, all sharing the base seed.
pub fn sweep(
    scenario: &Validated,
    parameter: SweepParameter,
    values: &[f64],
    options: ExperimentOptions,
) -> Result<Vec<SweepPoint>, ScenarioError> {
    if values.is_empty() {
        return Err(ScenarioError::Parse("sweep needs at least one value".into()));
    }
    values
        .iter()
        .map(|&value| {
            let v = scenario.config.with_parameter(parameter, value).validate()?;
            Ok(SweepPoint {
                value,
                result: run_experiment(&v, options)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MosAtDelay {
    pub network_delay_ms: f64,
    pub total_delay_ms: f64,
    /// One value per call (VoIP flow and repetition).
    pub values: Vec<f64>,
    pub mean: Option<f64>,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MosReport {
    pub calls: usize,
    pub per_delay: Vec<MosAtDelay>,
}

/// MOS of every call for each network delay, from the call's own loss.
pub fn mos_report(result: &ExperimentResult, network_delays_ms: &[f64]) -> Result<MosReport, ScenarioError> {
    if !result.config.flows.iter().any(|f| f.service_name() == VOIP_SERVICE) {
        return Err(ScenarioError::NoVoip);
    }
    let losses: Vec<f64> = result
        .records
        .iter()
        .filter(|r| r.service == VOIP_SERVICE)
        .filter_map(|r| r.loss)
        .collect();
    let per_delay = network_delays_ms
        .iter()
        .map(|&d| {
            let total = qos::total_delay(d);
            let values: Vec<f64> = losses
                .iter()
                .map(|&loss| {
                    qos::mos(EModelInput {
                        delay_total: total,
                        loss,
                    })
                })
                .collect();
            MosAtDelay {
                network_delay_ms: d,
                total_delay_ms: total,
                mean: metrics::mean(&values),
                histogram: metrics::histogram(&values, result.config.run.mos_bin_width),
                values,
            }
        })
        .collect();
    Ok(MosReport {
        calls: losses.len(),
        per_delay,
    })
}
