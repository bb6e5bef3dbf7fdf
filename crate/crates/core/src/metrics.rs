//! Per-flow QoS measurement and repetition statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// RFC 3550 interarrival jitter gain.
pub const JITTER_GAIN: f64 = 1.0 / 16.0;
/// Default histogram bin width for loss, in percentage points.
pub const LOSS_BIN_WIDTH_PP: f64 = 0.5;
pub const MOS_BIN_WIDTH: f64 = 0.25;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowStats {
    pub flow_id: u32,
    pub sent: u64,
    pub delivered: u64,
    /// All drops; `dropped_full + dropped_red`.
    pub dropped: u64,
    pub dropped_full: u64,
    pub dropped_red: u64,
    /// Packets still in the router or on the input link when the run ended.
    pub in_flight: u64,
    /// One-way delays of delivered packets in delivery order, seconds.
    pub delay_samples: Vec<f64>,
}

impl FlowStats {
    pub fn new(flow_id: u32) -> Self {
        Self {
            flow_id,
            ..Default::default()
        }
    }

    /// `dropped / sent`, absent when nothing was sent.
    pub fn loss_ratio(&self) -> Option<f64> {
        loss_ratio(self.sent, self.dropped)
    }

    pub fn is_conserved(&self) -> bool {
        self.sent == self.delivered + self.dropped + self.in_flight
            && self.dropped == self.dropped_full + self.dropped_red
            && self.delay_samples.len() as u64 == self.delivered
    }

    pub fn mean_delay(&self) -> Option<f64> {
        mean(&self.delay_samples)
    }

    pub fn jitter(&self) -> Option<Jitter> {
        jitter(&self.delay_samples)
    }
}

pub fn loss_ratio(sent: u64, dropped: u64) -> Option<f64> {
    (sent > 0).then(|| dropped as f64 / sent as f64)
}

/// Loss over the union of several flows.
pub fn aggregate_loss<'a>(flows: impl IntoIterator<Item = &'a FlowStats>) -> Option<f64> {
    let (sent, dropped) = flows
        .into_iter()
        .fold((0, 0), |(s, d), f| (s + f.sent, d + f.dropped));
    loss_ratio(sent, dropped)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jitter {
    /// max(delay) - min(delay) over the session.
    pub max_variation: f64,
    /// Running mean of |delay difference| with gain 1/16.
    pub smoothed: f64,
}

pub fn jitter(delays: &[f64]) -> Option<Jitter> {
    if delays.len() < 2 {
        return None;
    }
    let (lo, hi) = delays
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &d| {
            (lo.min(d), hi.max(d))
        });
    let smoothed = delays
        .windows(2)
        .fold(0.0, |j, w| j + ((w[1] - w[0]).abs() - j) * JITTER_GAIN);
    Some(Jitter {
        max_variation: hi - lo,
        smoothed,
    })
}

pub fn mean(samples: &[f64]) -> Option<f64> {
    (!samples.is_empty()).then(|| samples.iter().sum::<f64>() / samples.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepetitionSummary {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for a single sample.
    pub stddev: f64,
    /// Student-t 95% half-width; absent for fewer than two samples.
    pub ci95_half_width: Option<f64>,
    pub n: usize,
}

/// Two-sided 97.5% Student-t quantile with `dof` degrees of freedom.
pub fn t_quantile_975(dof: usize) -> f64 {
    StudentsT::new(0.0, 1.0, dof as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975)
}

/// Mean, deviation and (for n >= 2) the 95% half-width.
pub fn summarize(samples: &[f64]) -> Option<RepetitionSummary> {
    let n = samples.len();
    let mean = mean(samples)?;
    if n < 2 {
        return Some(RepetitionSummary {
            mean,
            stddev: 0.0,
            ci95_half_width: None,
            n,
        });
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let stddev = var.sqrt();
    Some(RepetitionSummary {
        mean,
        stddev,
        ci95_half_width: Some(t_quantile_975(n - 1) * stddev / (n as f64).sqrt()),
        n,
    })
}

/// Summary with a confidence interval; absent when n < 2.
pub fn ci95(samples: &[f64]) -> Option<RepetitionSummary> {
    summarize(samples).filter(|s| s.ci95_half_width.is_some())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub fraction: f64,
}

/// Bins `[k*w, (k+1)*w)` spanning the observed range, empty bins included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    pub total: usize,
    pub bins: Vec<HistogramBin>,
}

impl Histogram {
    pub fn fraction_sum(&self) -> f64 {
        self.bins.iter().map(|b| b.fraction).sum()
    }

    pub fn mean(&self) -> Option<f64> {
        (self.total > 0).then(|| {
            self.bins
                .iter()
                .map(|b| (b.lo + b.hi) / 2.0 * b.count as f64)
                .sum::<f64>()
                / self.total as f64
        })
    }
}

pub fn histogram(values: &[f64], bin_width: f64) -> Histogram {
    assert!(bin_width > 0.0, "bin width must be positive");
    // the nudge keeps values like 0.3 / 0.1 = 2.999... in the right bin
    let bin_of = |v: f64| (v / bin_width + 1e-9).floor() as i64;
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for &v in values {
        *counts.entry(bin_of(v)).or_default() += 1;
    }
    let total = values.len();
    let bins = match (counts.keys().next(), counts.keys().next_back()) {
        (Some(&first), Some(&last)) => (first..=last)
            .map(|k| {
                let count = counts.get(&k).copied().unwrap_or(0);
                HistogramBin {
                    lo: k as f64 * bin_width,
                    hi: (k + 1) as f64 * bin_width,
                    count,
                    fraction: count as f64 / total as f64,
                }
            })
            .collect(),
        _ => Vec::new(),
    };
    Histogram {
        bin_width,
        total,
        bins,
    }
}
