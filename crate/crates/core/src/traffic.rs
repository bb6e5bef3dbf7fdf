//! Packet sources: constant bit rate (VoIP), IP camera bursts, trace replay
//! and a synthetic frame-based video source.
//!
//! Generators emit generation instants only. Packets sharing an instant are a
//! back-to-back burst; the engine serializes them on the flow's input link.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::SimTime;
use crate::units;

/// Lower truncation point of the inter-burst gap distribution, seconds.
pub const MIN_INTER_BURST: f64 = 1e-3;
pub const DEFAULT_CLASS: u8 = 1;
pub const DEFAULT_FRAME_INTERVAL: f64 = 1.0 / 30.0;
pub const DEFAULT_MAX_PACKET: u32 = 1500;

#[derive(Debug, Error)]
pub enum TrafficError {
    #[error("line {line}: {message}")]
    TraceParse { line: usize, message: String },
    #[error("cannot read trace {path}: {source}")]
    TraceIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no camera burst size tabulated for {width}x{height} at {compression_kb} KB")]
    UnknownCompression {
        width: u32,
        height: u32,
        compression_kb: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenPacket {
    pub at: SimTime,
    pub size: u32,
    pub class: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbrParams {
    #[serde(with = "units::bytes")]
    pub packet_size: u32,
    #[serde(with = "units::seconds")]
    pub interval: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurstParams {
    pub packets_per_burst: u32,
    #[serde(with = "units::bytes")]
    pub packet_size: u32,
    #[serde(with = "units::seconds")]
    pub inter_burst_mean: f64,
    #[serde(with = "units::seconds", default)]
    pub inter_burst_stddev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceParams {
    pub path: PathBuf,
    /// Multiplies every recorded timestamp.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticVideoParams {
    #[serde(with = "units::rate")]
    pub mean_bitrate: f64,
    #[serde(with = "units::seconds", default = "default_frame_interval")]
    pub frame_interval: f64,
    /// Coefficient of variation of the lognormal frame size.
    #[serde(default)]
    pub frame_size_cv: f64,
    #[serde(with = "units::bytes", default = "default_max_packet")]
    pub max_packet_size: u32,
}

fn default_frame_interval() -> f64 {
    DEFAULT_FRAME_INTERVAL
}

fn default_max_packet() -> u32 {
    DEFAULT_MAX_PACKET
}

fn default_class() -> u8 {
    DEFAULT_CLASS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    Cbr(CbrParams),
    Burst(BurstParams),
    Trace(TraceParams),
    SyntheticVideo(SyntheticVideoParams),
}

impl Source {
    pub fn kind(&self) -> &'static str {
        match self {
            Source::Cbr(_) => "cbr",
            Source::Burst(_) => "burst",
            Source::Trace(_) => "trace",
            Source::SyntheticVideo(_) => "synthetic_video",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub id: u32,
    /// Service label used to group flows in reports (`voip`, `camera`, ...).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service: Option<String>,
    #[serde(default = "default_class")]
    pub class: u8,
    /// Fixed start instant; drawn from the scenario's window when absent.
    #[serde(
        default,
        with = "units::opt_seconds",
        skip_serializing_if = "Option::is_none"
    )]
    pub start_offset: Option<f64>,
    #[serde(flatten)]
    pub source: Source,
}

impl FlowSpec {
    pub fn service_name(&self) -> &str {
        self.service.as_deref().unwrap_or(self.source.kind())
    }

    /// Long-run mean offered rate in bit/s. Trace sources need their trace.
    pub fn mean_rate(&self, trace: Option<&Trace>) -> Option<f64> {
        match &self.source {
            Source::Cbr(p) => Some(p.packet_size as f64 * 8.0 / p.interval),
            Source::Burst(p) => {
                Some(p.packets_per_burst as f64 * p.packet_size as f64 * 8.0 / p.inter_burst_mean)
            }
            Source::SyntheticVideo(p) => Some(p.mean_bitrate),
            Source::Trace(p) => {
                let scale = p.time_scale.unwrap_or(1.0);
                trace.and_then(Trace::mean_rate).map(|r| r / scale)
            }
        }
    }

    /// Invariant violations as `(field, message)`.
    pub fn check(&self) -> Vec<(&'static str, String)> {
        let mut issues = Vec::new();
        let mut positive = |field: &'static str, v: f64| {
            if !(v > 0.0 && v.is_finite()) {
                issues.push((field, format!("must be positive, got {v}")));
            }
        };
        match &self.source {
            Source::Cbr(p) => {
                positive("packet_size", p.packet_size as f64);
                positive("interval", p.interval);
            }
            Source::Burst(p) => {
                positive("packets_per_burst", p.packets_per_burst as f64);
                positive("packet_size", p.packet_size as f64);
                positive("inter_burst_mean", p.inter_burst_mean);
                if !(p.inter_burst_stddev >= 0.0) {
                    issues.push(("inter_burst_stddev", "must be nonnegative".into()));
                }
            }
            Source::Trace(p) => {
                if let Some(s) = p.time_scale {
                    positive("time_scale", s);
                }
            }
            Source::SyntheticVideo(p) => {
                positive("mean_bitrate", p.mean_bitrate);
                positive("frame_interval", p.frame_interval);
                positive("max_packet_size", p.max_packet_size as f64);
                if !(p.frame_size_cv >= 0.0) {
                    issues.push(("frame_size_cv", "must be nonnegative".into()));
                }
            }
        }
        if self.class > 2 {
            issues.push(("class", format!("must be 0, 1 or 2, got {}", self.class)));
        }
        if let Some(off) = self.start_offset {
            if !(off >= 0.0) {
                issues.push(("start_offset", "must be nonnegative".into()));
            }
        }
        issues
    }

    /// Packets generated in `[start_offset, horizon)`.
    pub fn generate<R: Rng>(
        &self,
        horizon: SimTime,
        start_offset: SimTime,
        rng: &mut R,
        trace: Option<&Trace>,
    ) -> Vec<GenPacket> {
        if start_offset >= horizon {
            return Vec::new();
        }
        let duration = horizon - start_offset;
        match &self.source {
            Source::Cbr(p) => gen_cbr(p, duration, start_offset, self.class),
            Source::Burst(p) => gen_burst(p, duration, start_offset, self.class, rng),
            Source::SyntheticVideo(p) => {
                gen_synthetic_video(p, duration, start_offset, self.class, rng)
            }
            Source::Trace(p) => match trace {
                Some(t) => gen_trace(t, p.time_scale, duration, start_offset, self.class),
                None => Vec::new(),
            },
        }
    }
}

fn nonzero_nanos(secs: f64) -> u64 {
    SimTime::from_secs_f64(secs).as_nanos().max(1)
}

/// Constant-size packets every `interval`, `k * interval < duration`.
pub fn gen_cbr(p: &CbrParams, duration: SimTime, start_offset: SimTime, class: u8) -> Vec<GenPacket> {
    let step = nonzero_nanos(p.interval);
    (0..)
        .map(|k| k * step)
        .take_while(|&t| t < duration.as_nanos())
        .map(|t| GenPacket {
            at: start_offset + SimTime(t),
            size: p.packet_size,
            class,
        })
        .collect()
}

/// Inter-burst gap in seconds: normal(mean, stddev) resampled until at least
/// [`MIN_INTER_BURST`].
pub fn sample_inter_burst<R: Rng>(p: &BurstParams, rng: &mut R) -> f64 {
    if p.inter_burst_stddev == 0.0 {
        return p.inter_burst_mean.max(MIN_INTER_BURST);
    }
    let normal = Normal::new(p.inter_burst_mean, p.inter_burst_stddev)
        .expect("validated burst parameters");
    loop {
        let gap = normal.sample(rng);
        if gap >= MIN_INTER_BURST {
            return gap;
        }
    }
}

/// Bursts of `packets_per_burst` equal packets; the first at `start_offset`.
pub fn gen_burst<R: Rng>(
    p: &BurstParams,
    duration: SimTime,
    start_offset: SimTime,
    class: u8,
    rng: &mut R,
) -> Vec<GenPacket> {
    let mut out = Vec::new();
    let mut t = 0u64;
    while t < duration.as_nanos() {
        let at = start_offset + SimTime(t);
        out.extend((0..p.packets_per_burst).map(|_| GenPacket {
            at,
            size: p.packet_size,
            class,
        }));
        t += nonzero_nanos(sample_inter_burst(p, rng));
    }
    out
}

/// Splits a frame into full-size packets plus a remainder packet.
pub fn fragment(frame_bytes: u32, max_packet_size: u32) -> impl Iterator<Item = u32> {
    let full = frame_bytes / max_packet_size;
    let rem = frame_bytes % max_packet_size;
    std::iter::repeat_n(max_packet_size, full as usize).chain((rem > 0).then_some(rem))
}

/// One mini-burst per frame interval; lognormal frame sizes with the mean
/// implied by the bitrate.
pub fn gen_synthetic_video<R: Rng>(
    p: &SyntheticVideoParams,
    duration: SimTime,
    start_offset: SimTime,
    class: u8,
    rng: &mut R,
) -> Vec<GenPacket> {
    let mean_bytes = p.mean_bitrate * p.frame_interval / 8.0;
    let dist = (p.frame_size_cv > 0.0).then(|| {
        let sigma2 = (1.0 + p.frame_size_cv * p.frame_size_cv).ln();
        LogNormal::new(mean_bytes.ln() - sigma2 / 2.0, sigma2.sqrt())
            .expect("validated video parameters")
    });
    let step = nonzero_nanos(p.frame_interval);
    let mut out = Vec::new();
    let mut t = 0u64;
    while t < duration.as_nanos() {
        let bytes = match &dist {
            Some(d) => d.sample(rng),
            None => mean_bytes,
        };
        let bytes = bytes.round().clamp(1.0, u32::MAX as f64) as u32;
        let at = start_offset + SimTime(t);
        out.extend(
            fragment(bytes, p.max_packet_size).map(|size| GenPacket { at, size, class }),
        );
        t += step;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// Relative timestamp.
    pub at: SimTime,
    pub size: u32,
    pub class: Option<u8>,
}

/// Recorded packet sequence: `<seconds> <bytes> [<class>]` per line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn parse(text: &str) -> Result<Self, TrafficError> {
        let mut records: Vec<TraceRecord> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let err = |message: String| TrafficError::TraceParse { line, message };
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let fields: Vec<&str> = content.split_whitespace().collect();
            if !(2..=3).contains(&fields.len()) {
                return Err(err(format!("expected 2 or 3 fields, found {}", fields.len())));
            }
            let secs: f64 = fields[0]
                .parse()
                .map_err(|_| err(format!("bad timestamp {:?}", fields[0])))?;
            if !(secs >= 0.0 && secs.is_finite()) {
                return Err(err(format!("timestamp must be a nonnegative number, got {secs}")));
            }
            let size: u32 = fields[1]
                .parse()
                .map_err(|_| err(format!("bad size {:?}", fields[1])))?;
            if size == 0 {
                return Err(err("size must be at least 1 byte".into()));
            }
            let class = match fields.get(2) {
                Some(c) => match c.parse::<u8>() {
                    Ok(c @ 0..=2) => Some(c),
                    _ => return Err(err(format!("class must be 0, 1 or 2, got {c:?}"))),
                },
                None => None,
            };
            let at = SimTime::from_secs_f64(secs);
            if records.last().is_some_and(|prev| prev.at > at) {
                return Err(err("timestamps must be nondecreasing".into()));
            }
            records.push(TraceRecord { at, size, class });
        }
        Ok(Trace { records })
    }

    pub fn load(path: &Path) -> Result<Self, TrafficError> {
        let text = std::fs::read_to_string(path).map_err(|source| TrafficError::TraceIo {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Records a generated stream relative to `offset`.
    pub fn from_packets(packets: &[GenPacket], offset: SimTime) -> Self {
        Trace {
            records: packets
                .iter()
                .map(|p| TraceRecord {
                    at: p.at.saturating_sub(offset),
                    size: p.size,
                    class: Some(p.class),
                })
                .collect(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# seconds bytes [class]\n");
        for r in &self.records {
            let ns = r.at.as_nanos();
            let _ = write!(out, "{}.{:09} {}", ns / 1_000_000_000, ns % 1_000_000_000, r.size);
            if let Some(c) = r.class {
                let _ = write!(out, " {c}");
            }
            out.push('\n');
        }
        out
    }

    /// Loop length: last timestamp plus one mean inter-packet gap. Absent when
    /// the trace spans no time and so cannot be repeated.
    pub fn period(&self) -> Option<SimTime> {
        let first = self.records.first()?.at;
        let last = self.records.last()?.at;
        let n = self.records.len() as u64;
        let span = (last - first).as_nanos();
        (n >= 2 && span > 0).then(|| last + SimTime(span / (n - 1)))
    }

    pub fn total_bytes(&self) -> u64 {
        self.records.iter().map(|r| r.size as u64).sum()
    }

    pub fn mean_rate(&self) -> Option<f64> {
        let period = self.period()?;
        Some(self.total_bytes() as f64 * 8.0 / period.as_secs_f64())
    }
}

/// Replays `trace` from `start_offset`, looping it until `duration`.
pub fn gen_trace(
    trace: &Trace,
    time_scale: Option<f64>,
    duration: SimTime,
    start_offset: SimTime,
    default_class: u8,
) -> Vec<GenPacket> {
    let scale = time_scale.unwrap_or(1.0);
    let scaled = |t: SimTime| SimTime::from_secs_f64(t.as_secs_f64() * scale);
    let period = trace.period().map(|p| if scale == 1.0 { p } else { scaled(p) });
    let mut out = Vec::new();
    let mut base = SimTime::ZERO;
    'outer: loop {
        for r in &trace.records {
            let rel = base + if scale == 1.0 { r.at } else { scaled(r.at) };
            if rel >= duration {
                break 'outer;
            }
            out.push(GenPacket {
                at: start_offset + rel,
                size: r.size,
                class: r.class.unwrap_or(default_class),
            });
        }
        match period {
            Some(p) if p > SimTime::ZERO => base = base + p,
            _ => break,
        }
    }
    out
}

/// Packets per burst observed for an AXIS 2120 camera at 1 Mbps.
/// An earlier survey table lists 25 for 704x576 at 50 KB; the measured 41 is used here.
const CAMERA_BURSTS: &[((u32, u32), u32, u32)] = &[
    ((704, 576), 50, 41),
    ((704, 576), 32, 26),
    ((704, 576), 16, 10),
    ((352, 288), 13, 9),
    ((352, 288), 4, 3),
];

pub fn burst_size_for_compression(
    width: u32,
    height: u32,
    compression_kb: u32,
) -> Result<u32, TrafficError> {
    CAMERA_BURSTS
        .iter()
        .find(|(res, kb, _)| *res == (width, height) && *kb == compression_kb)
        .map(|&(_, _, packets)| packets)
        .ok_or(TrafficError::UnknownCompression {
            width,
            height,
            compression_kb,
        })
}
