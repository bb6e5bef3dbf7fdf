//! Event engine for one bottleneck: per-flow input links at `r_in`, one
//! buffer, one access link at `r_out`.

mod engine;
mod event;

use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use engine::{simulate, EngineInput, FlowInput, LogEntry, LogKind, Window};
pub use event::{EventQueue, TieRank};

use crate::scenario::Validated;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("event scheduled at {at} which is before the clock ({now})")]
    ScheduleInPast { at: SimTime, now: SimTime },
    #[error("packet size must be at least one byte")]
    ZeroSizePacket,
    #[error("rate must be positive, got {0} bit/s")]
    NonPositiveRate(f64),
    #[error("flow {flow_id}: generation instants are not nondecreasing")]
    UnsortedFlow { flow_id: u32 },
}

/// Simulation clock in integer nanoseconds.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    /// Rounds to the nearest nanosecond. Negative inputs clamp to zero.
    pub fn from_secs_f64(secs: f64) -> Self {
        SimTime((secs * 1e9).round().max(0.0) as u64)
    }

    pub fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 * 1e-9
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;

    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub for SimTime {
    type Output = SimTime;

    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.9}s", self.as_secs_f64())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Packet {
    /// Sequence number within the flow.
    pub id: u64,
    pub flow_id: u32,
    pub size: u32,
    /// Priority class 0 (highest) to 2.
    pub class: u8,
    pub created_at: SimTime,
    /// Instant the last bit reached the router.
    pub enqueued_at: Option<SimTime>,
    /// Instant the last bit left on the access link.
    pub departed_at: Option<SimTime>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    /// Internal network rate in bit/s.
    #[serde(with = "crate::units::rate")]
    pub r_in: f64,
    /// Access link rate in bit/s.
    #[serde(with = "crate::units::rate")]
    pub r_out: f64,
}

impl LinkConfig {
    /// Rate at which the buffer fills while the input is saturated.
    pub fn fill_rate(&self) -> f64 {
        crate::qos::fill_rate(self.r_in, self.r_out)
    }
}

/// Time to clock `size` bytes onto a link of `rate` bit/s.
pub fn serialization_time(size: u32, rate: f64) -> Result<SimTime, SimError> {
    if size == 0 {
        return Err(SimError::ZeroSizePacket);
    }
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(SimError::NonPositiveRate(rate));
    }
    let ns = (size as f64 * 8.0 * 1e9 / rate).round();
    Ok(SimTime((ns as u64).max(1)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    /// One entry per flow, in declaration order.
    pub flows: Vec<crate::metrics::FlowStats>,
    pub log: Option<Vec<LogEntry>>,
    pub events_processed: u64,
}

/// Runs one repetition of a prepared scenario.
pub fn run(scenario: &Validated, repetition: u32) -> Result<SimResult, SimError> {
    scenario.simulate(repetition, false)
}
