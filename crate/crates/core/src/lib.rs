//! Discrete-event simulator of an access-link bottleneck router.
//!
//! Traffic from the internal network arrives at rate `r_in`, waits in a single
//! buffer with a pluggable discipline, and leaves over the access link at rate
//! `r_out`. Around the engine sit traffic generators for CBR voice, bursty IP
//! camera and video sources, per-flow QoS metrics, closed-form QoS calculators
//! and a repetition harness that writes CSV results.

// `!(x > 0.0)` is how validation rejects NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod buffers;
pub mod metrics;
pub mod qos;
pub mod rng;
pub mod scenario;
pub mod sim;
pub mod traffic;
pub mod units;

pub use buffers::{BufferPolicy, CapacityMode, Discipline, DropReason, QueueState, RedParams};
pub use metrics::{FlowStats, Histogram, Jitter, RepetitionSummary};
pub use scenario::{
    ExperimentOptions, ExperimentResult, ScenarioConfig, SweepParameter, Validated,
};
pub use sim::{LinkConfig, Packet, SimError, SimResult, SimTime};
pub use traffic::{FlowSpec, GenPacket, Source};
