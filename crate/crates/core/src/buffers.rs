//! Queue disciplines for the bottleneck buffer.
//!
//! Capacity counts queued packets only; the packet being transmitted on the
//! access link is held by the engine and does not occupy the buffer.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::SimRng;
use crate::sim::{Packet, SimTime};

pub const CLASS_COUNT: usize = 3;
pub const DEFAULT_RED_WEIGHT: f64 = 0.002;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discipline {
    DropTail,
    /// Three strict-priority FIFOs selected by packet class, 0 highest.
    FifoFast,
    Red,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapacityMode {
    #[default]
    Packets,
    /// IP packet bytes, no link-layer overhead.
    Bytes,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RedParams {
    pub min_th: f64,
    pub max_th: f64,
    pub max_p: f64,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

fn default_weight() -> f64 {
    DEFAULT_RED_WEIGHT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferPolicy {
    pub discipline: Discipline,
    #[serde(default)]
    pub capacity_mode: CapacityMode,
    /// Packets or bytes depending on `capacity_mode`.
    pub capacity: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub red: Option<RedParams>,
}

impl BufferPolicy {
    pub fn drop_tail(capacity_packets: u64) -> Self {
        Self {
            discipline: Discipline::DropTail,
            capacity_mode: CapacityMode::Packets,
            capacity: capacity_packets,
            red: None,
        }
    }

    /// Invariant violations as `(field, message)` pairs.
    pub fn check(&self) -> Vec<(&'static str, String)> {
        let mut issues = Vec::new();
        if self.capacity == 0 {
            issues.push(("capacity", "must be positive".to_string()));
        }
        match (self.discipline, &self.red) {
            (Discipline::Red, None) => issues.push(("red", "required when discipline = red".into())),
            (Discipline::Red, Some(p)) => {
                if !(p.min_th > 0.0 && p.min_th < p.max_th) {
                    issues.push(("red.min_th", "must satisfy 0 < min_th < max_th".into()));
                }
                if p.max_th > self.capacity as f64 {
                    issues.push(("red.max_th", "must not exceed capacity".into()));
                }
                if !(p.max_p > 0.0 && p.max_p <= 1.0) {
                    issues.push(("red.max_p", "must lie in (0, 1]".into()));
                }
                if !(p.weight > 0.0 && p.weight <= 1.0) {
                    issues.push(("red.weight", "must lie in (0, 1]".into()));
                }
            }
            (_, Some(_)) => issues.push(("red", "only allowed when discipline = red".into())),
            (_, None) => {}
        }
        issues
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Full,
    RedProbabilistic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rejected {
    pub packet: Packet,
    pub reason: DropReason,
}

/// RED drop probability for an average occupancy.
pub fn red_drop_probability(avg: f64, p: &RedParams) -> f64 {
    if avg < p.min_th {
        0.0
    } else if avg < p.max_th {
        p.max_p * (avg - p.min_th) / (p.max_th - p.min_th)
    } else {
        1.0
    }
}

/// Exponentially weighted moving average of the occupancy.
pub fn red_update_average(avg: f64, occupancy: f64, weight: f64) -> f64 {
    (1.0 - weight) * avg + weight * occupancy
}

#[derive(Debug, Clone)]
pub struct QueueState {
    policy: BufferPolicy,
    queues: [VecDeque<Packet>; CLASS_COUNT],
    packets: usize,
    bytes: u64,
    red_avg: f64,
    rng: Option<SimRng>,
}

impl QueueState {
    /// `rng` drives RED drop decisions and is only consulted for RED.
    pub fn new(policy: BufferPolicy, rng: SimRng) -> Self {
        let rng = (policy.discipline == Discipline::Red).then_some(rng);
        Self {
            policy,
            queues: Default::default(),
            packets: 0,
            bytes: 0,
            red_avg: 0.0,
            rng,
        }
    }

    pub fn policy(&self) -> &BufferPolicy {
        &self.policy
    }

    pub fn len(&self) -> usize {
        self.packets
    }

    pub fn is_empty(&self) -> bool {
        self.packets == 0
    }

    pub fn bytes(&self) -> u64 {
        self.bytes
    }

    pub fn red_average(&self) -> f64 {
        self.red_avg
    }

    /// Occupancy in the configured capacity unit.
    pub fn occupancy(&self) -> u64 {
        match self.policy.capacity_mode {
            CapacityMode::Packets => self.packets as u64,
            CapacityMode::Bytes => self.bytes,
        }
    }

    fn fits(&self, size: u32) -> bool {
        let extra = match self.policy.capacity_mode {
            CapacityMode::Packets => 1,
            CapacityMode::Bytes => size as u64,
        };
        self.occupancy() + extra <= self.policy.capacity
    }

    fn queue_index(&self, pkt: &Packet) -> usize {
        match self.policy.discipline {
            Discipline::FifoFast => (pkt.class as usize).min(CLASS_COUNT - 1),
            _ => 0,
        }
    }

    pub fn enqueue(&mut self, mut pkt: Packet, now: SimTime) -> Result<(), Rejected> {
        if let (Some(red), Some(rng)) = (self.policy.red, self.rng.as_mut()) {
            let occupancy = match self.policy.capacity_mode {
                CapacityMode::Packets => self.packets as f64,
                CapacityMode::Bytes => self.bytes as f64,
            };
            self.red_avg = red_update_average(self.red_avg, occupancy, red.weight);
            let p = red_drop_probability(self.red_avg, &red);
            let drop = p >= 1.0 || (p > 0.0 && rng.random::<f64>() < p);
            if drop && self.fits(pkt.size) {
                return Err(Rejected {
                    packet: pkt,
                    reason: DropReason::RedProbabilistic,
                });
            }
        }
        if !self.fits(pkt.size) {
            return Err(Rejected {
                packet: pkt,
                reason: DropReason::Full,
            });
        }
        if pkt.enqueued_at.is_none() {
            pkt.enqueued_at = Some(now);
        }
        self.packets += 1;
        self.bytes += pkt.size as u64;
        let idx = self.queue_index(&pkt);
        self.queues[idx].push_back(pkt);
        debug_assert!(self.occupancy() <= self.policy.capacity);
        Ok(())
    }

    pub fn dequeue(&mut self) -> Option<Packet> {
        let pkt = self.queues.iter_mut().find_map(|q| q.pop_front())?;
        self.packets -= 1;
        self.bytes -= pkt.size as u64;
        Some(pkt)
    }

    /// Queued packets, highest priority queue first.
    pub fn iter(&self) -> impl Iterator<Item = &Packet> {
        self.queues.iter().flatten()
    }
}
