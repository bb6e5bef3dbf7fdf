use serde::{Deserialize, Serialize};

use super::{serialization_time, EventQueue, LinkConfig, Packet, SimError, SimTime, TieRank};
use crate::buffers::{BufferPolicy, DropReason, QueueState, Rejected};
use crate::metrics::FlowStats;
use crate::rng::SimRng;
use crate::traffic::GenPacket;

/// Measurement window: packets created in `[start, end)` are counted, and the
/// run stops after the last event at or before `end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub start: SimTime,
    pub end: SimTime,
}

impl Window {
    fn contains(&self, t: SimTime) -> bool {
        t >= self.start && t < self.end
    }
}

#[derive(Debug, Clone)]
pub struct FlowInput {
    pub flow_id: u32,
    /// Sorted by generation instant.
    pub packets: Vec<GenPacket>,
}

pub struct EngineInput<'a> {
    pub link: LinkConfig,
    pub buffer: &'a BufferPolicy,
    pub flows: Vec<FlowInput>,
    pub window: Window,
    pub red_rng: SimRng,
    pub record_log: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogKind {
    /// Last bit reached the router.
    Arrive,
    Drop(DropReason),
    /// Transmission on the access link started.
    Transmit,
    Depart,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub time: SimTime,
    pub flow_id: u32,
    pub packet_id: u64,
    pub size: u32,
    pub kind: LogKind,
}

#[derive(Debug, Clone, Copy)]
enum Event {
    Arrival { flow: usize },
    Departure,
}

impl TieRank for Event {
    fn tie_rank(&self) -> u8 {
        match self {
            Event::Arrival { .. } => 0,
            Event::Departure => 1,
        }
    }
}

struct FlowState {
    input: FlowInput,
    /// Index of the packet whose arrival is scheduled (or would be next).
    cursor: usize,
    input_free_at: SimTime,
}

struct Engine<'a> {
    link: LinkConfig,
    window: Window,
    queue: EventQueue<Event>,
    buffer: QueueState,
    flows: Vec<FlowState>,
    stats: Vec<FlowStats>,
    in_service: Option<Packet>,
    log: Option<Vec<LogEntry>>,
    flow_index: &'a dyn Fn(u32) -> usize,
}

impl Engine<'_> {
    fn record(&mut self, time: SimTime, pkt: &Packet, kind: LogKind) {
        if let Some(log) = self.log.as_mut() {
            log.push(LogEntry {
                time,
                flow_id: pkt.flow_id,
                packet_id: pkt.id,
                size: pkt.size,
                kind,
            });
        }
    }

    fn schedule_next_arrival(&mut self, flow: usize) -> Result<(), SimError> {
        let state = &mut self.flows[flow];
        let Some(gen) = state.input.packets.get(state.cursor) else {
            return Ok(());
        };
        let start = gen.at.max(state.input_free_at);
        let arrive = start + serialization_time(gen.size, self.link.r_in)?;
        state.input_free_at = arrive;
        self.queue.schedule(arrive, Event::Arrival { flow })
    }

    fn start_service(&mut self, now: SimTime, mut pkt: Packet) -> Result<(), SimError> {
        let done = now + serialization_time(pkt.size, self.link.r_out)?;
        pkt.departed_at = Some(done);
        self.record(now, &pkt, LogKind::Transmit);
        self.in_service = Some(pkt);
        self.queue.schedule(done, Event::Departure)
    }

    fn on_arrival(&mut self, now: SimTime, flow: usize) -> Result<(), SimError> {
        let state = &mut self.flows[flow];
        let idx = state.cursor;
        let gen = state.input.packets[idx];
        state.cursor += 1;
        let pkt = Packet {
            id: idx as u64,
            flow_id: state.input.flow_id,
            size: gen.size,
            class: gen.class,
            created_at: gen.at,
            enqueued_at: Some(now),
            departed_at: None,
        };
        self.schedule_next_arrival(flow)?;
        self.record(now, &pkt, LogKind::Arrive);

        if self.in_service.is_none() {
            debug_assert!(self.buffer.is_empty());
            return self.start_service(now, pkt);
        }
        if let Err(Rejected { packet, reason }) = self.buffer.enqueue(pkt, now) {
            self.record(now, &packet, LogKind::Drop(reason));
            if self.window.contains(packet.created_at) {
                let s = &mut self.stats[flow];
                s.dropped += 1;
                match reason {
                    DropReason::Full => s.dropped_full += 1,
                    DropReason::RedProbabilistic => s.dropped_red += 1,
                }
            }
        }
        Ok(())
    }

    fn on_departure(&mut self, now: SimTime) -> Result<(), SimError> {
        let pkt = self.in_service.take().expect("departure without a packet in service");
        debug_assert_eq!(pkt.departed_at, Some(now));
        self.record(now, &pkt, LogKind::Depart);
        if self.window.contains(pkt.created_at) {
            let s = &mut self.stats[(self.flow_index)(pkt.flow_id)];
            s.delivered += 1;
            s.delay_samples.push((now - pkt.created_at).as_secs_f64());
        }
        if let Some(next) = self.buffer.dequeue() {
            self.start_service(now, next)?;
        }
        Ok(())
    }
}

/// Runs the event loop to the end of the window and returns per-flow stats in
/// input order.
pub fn simulate(input: EngineInput<'_>) -> Result<super::SimResult, SimError> {
    let EngineInput {
        link,
        buffer,
        flows,
        window,
        red_rng,
        record_log,
    } = input;
    for f in &flows {
        if f.packets.windows(2).any(|w| w[0].at > w[1].at) {
            return Err(SimError::UnsortedFlow { flow_id: f.flow_id });
        }
        if f.packets.iter().any(|p| p.size == 0) {
            return Err(SimError::ZeroSizePacket);
        }
    }
    serialization_time(1, link.r_in)?;
    serialization_time(1, link.r_out)?;

    let ids: Vec<u32> = flows.iter().map(|f| f.flow_id).collect();
    let lookup = |id: u32| ids.iter().position(|&x| x == id).expect("known flow");
    let stats = flows
        .iter()
        .map(|f| FlowStats {
            sent: f.packets.iter().filter(|p| window.contains(p.at)).count() as u64,
            ..FlowStats::new(f.flow_id)
        })
        .collect();
    let mut engine = Engine {
        link,
        window,
        queue: EventQueue::new(),
        buffer: QueueState::new(buffer.clone(), red_rng),
        flows: flows
            .into_iter()
            .map(|input| FlowState {
                input,
                cursor: 0,
                input_free_at: SimTime::ZERO,
            })
            .collect(),
        stats,
        in_service: None,
        log: record_log.then(Vec::new),
        flow_index: &lookup,
    };

    for flow in 0..engine.flows.len() {
        engine.schedule_next_arrival(flow)?;
    }
    let mut events = 0u64;
    while engine.queue.peek_time().is_some_and(|t| t <= window.end) {
        let (now, event) = engine.queue.pop().expect("peeked");
        match event {
            Event::Arrival { flow } => engine.on_arrival(now, flow)?,
            Event::Departure => engine.on_departure(now)?,
        }
        debug_assert!(engine.in_service.is_some() || engine.buffer.is_empty());
        events += 1;
    }

    // whatever was counted as sent but neither delivered nor dropped is still
    // in the router or has not reached it yet
    let mut stats = engine.stats;
    let resident = engine.buffer.iter().chain(engine.in_service.as_ref());
    for pkt in resident.filter(|p| window.contains(p.created_at)) {
        stats[lookup(pkt.flow_id)].in_flight += 1;
    }
    for (s, f) in stats.iter_mut().zip(&engine.flows) {
        s.in_flight += f.input.packets[f.cursor..]
            .iter()
            .filter(|p| window.contains(p.at))
            .count() as u64;
    }
    Ok(super::SimResult {
        flows: stats,
        log: engine.log,
        events_processed: events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::buffers::{CapacityMode, Discipline, RedParams};
    use crate::rng::{stream, Purpose, ROUTER_STREAM};
    use crate::traffic::{gen_cbr, CbrParams};

    fn burst(flow_id: u32, n: usize, at: SimTime, size: u32) -> FlowInput {
        FlowInput {
            flow_id,
            packets: vec![GenPacket { at, size, class: 1 }; n],
        }
    }

    fn run(
        link: LinkConfig,
        buffer: &BufferPolicy,
        flows: Vec<FlowInput>,
        end: SimTime,
    ) -> super::super::SimResult {
        simulate(EngineInput {
            link,
            buffer,
            flows,
            window: Window {
                start: SimTime::ZERO,
                end,
            },
            red_rng: stream(1, 0, ROUTER_STREAM, Purpose::Red),
            record_log: true,
        })
        .unwrap()
    }

    #[test]
    fn burst_overflow_hand_trace() {
        // 20 packets back-to-back at 1 Gbps into a 1 Mbps link with 15 slots.
        // t_in = 12 us, t_out = 12 ms, so no departure happens during the burst:
        // packet 0 goes straight to the link, 1..=15 fill the buffer and
        // 16..=19 are dropped.
        let link = LinkConfig {
            r_in: 1e9,
            r_out: 1e6,
        };
        let res = run(
            link,
            &BufferPolicy::drop_tail(15),
            vec![burst(1, 20, SimTime::ZERO, 1500)],
            SimTime::from_secs_f64(10.0),
        );
        let s = &res.flows[0];
        assert_eq!(s.dropped, 4);
        assert_eq!(s.delivered, 16);
        assert!(s.is_conserved());
        let log = res.log.unwrap();
        let dropped: Vec<u64> = log
            .iter()
            .filter(|e| matches!(e.kind, LogKind::Drop(_)))
            .map(|e| e.packet_id)
            .collect();
        assert_eq!(dropped, [16, 17, 18, 19]);
        // arrivals every 12 us, the first transmission starts on arrival
        let first = log.iter().find(|e| e.kind == LogKind::Transmit).unwrap();
        assert_eq!(first.time, SimTime(12_000));
        let last_drop = log.iter().rev().find(|e| matches!(e.kind, LogKind::Drop(_))).unwrap();
        assert_eq!(last_drop.time, SimTime(20 * 12_000));
    }

    #[test]
    fn burst_overflow_when_service_slot_counts() {
        // 14 slots plus the one on the wire reproduce the idealized count
        let link = LinkConfig {
            r_in: 1e9,
            r_out: 1e6,
        };
        let res = run(
            link,
            &BufferPolicy::drop_tail(14),
            vec![burst(1, 20, SimTime::ZERO, 1500)],
            SimTime::from_secs_f64(10.0),
        );
        assert_eq!(res.flows[0].dropped, 5);
    }

    #[test]
    fn underload_has_no_drops() {
        let p = CbrParams {
            packet_size: 60,
            interval: 0.020,
        };
        let flow = FlowInput {
            flow_id: 7,
            packets: gen_cbr(&p, SimTime::from_secs_f64(10.0), SimTime::ZERO, 1),
        };
        let res = run(
            LinkConfig {
                r_in: 100e6,
                r_out: 5e6,
            },
            &BufferPolicy::drop_tail(40),
            vec![flow],
            SimTime::from_secs_f64(10.0),
        );
        let s = &res.flows[0];
        assert_eq!(s.dropped, 0);
        assert_eq!(s.sent, 500);
        assert!(s.is_conserved());
        // every delay is exactly input + output serialization
        let expected = (60.0 * 8.0 / 100e6) + (60.0 * 8.0 / 5e6);
        assert!(s.delay_samples.iter().all(|d| (d - expected).abs() < 1e-9));
    }

    #[test]
    fn arrival_beats_departure_on_ties() {
        // 125 B at 1 Mbps takes 1 ms on either link. Flow 1 is on the wire
        // during [1, 2) ms and flow 2 arrives at exactly 2 ms. With no waiting
        // room the arrival sees a busy link and is dropped.
        let link = LinkConfig {
            r_in: 1e6,
            r_out: 1e6,
        };
        let flows = vec![burst(1, 1, SimTime::ZERO, 125), burst(2, 1, SimTime(1_000_000), 125)];
        let policy = BufferPolicy::drop_tail(0);
        let res = run(link, &policy, flows, SimTime::from_secs_f64(1.0));
        assert_eq!(res.flows[0].delivered, 1);
        assert_eq!(res.flows[1].dropped, 1);
        let at_2ms: Vec<LogKind> = res
            .log
            .unwrap()
            .iter()
            .filter(|e| e.time == SimTime(2_000_000))
            .map(|e| e.kind)
            .collect();
        assert_eq!(
            at_2ms,
            [LogKind::Arrive, LogKind::Drop(DropReason::Full), LogKind::Depart]
        );
    }

    #[test]
    fn resident_packets_are_in_flight() {
        let link = LinkConfig {
            r_in: 1e9,
            r_out: 1e6,
        };
        // 10 packets need 120 ms on the access link; stop after 50 ms
        let res = run(
            link,
            &BufferPolicy::drop_tail(100),
            vec![burst(1, 10, SimTime::ZERO, 1500)],
            SimTime::from_secs_f64(0.05),
        );
        let s = &res.flows[0];
        assert_eq!(s.delivered, 4);
        assert_eq!(s.in_flight, 6);
        assert!(s.is_conserved());
    }

    #[test]
    fn packets_outside_window_are_not_counted() {
        let link = LinkConfig {
            r_in: 1e9,
            r_out: 1e9,
        };
        let flow = FlowInput {
            flow_id: 1,
            packets: (0..10)
                .map(|i| GenPacket {
                    at: SimTime(i * 1_000_000),
                    size: 100,
                    class: 1,
                })
                .collect(),
        };
        let res = simulate(EngineInput {
            link,
            buffer: &BufferPolicy::drop_tail(10),
            flows: vec![flow],
            window: Window {
                start: SimTime(3_000_000),
                end: SimTime(7_000_000),
            },
            red_rng: stream(1, 0, ROUTER_STREAM, Purpose::Red),
            record_log: false,
        })
        .unwrap();
        assert_eq!(res.flows[0].sent, 4);
        assert_eq!(res.flows[0].delivered, 4);
        assert!(res.flows[0].is_conserved());
    }

    #[test]
    fn rejects_unsorted_input() {
        let flow = FlowInput {
            flow_id: 4,
            packets: vec![
                GenPacket {
                    at: SimTime(5),
                    size: 1,
                    class: 1,
                },
                GenPacket {
                    at: SimTime(1),
                    size: 1,
                    class: 1,
                },
            ],
        };
        let err = simulate(EngineInput {
            link: LinkConfig {
                r_in: 1e6,
                r_out: 1e6,
            },
            buffer: &BufferPolicy::drop_tail(1),
            flows: vec![flow],
            window: Window {
                start: SimTime::ZERO,
                end: SimTime(100),
            },
            red_rng: stream(1, 0, ROUTER_STREAM, Purpose::Red),
            record_log: false,
        })
        .unwrap_err();
        assert_eq!(err, SimError::UnsortedFlow { flow_id: 4 });
    }

    #[test]
    fn red_degenerates_to_drop_tail() {
        let link = LinkConfig {
            r_in: 100e6,
            r_out: 5e6,
        };
        let flows = || {
            (0..4)
                .map(|i| FlowInput {
                    flow_id: i,
                    packets: (0..200u64)
                        .flat_map(|b| {
                            let at = SimTime(b * 97_000_000 + i as u64 * 13_000_000);
                            std::iter::repeat_n(GenPacket { at, size: 1500, class: 1 }, 26)
                        })
                        .collect(),
                })
                .collect::<Vec<_>>()
        };
        let end = SimTime::from_secs_f64(20.0);
        let tail = run(link, &BufferPolicy::drop_tail(30), flows(), end);
        let red = BufferPolicy {
            discipline: Discipline::Red,
            capacity_mode: CapacityMode::Packets,
            capacity: 30,
            red: Some(RedParams {
                min_th: 30.0 - 1e-6,
                max_th: 30.0,
                max_p: 1.0,
                weight: 1.0,
            }),
        };
        let red = run(link, &red, flows(), end);
        let drops = |r: &super::super::SimResult| r.flows.iter().map(|f| f.dropped).collect::<Vec<_>>();
        assert!(drops(&tail).iter().sum::<u64>() > 0);
        assert_eq!(drops(&tail), drops(&red));
    }

    #[test]
    fn fifo_fast_prioritizes_class_zero() {
        let link = LinkConfig {
            r_in: 1e9,
            r_out: 1e6,
        };
        let mk = |flow_id, class| FlowInput {
            flow_id,
            packets: vec![GenPacket { at: SimTime::ZERO, size: 1000, class }; 5],
        };
        let policy = BufferPolicy {
            discipline: Discipline::FifoFast,
            ..BufferPolicy::drop_tail(20)
        };
        let res = run(link, &policy, vec![mk(2, 2), mk(1, 1), mk(0, 0)], SimTime::from_secs_f64(1.0));
        let departs: Vec<u32> = res
            .log
            .unwrap()
            .iter()
            .filter(|e| e.kind == LogKind::Depart)
            .map(|e| e.flow_id)
            .collect();
        // the first arrival (class 2) goes straight to the idle link
        assert_eq!(departs[0], 2);
        assert_eq!(&departs[1..6], &[0; 5]);
        assert_eq!(&departs[6..11], &[1; 5]);
        assert_eq!(&departs[11..], &[2; 4]);
    }
}
