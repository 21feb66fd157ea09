use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use rand::Rng;

use super::aodv::{
    aodv_handle, Action, AodvInput, AodvNodeState, ControlMsg, DataPacket, DATA_TTL,
};
use super::channel::{airtime, channel_deliver, in_range, Pos, Reception, Transmission};
use super::metrics::{compute_metrics, FlowMetrics, MetricsReport};
use super::positions::TraceIndex;
use super::{CbrFlowConfig, Disposition, NetError, PacketRecord, RadioParams};
use crate::mobility::{MobilityTrace, VehicleId};
use crate::rng::{self, RngStream};
use crate::road::quantize;

/// Interface queue length per node, in frames.
const QUEUE_CAPACITY: usize = 64;
/// Unicast retransmissions before the link is declared broken.
const MAC_RETRIES: u32 = 2;

/// Send times of a constant-bit-rate flow: `start + k·interval` for every
/// `k` that lands before `stop`.
pub fn cbr_generate(flow: &CbrFlowConfig) -> Vec<f64> {
    if flow.check().is_err() {
        return Vec::new();
    }
    let n = ((flow.stop - flow.start) / flow.interval - 1e-9)
        .ceil()
        .max(0.0) as usize;
    (0..n)
        .map(|k| quantize(flow.start + k as f64 * flow.interval))
        .collect()
}

/// Everything a run produced, for callers that need more than the totals.
#[derive(Debug, Clone)]
pub struct NetworkRun {
    pub report: MetricsReport,
    pub packets: Vec<PacketRecord>,
    /// Final routing state, indexed like the trace's sorted vehicle ids.
    pub nodes: Vec<AodvNodeState>,
}

/// Replays `flows` over `trace` and reports delivery statistics.
pub fn run_network_sim(
    trace: &MobilityTrace,
    flows: &[CbrFlowConfig],
    radio: &RadioParams,
    seed: u64,
) -> Result<MetricsReport, NetError> {
    simulate(trace, flows, radio, seed).map(|run| run.report)
}

pub fn simulate(
    trace: &MobilityTrace,
    flows: &[CbrFlowConfig],
    radio: &RadioParams,
    seed: u64,
) -> Result<NetworkRun, NetError> {
    radio.check()?;
    let index = TraceIndex::new(trace);
    let slot: BTreeMap<VehicleId, usize> = index
        .vehicles()
        .iter()
        .enumerate()
        .map(|(i, v)| (*v, i))
        .collect();
    for (i, f) in flows.iter().enumerate() {
        let bad = |msg: String| NetError::InvalidFlow { index: i, msg };
        f.check().map_err(bad)?;
        for v in [f.src, f.dst] {
            if !slot.contains_key(&v) {
                return Err(bad(format!("vehicle {} is not in the trace", v.0)));
            }
        }
    }

    let mut sim = Sim::new(&index, slot, radio, seed);
    for (flow, f) in flows.iter().enumerate() {
        let times: Vec<f64> = cbr_generate(f)
            .into_iter()
            .filter(|t| *t >= index.start() && *t <= index.end())
            .collect();
        if let Some(&t) = times.first() {
            sim.push(t, Event::Cbr { flow, k: 0 });
        }
        sim.cbr.push((f.clone(), times));
    }
    sim.run();

    let packets = sim.finish();
    let mut per_flow = Vec::new();
    for flow in 0..flows.len() {
        let own: Vec<PacketRecord> = packets.iter().filter(|p| p.flow == flow).cloned().collect();
        if let Ok(metrics) = compute_metrics(&own) {
            per_flow.push(FlowMetrics { flow, metrics });
        }
    }
    let totals = compute_metrics(&packets)?;
    assert_eq!(
        totals.sent,
        totals.delivered + totals.dropped + totals.in_flight,
        "packet conservation violated"
    );
    Ok(NetworkRun {
        report: MetricsReport {
            totals,
            per_flow,
            sweep_key: None,
        },
        packets,
        nodes: sim.stations.into_iter().map(|s| s.aodv).collect(),
    })
}

#[derive(Debug, Clone)]
enum Payload {
    Control(ControlMsg),
    Data(DataPacket),
}

#[derive(Debug, Clone)]
struct Frame {
    /// `None` broadcasts.
    next_hop: Option<VehicleId>,
    payload: Payload,
    retries: u32,
}

impl Frame {
    fn size(&self) -> u32 {
        match &self.payload {
            Payload::Control(m) => m.size(),
            Payload::Data(p) => p.size,
        }
    }
}

struct Station {
    aodv: AodvNodeState,
    queue: VecDeque<Frame>,
    transmitting: bool,
    attempt_pending: bool,
}

struct OnAir {
    node: usize,
    tx: Transmission,
    listeners: Vec<(VehicleId, Pos)>,
    frame: Frame,
}

#[derive(Debug, Clone, Copy)]
enum Event {
    Cbr {
        flow: usize,
        k: usize,
    },
    MacAttempt {
        node: usize,
    },
    TxEnd {
        id: u64,
    },
    Timeout {
        node: usize,
        dest: VehicleId,
        rreq_id: u32,
    },
}

struct Queued {
    time: f64,
    seq: u64,
    event: Event,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    // reversed: BinaryHeap pops the earliest event first
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.seq.cmp(&self.seq))
    }
}

struct Sim<'a> {
    index: &'a TraceIndex,
    slot: BTreeMap<VehicleId, usize>,
    radio: &'a RadioParams,
    rng: RngStream,
    heap: BinaryHeap<Queued>,
    seq: u64,
    now: f64,
    stations: Vec<Station>,
    cbr: Vec<(CbrFlowConfig, Vec<f64>)>,
    records: Vec<PacketRecord>,
    settled: Vec<bool>,
    /// Recent frames, kept while they can still overlap one in flight.
    air: Vec<Transmission>,
    in_flight: BTreeMap<u64, OnAir>,
    next_tx: u64,
    max_airtime: f64,
    pos: Vec<Option<Pos>>,
}

impl<'a> Sim<'a> {
    fn new(
        index: &'a TraceIndex,
        slot: BTreeMap<VehicleId, usize>,
        radio: &'a RadioParams,
        seed: u64,
    ) -> Self {
        let stations = index
            .vehicles()
            .iter()
            .map(|v| Station {
                aodv: AodvNodeState::new(*v),
                queue: VecDeque::new(),
                transmitting: false,
                attempt_pending: false,
            })
            .collect();
        Sim {
            index,
            slot,
            radio,
            rng: rng::stream(seed, rng::domain::NETWORK, 0),
            heap: BinaryHeap::new(),
            seq: 0,
            now: index.start(),
            stations,
            cbr: Vec::new(),
            records: Vec::new(),
            settled: Vec::new(),
            air: Vec::new(),
            in_flight: BTreeMap::new(),
            next_tx: 0,
            max_airtime: 0.0,
            pos: Vec::new(),
        }
    }

    fn push(&mut self, time: f64, event: Event) {
        self.seq += 1;
        self.heap.push(Queued {
            time,
            seq: self.seq,
            event,
        });
    }

    fn backoff(&mut self) -> f64 {
        self.rng.random_range(0..=self.radio.max_backoff_slots) as f64 * self.radio.slot
    }

    fn run(&mut self) {
        let end = self.index.end();
        while let Some(q) = self.heap.pop() {
            if q.time > end {
                break;
            }
            self.now = q.time;
            match q.event {
                Event::Cbr { flow, k } => self.originate(flow, k),
                Event::MacAttempt { node } => self.attempt(node),
                Event::TxEnd { id } => self.tx_end(id),
                Event::Timeout {
                    node,
                    dest,
                    rreq_id,
                } => {
                    let out = aodv_handle(
                        &mut self.stations[node].aodv,
                        AodvInput::DiscoveryTimeout { dest, rreq_id },
                        self.now,
                    );
                    self.apply(node, out);
                }
            }
        }
    }

    fn originate(&mut self, flow: usize, k: usize) {
        let (f, times) = &self.cbr[flow];
        let id = self.records.len() as u64;
        let packet = DataPacket {
            id,
            flow,
            src: f.src,
            dst: f.dst,
            size: f.packet_size,
            created: self.now,
            ttl: DATA_TTL,
            path: vec![f.src],
        };
        let node = self.slot[&f.src];
        if let Some(&t) = times.get(k + 1) {
            self.push(t, Event::Cbr { flow, k: k + 1 });
        }
        self.records.push(PacketRecord {
            packet_id: id,
            flow,
            created: self.now,
            delivered_at: None,
            hops: 0,
            disposition: Disposition::InFlightAtEnd,
            path: Vec::new(),
        });
        self.settled.push(false);
        let out = aodv_handle(
            &mut self.stations[node].aodv,
            AodvInput::Data { from: None, packet },
            self.now,
        );
        self.apply(node, out);
    }

    fn settle(&mut self, packet: DataPacket, disposition: Disposition) {
        let i = packet.id as usize;
        assert!(!self.settled[i], "packet {i} settled twice");
        self.settled[i] = true;
        let r = &mut self.records[i];
        r.disposition = disposition;
        r.hops = packet.path.len() as u32 - 1;
        if disposition == Disposition::Delivered {
            r.delivered_at = Some(self.now);
        }
        r.path = packet.path;
    }

    fn apply(&mut self, node: usize, actions: Vec<Action>) {
        for action in actions {
            match action {
                Action::Broadcast(msg) => self.enqueue(node, None, Payload::Control(msg)),
                Action::UnicastControl { next_hop, msg } => {
                    self.enqueue(node, Some(next_hop), Payload::Control(msg))
                }
                Action::UnicastData { next_hop, packet } => {
                    self.enqueue(node, Some(next_hop), Payload::Data(packet))
                }
                Action::Deliver(packet) => self.settle(packet, Disposition::Delivered),
                Action::Drop(packet, d) => self.settle(packet, d),
                Action::ScheduleTimeout { dest, rreq_id, at } => self.push(
                    at,
                    Event::Timeout {
                        node,
                        dest,
                        rreq_id,
                    },
                ),
            }
        }
    }

    fn enqueue(&mut self, node: usize, next_hop: Option<VehicleId>, payload: Payload) {
        if self.stations[node].queue.len() >= QUEUE_CAPACITY {
            if let Payload::Data(p) = payload {
                self.settle(p, Disposition::DroppedQueueOverflow);
            }
            return;
        }
        self.stations[node].queue.push_back(Frame {
            next_hop,
            payload,
            retries: 0,
        });
        self.kick(node);
    }

    /// Schedules a channel access if the node has work and is idle.
    fn kick(&mut self, node: usize) {
        let s = &self.stations[node];
        if s.transmitting || s.attempt_pending || s.queue.is_empty() {
            return;
        }
        self.stations[node].attempt_pending = true;
        let at = self.now + self.backoff();
        self.push(at, Event::MacAttempt { node });
    }

    fn attempt(&mut self, node: usize) {
        self.stations[node].attempt_pending = false;
        let now = self.now;
        self.index
            .positions_into(now, &mut self.pos)
            .expect("event inside trace span");
        let Some(here) = self.pos[node] else {
            // absent from the trace: nothing can leave this node
            let frames: Vec<Frame> = self.stations[node].queue.drain(..).collect();
            for f in frames {
                if let Payload::Data(p) = f.payload {
                    self.settle(p, Disposition::DroppedNoRoute);
                }
            }
            return;
        };
        let horizon = now - self.max_airtime;
        self.air.retain(|t| t.end >= horizon);
        let busy_until = self
            .air
            .iter()
            .filter(|t| {
                t.start < now
                    && t.end > now
                    && in_range(t.sender_pos, here, self.radio.interference_range)
            })
            .map(|t| t.end)
            .fold(None, |acc: Option<f64>, e| {
                Some(acc.map_or(e, |a| a.max(e)))
            });
        if let Some(until) = busy_until {
            self.stations[node].attempt_pending = true;
            let at = until + self.backoff();
            self.push(at, Event::MacAttempt { node });
            return;
        }
        let Some(frame) = self.stations[node].queue.pop_front() else {
            return;
        };
        let duration = airtime(frame.size(), self.radio);
        self.max_airtime = self.max_airtime.max(duration);
        let sender = self.stations[node].aodv.id;
        let tx = Transmission {
            sender,
            sender_pos: here,
            start: now,
            end: now + duration,
        };
        let listeners = self
            .pos
            .iter()
            .enumerate()
            .filter_map(|(i, p)| {
                let p = (*p)?;
                (i != node && in_range(here, p, self.radio.tx_range))
                    .then(|| (self.stations[i].aodv.id, p))
            })
            .collect();
        self.stations[node].transmitting = true;
        self.air.push(tx.clone());
        let id = self.next_tx;
        self.next_tx += 1;
        self.in_flight.insert(
            id,
            OnAir {
                node,
                tx,
                listeners,
                frame,
            },
        );
        self.push(now + duration, Event::TxEnd { id });
    }

    fn tx_end(&mut self, id: u64) {
        let OnAir {
            node,
            tx,
            listeners,
            mut frame,
        } = self.in_flight.remove(&id).expect("unknown transmission");
        self.stations[node].transmitting = false;
        let outcome = channel_deliver(&tx, &listeners, &self.air, self.radio);
        let sender = tx.sender;

        match frame.next_hop {
            None => {
                let Payload::Control(msg) = &frame.payload else {
                    unreachable!("data frames are always unicast");
                };
                for (rx, r) in &outcome {
                    if *r == Reception::Received {
                        let i = self.slot[rx];
                        let input = AodvInput::Control {
                            from: sender,
                            msg: msg.clone(),
                        };
                        let out = aodv_handle(&mut self.stations[i].aodv, input, self.now);
                        self.apply(i, out);
                    }
                }
            }
            Some(next_hop) => {
                let result = outcome
                    .iter()
                    .find(|(rx, _)| *rx == next_hop)
                    .map(|(_, r)| *r);
                if result == Some(Reception::Received) {
                    let i = self.slot[&next_hop];
                    let input = match frame.payload {
                        Payload::Control(msg) => AodvInput::Control { from: sender, msg },
                        Payload::Data(mut packet) => {
                            packet.path.push(next_hop);
                            AodvInput::Data {
                                from: Some(sender),
                                packet,
                            }
                        }
                    };
                    let out = aodv_handle(&mut self.stations[i].aodv, input, self.now);
                    self.apply(i, out);
                } else if frame.retries < MAC_RETRIES {
                    frame.retries += 1;
                    self.stations[node].queue.push_front(frame);
                } else {
                    let cause = if result == Some(Reception::CollisionLoss) {
                        Disposition::DroppedCollision
                    } else {
                        Disposition::DroppedNoRoute
                    };
                    let packet = match frame.payload {
                        Payload::Data(p) => Some(p),
                        Payload::Control(_) => None,
                    };
                    let input = AodvInput::LinkFailure {
                        next_hop,
                        packet,
                        cause,
                    };
                    let out = aodv_handle(&mut self.stations[node].aodv, input, self.now);
                    self.apply(node, out);
                }
            }
        }
        self.kick(node);
    }

    /// Marks everything still unsettled as in flight and hands back the records.
    fn finish(&mut self) -> Vec<PacketRecord> {
        let mut records = std::mem::take(&mut self.records);
        for (r, settled) in records.iter_mut().zip(&self.settled) {
            if !settled {
                r.disposition = Disposition::InFlightAtEnd;
            }
        }
        records
    }
}
