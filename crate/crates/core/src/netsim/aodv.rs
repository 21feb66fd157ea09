//! Reactive AODV routing as a pure state machine. The simulator feeds each
//! node its inputs and carries out the returned actions.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::Disposition;
use crate::mobility::VehicleId;

/// seconds a route stays usable after its last refresh
pub const ACTIVE_ROUTE_TIMEOUT: f64 = 10.0;
/// first discovery wait; doubled on every retry
pub const DISCOVERY_TIMEOUT: f64 = 1.0;
pub const RREQ_RETRIES: u32 = 3;
pub const DATA_TTL: u32 = 16;
pub const PENDING_CAPACITY: usize = 64;
const SEEN_LIFETIME: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub enum ControlMsg {
    Rreq {
        origin: VehicleId,
        origin_seq: u32,
        rreq_id: u32,
        dest: VehicleId,
        dest_seq: Option<u32>,
        hop_count: u32,
    },
    /// Travels back toward `origin`, the node that asked for `dest`.
    Rrep {
        origin: VehicleId,
        dest: VehicleId,
        dest_seq: u32,
        hop_count: u32,
    },
    Rerr {
        unreachable: Vec<(VehicleId, u32)>,
    },
}

impl ControlMsg {
    /// Wire size in bytes.
    pub fn size(&self) -> u32 {
        match self {
            ControlMsg::Rreq { .. } => 24,
            ControlMsg::Rrep { .. } => 20,
            ControlMsg::Rerr { unreachable } => 4 + 8 * unreachable.len() as u32,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataPacket {
    pub id: u64,
    pub flow: usize,
    pub src: VehicleId,
    pub dst: VehicleId,
    pub size: u32,
    pub created: f64,
    pub ttl: u32,
    pub path: Vec<VehicleId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteEntry {
    pub next_hop: VehicleId,
    pub hop_count: u32,
    pub dest_seq: u32,
    pub expiry: f64,
    pub valid: bool,
    /// Neighbors that forward through this entry and must hear about breaks.
    pub precursors: BTreeSet<VehicleId>,
}

#[derive(Debug, Clone, PartialEq)]
struct Discovery {
    attempts: u32,
    rreq_id: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AodvNodeState {
    pub id: VehicleId,
    pub routes: BTreeMap<VehicleId, RouteEntry>,
    pub own_seq: u32,
    pub rreq_id: u32,
    /// `(origin, rreq_id)` -> (expiry, best hop count seen)
    pub seen_rreq: BTreeMap<(VehicleId, u32), (f64, u32)>,
    /// Locally originated packets waiting for a route.
    pub pending: VecDeque<DataPacket>,
    discoveries: BTreeMap<VehicleId, Discovery>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AodvInput {
    Control {
        from: VehicleId,
        msg: ControlMsg,
    },
    /// `from` is `None` for packets originated at this node.
    Data {
        from: Option<VehicleId>,
        packet: DataPacket,
    },
    /// The MAC gave up on a unicast to `next_hop`. `cause` is the drop
    /// reason to use if the packet cannot be salvaged.
    LinkFailure {
        next_hop: VehicleId,
        packet: Option<DataPacket>,
        cause: Disposition,
    },
    DiscoveryTimeout {
        dest: VehicleId,
        rreq_id: u32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Broadcast(ControlMsg),
    UnicastControl {
        next_hop: VehicleId,
        msg: ControlMsg,
    },
    UnicastData {
        next_hop: VehicleId,
        packet: DataPacket,
    },
    Deliver(DataPacket),
    Drop(DataPacket, Disposition),
    ScheduleTimeout {
        dest: VehicleId,
        rreq_id: u32,
        at: f64,
    },
}

impl AodvNodeState {
    pub fn new(id: VehicleId) -> Self {
        AodvNodeState {
            id,
            routes: BTreeMap::new(),
            own_seq: 0,
            rreq_id: 0,
            seen_rreq: BTreeMap::new(),
            pending: VecDeque::new(),
            discoveries: BTreeMap::new(),
        }
    }

    /// A valid, unexpired route to `dest`.
    pub fn route(&self, dest: VehicleId, now: f64) -> Option<&RouteEntry> {
        self.routes.get(&dest).filter(|r| r.valid && r.expiry > now)
    }

    pub fn discovering(&self, dest: VehicleId) -> bool {
        self.discoveries.contains_key(&dest)
    }

    /// Installs or refreshes a route under the sequence-number rule: newer
    /// sequence wins, equal sequence needs fewer hops. Returns whether the
    /// entry changed.
    fn offer_route(
        &mut self,
        dest: VehicleId,
        next_hop: VehicleId,
        hops: u32,
        seq: u32,
        now: f64,
    ) -> bool {
        let expiry = now + ACTIVE_ROUTE_TIMEOUT;
        match self.routes.get_mut(&dest) {
            Some(r) if r.valid && r.expiry > now => {
                if seq > r.dest_seq || (seq == r.dest_seq && hops < r.hop_count) {
                    r.next_hop = next_hop;
                    r.hop_count = hops;
                    r.dest_seq = seq;
                    r.expiry = expiry;
                    true
                } else {
                    false
                }
            }
            Some(r) if seq < r.dest_seq => false,
            _ => {
                let precursors = self
                    .routes
                    .remove(&dest)
                    .map(|r| r.precursors)
                    .unwrap_or_default();
                self.routes.insert(
                    dest,
                    RouteEntry {
                        next_hop,
                        hop_count: hops,
                        dest_seq: seq,
                        expiry,
                        valid: true,
                        precursors,
                    },
                );
                true
            }
        }
    }

    fn add_precursor(&mut self, dest: VehicleId, neighbor: VehicleId) {
        if let Some(r) = self.routes.get_mut(&dest) {
            r.precursors.insert(neighbor);
        }
    }

    fn start_discovery(&mut self, dest: VehicleId, attempts: u32, now: f64, out: &mut Vec<Action>) {
        self.own_seq += 1;
        self.rreq_id += 1;
        let rreq_id = self.rreq_id;
        self.seen_rreq
            .insert((self.id, rreq_id), (now + SEEN_LIFETIME, 0));
        self.discoveries
            .insert(dest, Discovery { attempts, rreq_id });
        out.push(Action::Broadcast(ControlMsg::Rreq {
            origin: self.id,
            origin_seq: self.own_seq,
            rreq_id,
            dest,
            dest_seq: self.routes.get(&dest).map(|r| r.dest_seq),
            hop_count: 0,
        }));
        let wait = DISCOVERY_TIMEOUT * f64::from(1u32 << (attempts - 1).min(16));
        out.push(Action::ScheduleTimeout {
            dest,
            rreq_id,
            at: now + wait,
        });
    }

    /// Queues a locally originated packet and makes sure a discovery runs.
    fn buffer(&mut self, packet: DataPacket, now: f64, out: &mut Vec<Action>) {
        let dest = packet.dst;
        if self.pending.len() >= PENDING_CAPACITY {
            out.push(Action::Drop(packet, Disposition::DroppedQueueOverflow));
        } else {
            self.pending.push_back(packet);
        }
        if !self.discovering(dest) {
            self.start_discovery(dest, 1, now, out);
        }
    }

    fn flush_pending(&mut self, dest: VehicleId, now: f64, out: &mut Vec<Action>) {
        let Some(next_hop) = self.route(dest, now).map(|r| r.next_hop) else {
            return;
        };
        self.discoveries.remove(&dest);
        let (ready, waiting): (VecDeque<_>, VecDeque<_>) = std::mem::take(&mut self.pending)
            .into_iter()
            .partition(|p| p.dst == dest);
        self.pending = waiting;
        for packet in ready {
            out.push(Action::UnicastData { next_hop, packet });
        }
    }

    /// Invalidates every route through `next_hop`; returns the RERR to send,
    /// if any neighbor depended on them.
    fn break_link(&mut self, next_hop: VehicleId) -> Option<ControlMsg> {
        let mut unreachable = Vec::new();
        let mut notify = false;
        for (dest, r) in &mut self.routes {
            if r.valid && r.next_hop == next_hop {
                r.valid = false;
                r.dest_seq += 1;
                notify |= !r.precursors.is_empty();
                unreachable.push((*dest, r.dest_seq));
            }
        }
        (notify && !unreachable.is_empty()).then_some(ControlMsg::Rerr { unreachable })
    }

    fn prune_seen(&mut self, now: f64) {
        if self.seen_rreq.len() > 256 {
            self.seen_rreq.retain(|_, (expiry, _)| *expiry > now);
        }
    }
}

/// Processes one input at `state` at time `now`.
pub fn aodv_handle(state: &mut AodvNodeState, input: AodvInput, now: f64) -> Vec<Action> {
    let mut out = Vec::new();
    match input {
        AodvInput::Control { from, msg } => handle_control(state, from, msg, now, &mut out),
        AodvInput::Data { from, packet } => handle_data(state, from, packet, now, &mut out),
        AodvInput::LinkFailure {
            next_hop,
            packet,
            cause,
        } => {
            if let Some(rerr) = state.break_link(next_hop) {
                out.push(Action::Broadcast(rerr));
            }
            if let Some(packet) = packet {
                if packet.src == state.id {
                    state.buffer(packet, now, &mut out);
                } else {
                    out.push(Action::Drop(packet, cause));
                }
            }
        }
        AodvInput::DiscoveryTimeout { dest, rreq_id } => {
            let current = state
                .discoveries
                .get(&dest)
                .filter(|d| d.rreq_id == rreq_id)
                .map(|d| d.attempts);
            if let Some(attempts) = current {
                if state.route(dest, now).is_some() {
                    state.flush_pending(dest, now, &mut out);
                } else if attempts > RREQ_RETRIES {
                    state.discoveries.remove(&dest);
                    let (dropped, waiting): (VecDeque<_>, VecDeque<_>) =
                        std::mem::take(&mut state.pending)
                            .into_iter()
                            .partition(|p| p.dst == dest);
                    state.pending = waiting;
                    out.extend(
                        dropped
                            .into_iter()
                            .map(|p| Action::Drop(p, Disposition::DroppedNoRoute)),
                    );
                } else {
                    state.start_discovery(dest, attempts + 1, now, &mut out);
                }
            }
        }
    }
    out
}

fn handle_control(
    state: &mut AodvNodeState,
    from: VehicleId,
    msg: ControlMsg,
    now: f64,
    out: &mut Vec<Action>,
) {
    match msg {
        ControlMsg::Rreq {
            origin,
            origin_seq,
            rreq_id,
            dest,
            dest_seq,
            hop_count,
        } => {
            if origin == state.id {
                return;
            }
            let hops = hop_count + 1;
            let key = (origin, rreq_id);
            let first = match state.seen_rreq.get(&key) {
                Some(&(expiry, best)) if expiry > now => {
                    // a copy that took a strictly shorter path is processed again
                    if hops >= best {
                        return;
                    }
                    false
                }
                _ => true,
            };
            state.prune_seen(now);
            state.seen_rreq.insert(key, (now + SEEN_LIFETIME, hops));
            state.offer_route(origin, from, hops, origin_seq, now);

            if dest == state.id {
                if first {
                    state.own_seq = (state.own_seq + 1).max(dest_seq.unwrap_or(0));
                }
                out.push(Action::UnicastControl {
                    next_hop: from,
                    msg: ControlMsg::Rrep {
                        origin,
                        dest,
                        dest_seq: state.own_seq,
                        hop_count: 0,
                    },
                });
                return;
            }
            let fresh = state
                .route(dest, now)
                .filter(|r| dest_seq.is_none_or(|s| r.dest_seq >= s))
                .map(|r| (r.dest_seq, r.hop_count, r.next_hop));
            if let Some((seq, route_hops, next)) = fresh {
                state.add_precursor(dest, from);
                state.add_precursor(origin, next);
                out.push(Action::UnicastControl {
                    next_hop: from,
                    msg: ControlMsg::Rrep {
                        origin,
                        dest,
                        dest_seq: seq,
                        hop_count: route_hops,
                    },
                });
            } else {
                out.push(Action::Broadcast(ControlMsg::Rreq {
                    origin,
                    origin_seq,
                    rreq_id,
                    dest,
                    dest_seq,
                    hop_count: hops,
                }));
            }
        }
        ControlMsg::Rrep {
            origin,
            dest,
            dest_seq,
            hop_count,
        } => {
            let hops = hop_count + 1;
            let changed = state.offer_route(dest, from, hops, dest_seq, now);
            if origin == state.id {
                state.flush_pending(dest, now, out);
                return;
            }
            if !changed {
                return;
            }
            if let Some(back) = state.route(origin, now).map(|r| r.next_hop) {
                state.add_precursor(dest, back);
                out.push(Action::UnicastControl {
                    next_hop: back,
                    msg: ControlMsg::Rrep {
                        origin,
                        dest,
                        dest_seq,
                        hop_count: hops,
                    },
                });
            }
        }
        ControlMsg::Rerr { unreachable } => {
            let mut lost = Vec::new();
            let mut notify = false;
            for (dest, seq) in unreachable {
                if let Some(r) = state.routes.get_mut(&dest) {
                    if r.valid && r.next_hop == from {
                        r.valid = false;
                        r.dest_seq = r.dest_seq.max(seq);
                        notify |= !r.precursors.is_empty();
                        lost.push((dest, r.dest_seq));
                    }
                }
            }
            if notify {
                out.push(Action::Broadcast(ControlMsg::Rerr { unreachable: lost }));
            }
        }
    }
}

fn handle_data(
    state: &mut AodvNodeState,
    from: Option<VehicleId>,
    mut packet: DataPacket,
    now: f64,
    out: &mut Vec<Action>,
) {
    if packet.dst == state.id {
        out.push(Action::Deliver(packet));
        return;
    }
    if from.is_some() {
        if packet.ttl == 0 {
            out.push(Action::Drop(packet, Disposition::DroppedTtl));
            return;
        }
        packet.ttl -= 1;
    }
    let dest = packet.dst;
    if let Some(r) = state
        .routes
        .get_mut(&dest)
        .filter(|r| r.valid && r.expiry > now)
    {
        r.expiry = now + ACTIVE_ROUTE_TIMEOUT;
        let next_hop = r.next_hop;
        if let Some(prev) = from {
            r.precursors.insert(prev);
        }
        out.push(Action::UnicastData { next_hop, packet });
    } else if packet.src == state.id {
        state.buffer(packet, now, out);
    } else {
        let seq = state.routes.get(&dest).map_or(0, |r| r.dest_seq + 1);
        out.push(Action::Drop(packet, Disposition::DroppedNoRoute));
        out.push(Action::Broadcast(ControlMsg::Rerr {
            unreachable: vec![(dest, seq)],
        }));
    }
}
