//! Per-node routing agent.
//!
//! The agent never touches the MAC or the clock directly. Every entry point
//! takes the current time and returns a list of [`Action`]s for the simulator
//! to carry out.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::messages::{
    DataPacket, Packet, Payload, RerrMessage, RrepMessage, RreqMessage, WarnMessage, FPD_SENTINEL,
};
use super::table::{RouteState, RouteTable, RouteUpdate};
use super::{Protocol, RoutingConfig};
use crate::mac::{FailureReason, Outgoing, XmitFailure};
use crate::predict::{
    discovery_period, link_about_to_fail, predict_time, DiscoveryInputs, RssHistory, RssSample,
};
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiscoveryKind {
    Normal,
    /// Triggered by a WARN while the old route is still in use.
    Preemptive,
    /// TTL-scoped local repair by an intermediate node.
    Repair,
}

impl DiscoveryKind {
    pub fn name(self) -> &'static str {
        match self {
            DiscoveryKind::Normal => "normal",
            DiscoveryKind::Preemptive => "preemptive",
            DiscoveryKind::Repair => "repair",
        }
    }
}

/// Why a data packet left the network without being delivered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DataDrop {
    RetryExceed,
    QueueFull,
    NoRoute,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RouteTimer {
    RreqTimeout { dest: NodeId, generation: u64 },
    CollectorClose { src: NodeId, broadcast_id: u32 },
    CongestionRetry { token: u64 },
}

/// Events of interest to metrics and the trace.
#[derive(Debug, Clone, PartialEq)]
pub enum Note {
    RreqOriginated {
        dest: NodeId,
        broadcast_id: u32,
        kind: DiscoveryKind,
    },
    RouteFound {
        dest: NodeId,
        next_hop: NodeId,
        hops: u32,
    },
    RouteSelected {
        src: NodeId,
        via: NodeId,
        hops: u32,
        cost_fpd: f64,
        candidates: usize,
    },
    /// A repair was executed after a MAC failure.
    RouteError {
        neighbor: NodeId,
        reason: FailureReason,
        escalated: bool,
    },
    Suppressed {
        neighbor: NodeId,
        retry_in: f64,
    },
    WarningSent {
        link_from: NodeId,
        src: NodeId,
        dest: NodeId,
        predicted_at: f64,
    },
    WarningIgnored {
        dest: NodeId,
    },
    RerrSent {
        unreachable: usize,
        /// The RERR stems directly from a failure classified as HighRss.
        high_rss: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Send {
        packet: Packet,
        next_hop: NodeId,
    },
    /// Local broadcast, optionally delayed by a random jitter.
    Broadcast {
        packet: Packet,
        jitter: bool,
    },
    Timer {
        delay: f64,
        timer: RouteTimer,
    },
    Deliver(DataPacket),
    Drop {
        packet: DataPacket,
        cause: DataDrop,
    },
    Note(Note),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FailureDecision {
    SuppressAndRetry { delay: f64 },
    Repair,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RreqOutcome {
    Forward(RreqMessage),
    Reply(RrepMessage),
    /// Held by the destination's collector; `opened` on the first copy.
    Collected {
        opened: bool,
    },
    Drop,
}

/// One RREQ copy that reached the destination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub via: NodeId,
    pub hop_count: u32,
    pub cost_fpd: f64,
    pub src_seq: u32,
    /// Arrival order within the window.
    pub arrival: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RreqCollector {
    pub src: NodeId,
    pub broadcast_id: u32,
    pub window_start: f64,
    pub window_len: f64,
    pub candidates: Vec<Candidate>,
}

impl RreqCollector {
    pub fn new(src: NodeId, broadcast_id: u32, window_start: f64, window_len: f64) -> Self {
        RreqCollector {
            src,
            broadcast_id,
            window_start,
            window_len,
            candidates: Vec::new(),
        }
    }

    pub fn add(&mut self, via: NodeId, hop_count: u32, cost_fpd: f64, src_seq: u32) {
        let arrival = self.candidates.len() as u32;
        self.candidates.push(Candidate {
            via,
            hop_count,
            cost_fpd,
            src_seq,
            arrival,
        });
    }

    pub fn closes_at(&self) -> f64 {
        self.window_start + self.window_len
    }
}

/// Largest cost, then fewest hops, then earliest arrival.
pub fn select_route(collector: &RreqCollector) -> Option<&Candidate> {
    collector.candidates.iter().min_by(|a, b| {
        b.cost_fpd
            .total_cmp(&a.cost_fpd)
            .then(a.hop_count.cmp(&b.hop_count))
            .then(a.arrival.cmp(&b.arrival))
    })
}

#[derive(Debug, Clone, Copy)]
struct Discovery {
    kind: DiscoveryKind,
    attempts: u32,
    generation: u64,
    ttl: u8,
}

#[derive(Debug)]
pub struct Agent {
    id: NodeId,
    cfg: RoutingConfig,
    table: RouteTable,
    own_seq: u32,
    broadcast_id: u32,
    seen: BTreeSet<(NodeId, u32)>,
    discoveries: BTreeMap<NodeId, Discovery>,
    generation: u64,
    buffer: VecDeque<DataPacket>,
    collectors: BTreeMap<(NodeId, u32), RreqCollector>,
    warned: BTreeMap<(NodeId, NodeId, NodeId), f64>,
    last_originated: BTreeMap<NodeId, f64>,
    streak: Vec<u32>,
    deferred: BTreeMap<u64, (Vec<Packet>, NodeId)>,
    next_token: u64,
}

impl Agent {
    pub fn new(id: NodeId, node_count: usize, cfg: RoutingConfig) -> Self {
        Agent {
            id,
            cfg,
            table: RouteTable::new(node_count),
            own_seq: 0,
            broadcast_id: 0,
            seen: BTreeSet::new(),
            discoveries: BTreeMap::new(),
            generation: 0,
            buffer: VecDeque::new(),
            collectors: BTreeMap::new(),
            warned: BTreeMap::new(),
            last_originated: BTreeMap::new(),
            streak: vec![0; node_count],
            deferred: BTreeMap::new(),
            next_token: 0,
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn protocol(&self) -> Protocol {
        self.cfg.protocol
    }

    pub fn config(&self) -> &RoutingConfig {
        &self.cfg
    }

    pub fn table(&self) -> &RouteTable {
        &self.table
    }

    pub fn own_seq(&self) -> u32 {
        self.own_seq
    }

    pub fn pending_discovery(&self, dest: NodeId) -> Option<DiscoveryKind> {
        self.discoveries.get(&dest).map(|d| d.kind)
    }

    pub fn collector(&self, src: NodeId, broadcast_id: u32) -> Option<&RreqCollector> {
        self.collectors.get(&(src, broadcast_id))
    }

    /// Data packets held by this agent (send buffer plus congestion retries).
    pub fn held_data(&self) -> usize {
        self.buffer.len()
            + self
                .deferred
                .values()
                .flat_map(|(ps, _)| ps)
                .filter(|p| p.as_data().is_some())
                .count()
    }

    /// Build a fresh RREQ. Returns `None` when `dest` is this node.
    pub fn originate_rreq(&mut self, dest: NodeId, dest_seq: u32) -> Option<RreqMessage> {
        if dest == self.id {
            return None;
        }
        self.own_seq += 1;
        self.broadcast_id += 1;
        self.seen.insert((self.id, self.broadcast_id));
        Some(RreqMessage::new(
            self.id,
            self.own_seq,
            self.broadcast_id,
            dest,
            dest_seq,
        ))
    }

    /// A CBR source hands a new packet down.
    pub fn originate_data(&mut self, now: f64, data: DataPacket) -> Vec<Action> {
        let mut out = Vec::new();
        self.last_originated.insert(data.dst, now);
        self.route_data(now, data, None, &mut out);
        out
    }

    /// Entry point for every packet decoded from `from`. `rss` is its
    /// received power stamped with the instant it was measured, `history`
    /// the RSS record kept for `from`, and
    /// `link_fpd` the fpd of the incoming link.
    pub fn recv(
        &mut self,
        now: f64,
        from: NodeId,
        packet: Packet,
        rss: RssSample,
        history: &mut RssHistory,
        link_fpd: f64,
    ) -> Vec<Action> {
        let mut out = Vec::new();
        let lifetime = self.cfg.route_lifetime;
        self.table.touch_neighbor(now, lifetime, from);
        let ttl = packet.ttl;
        match packet.payload {
            Payload::Data(d) => self.recv_data(now, from, d, rss, history, &mut out),
            Payload::Rreq(r) => match self.process_rreq(now, from, r, link_fpd) {
                RreqOutcome::Forward(m) => {
                    if ttl > 1 {
                        out.push(Action::Broadcast {
                            packet: Packet::new(Payload::Rreq(m), ttl - 1),
                            jitter: true,
                        });
                    }
                }
                RreqOutcome::Reply(rrep) => out.push(Action::Send {
                    packet: Packet::new(Payload::Rrep(rrep), self.cfg.net_diameter),
                    next_hop: from,
                }),
                RreqOutcome::Collected { opened: true } => out.push(Action::Timer {
                    delay: self.cfg.collection_window,
                    timer: RouteTimer::CollectorClose {
                        src: r.src_addr,
                        broadcast_id: r.broadcast_id,
                    },
                }),
                RreqOutcome::Collected { opened: false } | RreqOutcome::Drop => {}
            },
            Payload::Rrep(r) => self.recv_rrep(now, from, r, &mut out),
            Payload::Rerr(e) => self.recv_rerr(from, &e, &mut out),
            Payload::Warn(w) => self.recv_warn(now, w, &mut out),
        }
        out
    }

    /// RREQ handling: duplicate suppression, reverse-route setup, fpd
    /// accumulation and the reply/forward decision.
    pub fn process_rreq(
        &mut self,
        now: f64,
        from: NodeId,
        rreq: RreqMessage,
        incoming_link_fpd: f64,
    ) -> RreqOutcome {
        if rreq.src_addr == self.id {
            return RreqOutcome::Drop;
        }
        let key = (rreq.src_addr, rreq.broadcast_id);
        let cost = rreq.cost_fpd.min(incoming_link_fpd);
        let hops = rreq.hop_count.saturating_add(1);
        if self.seen.contains(&key) {
            if let Some(c) = self.collectors.get_mut(&key) {
                c.add(from, u32::from(hops), cost, rreq.src_seq);
                return RreqOutcome::Collected { opened: false };
            }
            return RreqOutcome::Drop;
        }
        self.seen.insert(key);
        let fwd = RreqMessage {
            hop_count: hops,
            cost_fpd: cost,
            ..rreq
        };
        let lifetime = self.cfg.route_lifetime;

        if rreq.dest_addr == self.id {
            self.own_seq = self.own_seq.max(rreq.dest_seq);
            if self.cfg.protocol.uses_fpd() {
                let mut c = RreqCollector::new(
                    rreq.src_addr,
                    rreq.broadcast_id,
                    now,
                    self.cfg.collection_window,
                );
                c.add(from, u32::from(hops), cost, rreq.src_seq);
                self.collectors.insert(key, c);
                return RreqOutcome::Collected { opened: true };
            }
            self.install_reverse(now, from, &fwd, false);
            return RreqOutcome::Reply(RrepMessage {
                hop_count: 0,
                dest: self.id,
                dest_seq: self.own_seq,
                src: rreq.src_addr,
                cost_fpd: cost,
            });
        }

        self.install_reverse(now, from, &fwd, false);
        if !self.cfg.protocol.uses_fpd() {
            if let Some(e) = self.table.valid(rreq.dest_addr, now) {
                if e.dest_seq != 0 && e.dest_seq >= rreq.dest_seq && e.next_hop != from {
                    let reply = RrepMessage {
                        hop_count: e.hop_count.min(255) as u8,
                        dest: rreq.dest_addr,
                        dest_seq: e.dest_seq,
                        src: rreq.src_addr,
                        cost_fpd: FPD_SENTINEL,
                    };
                    let dest_next = e.next_hop;
                    if let Some(e) = self.table.get_mut(rreq.dest_addr) {
                        e.add_precursor(from);
                    }
                    if let Some(e) = self.table.get_mut(rreq.src_addr) {
                        e.add_precursor(dest_next);
                    }
                    self.table.refresh(rreq.dest_addr, now, lifetime);
                    return RreqOutcome::Reply(reply);
                }
            }
        }
        RreqOutcome::Forward(fwd)
    }

    fn install_reverse(&mut self, now: f64, from: NodeId, rreq: &RreqMessage, force: bool) {
        self.table.update(
            now,
            self.cfg.route_lifetime,
            RouteUpdate {
                dest: rreq.src_addr,
                next_hop: from,
                hop_count: u32::from(rreq.hop_count),
                dest_seq: rreq.src_seq,
                path_fpd: rreq.cost_fpd,
            },
            force,
        );
    }

    /// Record the RSS of a data packet from `from` and decide whether the
    /// link is about to break. Returns the warning to send, if any.
    pub fn on_data_received(
        &mut self,
        now: f64,
        from: NodeId,
        data: &DataPacket,
        rss: RssSample,
        history: &mut RssHistory,
    ) -> Option<WarnMessage> {
        if !self.cfg.protocol.predicts() {
            return None;
        }
        history.record(rss.time, rss.power);
        let to_dest = if data.dst == self.id {
            0
        } else {
            self.table.valid(data.dst, now).map_or(0, |e| e.hop_count)
        };
        let n_as = u32::from(data.hops);
        let inputs = DiscoveryInputs {
            t_warning: self.cfg.one_hop.t_warning,
            t_rreq: self.cfg.one_hop.t_rreq,
            t_rrep: self.cfg.one_hop.t_rrep,
            hops_to_source: n_as,
            hops_source_to_dest: n_as + to_dest,
        };
        let t_dp = discovery_period(&inputs);
        if !link_about_to_fail(history, t_dp, self.cfg.prediction_threshold()) {
            return None;
        }
        let key = (from, data.src, data.dst);
        if let Some(&last) = self.warned.get(&key) {
            if now < last + self.cfg.warn_cooldown {
                return None;
            }
        }
        self.warned.insert(key, now);
        let t3 = history.last().map_or(now, |s| s.time);
        Some(WarnMessage {
            origin: self.id,
            dest_of_route: data.dst,
            src_of_route: data.src,
            predicted_fail_time: predict_time(t3, t_dp),
            issued_at: now,
        })
    }

    fn recv_data(
        &mut self,
        now: f64,
        from: NodeId,
        mut d: DataPacket,
        rss: RssSample,
        history: &mut RssHistory,
        out: &mut Vec<Action>,
    ) {
        d.hops = d.hops.saturating_add(1);
        if let Some(w) = self.on_data_received(now, from, &d, rss, history) {
            if let Some(e) = self.table.valid(w.src_of_route, now) {
                out.push(Action::Note(Note::WarningSent {
                    link_from: from,
                    src: w.src_of_route,
                    dest: w.dest_of_route,
                    predicted_at: w.predicted_fail_time,
                }));
                out.push(Action::Send {
                    packet: Packet::new(Payload::Warn(w), self.cfg.net_diameter),
                    next_hop: e.next_hop,
                });
            }
        }
        if d.dst == self.id {
            self.table.refresh(d.src, now, self.cfg.route_lifetime);
            out.push(Action::Deliver(d));
        } else {
            self.route_data(now, d, Some(from), out);
        }
    }

    /// Forward or buffer a data packet. `prev_hop` is `None` for packets this
    /// node originated or is re-sending itself.
    fn route_data(
        &mut self,
        now: f64,
        d: DataPacket,
        prev_hop: Option<NodeId>,
        out: &mut Vec<Action>,
    ) {
        let lifetime = self.cfg.route_lifetime;
        if let Some(e) = self.table.valid(d.dst, now) {
            let nh = e.next_hop;
            self.table.refresh(d.dst, now, lifetime);
            self.table.refresh(nh, now, lifetime);
            if let Some(p) = prev_hop {
                if let Some(e) = self.table.get_mut(d.dst) {
                    e.add_precursor(p);
                }
                self.table.refresh(d.src, now, lifetime);
            }
            out.push(Action::Send {
                packet: Packet::new(Payload::Data(d), self.cfg.net_diameter),
                next_hop: nh,
            });
            return;
        }
        let repairing = self
            .table
            .get(d.dst)
            .is_some_and(|e| e.state == RouteState::UnderRepair);
        if d.src == self.id || repairing {
            self.buffer_data(d, out);
            if d.src == self.id && !self.discoveries.contains_key(&d.dst) {
                self.start_discovery(
                    now,
                    d.dst,
                    DiscoveryKind::Normal,
                    self.cfg.net_diameter,
                    out,
                );
            }
            return;
        }
        out.push(Action::Drop {
            packet: d,
            cause: DataDrop::NoRoute,
        });
        let seq = self.table.invalidate(d.dst).map_or(0, |e| e.dest_seq);
        self.broadcast_rerr(vec![(d.dst, seq)], false, out);
    }

    fn buffer_data(&mut self, d: DataPacket, out: &mut Vec<Action>) {
        if self.buffer.len() >= self.cfg.send_buffer {
            if let Some(old) = self.buffer.pop_front() {
                out.push(Action::Drop {
                    packet: old,
                    cause: DataDrop::QueueFull,
                });
            }
        }
        self.buffer.push_back(d);
    }

    fn flush_buffer(&mut self, now: f64, dest: NodeId, out: &mut Vec<Action>) {
        let (ready, keep): (VecDeque<_>, VecDeque<_>) =
            self.buffer.drain(..).partition(|d| d.dst == dest);
        self.buffer = keep;
        for d in ready {
            self.route_data(now, d, None, out);
        }
    }

    fn drop_buffered(&mut self, dest: NodeId, out: &mut Vec<Action>) {
        let (gone, keep): (VecDeque<_>, VecDeque<_>) =
            self.buffer.drain(..).partition(|d| d.dst == dest);
        self.buffer = keep;
        out.extend(gone.into_iter().map(|packet| Action::Drop {
            packet,
            cause: DataDrop::NoRoute,
        }));
    }

    fn discovery_timeout(&self, kind: DiscoveryKind, attempts: u32, ttl: u8) -> f64 {
        match kind {
            DiscoveryKind::Repair => 2.0 * self.cfg.node_traversal_time * (f64::from(ttl) + 2.0),
            _ => self.cfg.rreq_timeout * 2f64.powi(attempts as i32),
        }
    }

    fn start_discovery(
        &mut self,
        now: f64,
        dest: NodeId,
        kind: DiscoveryKind,
        ttl: u8,
        out: &mut Vec<Action>,
    ) {
        let _ = now;
        let known = self.table.get(dest).map_or(0, |e| e.dest_seq);
        let dest_seq = match kind {
            DiscoveryKind::Preemptive => known + 1,
            _ => known,
        };
        let Some(rreq) = self.originate_rreq(dest, dest_seq) else {
            return;
        };
        self.generation += 1;
        let disc = Discovery {
            kind,
            attempts: 0,
            generation: self.generation,
            ttl,
        };
        self.discoveries.insert(dest, disc);
        self.emit_rreq(rreq, disc, out);
    }

    fn emit_rreq(&mut self, rreq: RreqMessage, disc: Discovery, out: &mut Vec<Action>) {
        out.push(Action::Note(Note::RreqOriginated {
            dest: rreq.dest_addr,
            broadcast_id: rreq.broadcast_id,
            kind: disc.kind,
        }));
        out.push(Action::Broadcast {
            packet: Packet::new(Payload::Rreq(rreq), disc.ttl),
            jitter: false,
        });
        out.push(Action::Timer {
            delay: self.discovery_timeout(disc.kind, disc.attempts, disc.ttl),
            timer: RouteTimer::RreqTimeout {
                dest: rreq.dest_addr,
                generation: disc.generation,
            },
        });
    }

    fn recv_rrep(&mut self, now: f64, from: NodeId, r: RrepMessage, out: &mut Vec<Action>) {
        let hops = u32::from(r.hop_count) + 1;
        let lifetime = self.cfg.route_lifetime;
        self.table.update(
            now,
            lifetime,
            RouteUpdate {
                dest: r.dest,
                next_hop: from,
                hop_count: hops,
                dest_seq: r.dest_seq,
                path_fpd: r.cost_fpd,
            },
            false,
        );
        if r.src == self.id {
            if self.discoveries.remove(&r.dest).is_some() {
                if let Some(e) = self.table.valid(r.dest, now) {
                    out.push(Action::Note(Note::RouteFound {
                        dest: r.dest,
                        next_hop: e.next_hop,
                        hops: e.hop_count,
                    }));
                }
            }
            self.flush_buffer(now, r.dest, out);
            return;
        }
        let Some(back) = self.table.valid(r.src, now).map(|e| e.next_hop) else {
            return;
        };
        let fwd_next = self.table.get(r.dest).map(|e| e.next_hop);
        if let Some(e) = self.table.get_mut(r.dest) {
            e.add_precursor(back);
        }
        if let (Some(n), Some(e)) = (fwd_next, self.table.get_mut(r.src)) {
            e.add_precursor(n);
        }
        self.table.refresh(r.src, now, lifetime);
        out.push(Action::Send {
            packet: Packet::new(
                Payload::Rrep(RrepMessage {
                    hop_count: hops.min(255) as u8,
                    ..r
                }),
                self.cfg.net_diameter,
            ),
            next_hop: back,
        });
    }

    fn recv_rerr(&mut self, from: NodeId, e: &RerrMessage, out: &mut Vec<Action>) {
        let mut onward = Vec::new();
        for &(dest, seq) in &e.unreachable {
            let Some(entry) = self.table.get(dest) else {
                continue;
            };
            if entry.next_hop != from || entry.state != RouteState::Valid {
                continue;
            }
            let entry = self.table.invalidate(dest).expect("entry exists");
            let seq = entry.dest_seq.max(seq);
            let has_precursors = !entry.precursors.is_empty();
            if let Some(entry) = self.table.get_mut(dest) {
                entry.dest_seq = seq;
            }
            if has_precursors {
                onward.push((dest, seq));
            }
        }
        self.broadcast_rerr(onward, false, out);
    }

    fn broadcast_rerr(
        &mut self,
        unreachable: Vec<(NodeId, u32)>,
        high_rss: bool,
        out: &mut Vec<Action>,
    ) {
        if unreachable.is_empty() {
            return;
        }
        out.push(Action::Note(Note::RerrSent {
            unreachable: unreachable.len(),
            high_rss,
        }));
        out.push(Action::Broadcast {
            packet: Packet::new(Payload::Rerr(RerrMessage { unreachable }), 1),
            jitter: false,
        });
    }

    fn recv_warn(&mut self, now: f64, w: WarnMessage, out: &mut Vec<Action>) {
        if w.src_of_route == self.id {
            out.extend(self.handle_warning(now, &w));
            return;
        }
        if let Some(e) = self.table.valid(w.src_of_route, now) {
            out.push(Action::Send {
                packet: Packet::new(Payload::Warn(w), self.cfg.net_diameter),
                next_hop: e.next_hop,
            });
        }
    }

    /// At the route source: start a preemptive discovery, keeping the old
    /// route in service until a reply replaces it.
    pub fn handle_warning(&mut self, now: f64, warn: &WarnMessage) -> Vec<Action> {
        let mut out = Vec::new();
        let dest = warn.dest_of_route;
        let active_flow = self
            .last_originated
            .get(&dest)
            .is_some_and(|&t| now - t <= self.cfg.warn_cooldown);
        let stale = match self.table.valid(dest, now) {
            None => true,
            Some(e) => e.installed_at > warn.issued_at,
        };
        if stale || !active_flow || self.discoveries.contains_key(&dest) {
            out.push(Action::Note(Note::WarningIgnored { dest }));
            return out;
        }
        self.start_discovery(
            now,
            dest,
            DiscoveryKind::Preemptive,
            self.cfg.net_diameter,
            &mut out,
        );
        out
    }

    /// A unicast to `failure.neighbor` exhausted its retries. `packet` is the
    /// frame's payload unless the receiver already accepted it; `queue` is the
    /// interface queue, from which frames for the same neighbor are pulled on
    /// repair.
    pub fn handle_mac_failure(
        &mut self,
        now: f64,
        failure: &XmitFailure,
        packet: Option<Packet>,
        queue: &mut VecDeque<Outgoing>,
    ) -> (FailureDecision, Vec<Action>) {
        let n = failure.neighbor;
        let mut escalated = false;
        if self.cfg.protocol == Protocol::LoPpAodv && failure.reason == FailureReason::HighRss {
            let k = self.streak[n as usize];
            if k <= self.cfg.max_suppressions {
                self.streak[n as usize] += 1;
                let delay = self.cfg.congestion_backoff * 2f64.powi(k as i32);
                let mut out = vec![Action::Note(Note::Suppressed {
                    neighbor: n,
                    retry_in: delay,
                })];
                // Hold back everything queued for the congested neighbor too.
                let mut held: Vec<Packet> = packet.into_iter().collect();
                let mut kept = VecDeque::with_capacity(queue.len());
                for o in queue.drain(..) {
                    if o.next_hop == Some(n) {
                        held.push(o.packet);
                    } else {
                        kept.push_back(o);
                    }
                }
                *queue = kept;
                if !held.is_empty() {
                    let token = self.next_token;
                    self.next_token += 1;
                    self.deferred.insert(token, (held, n));
                    out.push(Action::Timer {
                        delay,
                        timer: RouteTimer::CongestionRetry { token },
                    });
                }
                return (FailureDecision::SuppressAndRetry { delay }, out);
            }
            escalated = true;
        }
        self.streak[n as usize] = 0;
        let out = self.local_repair_or_rerr(now, n, packet, queue, failure.reason, escalated);
        (FailureDecision::Repair, out)
    }

    pub fn on_link_success(&mut self, neighbor: NodeId) {
        self.streak[neighbor as usize] = 0;
    }

    /// Invalidate routes through `broken`, salvage stranded data by local
    /// repair or rediscovery where possible, and report the rest upstream.
    pub fn local_repair_or_rerr(
        &mut self,
        now: f64,
        broken: NodeId,
        failed: Option<Packet>,
        queue: &mut VecDeque<Outgoing>,
        reason: FailureReason,
        escalated: bool,
    ) -> Vec<Action> {
        let mut out = vec![Action::Note(Note::RouteError {
            neighbor: broken,
            reason,
            escalated,
        })];
        let affected: Vec<(NodeId, u32, bool)> = self
            .table
            .iter()
            .filter(|e| e.usable(now) && e.next_hop == broken)
            .map(|e| (e.dest, e.hop_count, !e.precursors.is_empty()))
            .collect();
        for &(dest, _, _) in &affected {
            self.table.invalidate(dest);
        }

        let mut stranded: Vec<(DataPacket, bool)> = Vec::new();
        if let Some(d) = failed.as_ref().and_then(Packet::as_data) {
            stranded.push((*d, true));
        }
        let mut kept = VecDeque::with_capacity(queue.len());
        for o in queue.drain(..) {
            if o.next_hop == Some(broken) {
                if let Some(d) = o.packet.as_data() {
                    stranded.push((*d, false));
                }
            } else {
                kept.push_back(o);
            }
        }
        *queue = kept;

        let mut repairing = BTreeSet::new();
        for (d, was_failed) in stranded {
            if d.src == self.id {
                self.buffer_data(d, &mut out);
                if !self.discoveries.contains_key(&d.dst) {
                    self.start_discovery(
                        now,
                        d.dst,
                        DiscoveryKind::Normal,
                        self.cfg.net_diameter,
                        &mut out,
                    );
                }
                continue;
            }
            let hops = affected.iter().find(|a| a.0 == d.dst).map(|a| a.1);
            match hops {
                Some(h) if h <= self.cfg.max_repair_ttl => {
                    if let Some(e) = self.table.get_mut(d.dst) {
                        e.state = RouteState::UnderRepair;
                    }
                    self.buffer_data(d, &mut out);
                    if repairing.insert(d.dst) && !self.discoveries.contains_key(&d.dst) {
                        let ttl = (h + self.cfg.local_add_ttl).min(u32::from(u8::MAX)) as u8;
                        self.start_discovery(now, d.dst, DiscoveryKind::Repair, ttl, &mut out);
                    }
                }
                _ if self.table.valid(d.dst, now).is_some() => {
                    self.route_data(now, d, None, &mut out);
                }
                _ => out.push(Action::Drop {
                    packet: d,
                    cause: if was_failed {
                        DataDrop::RetryExceed
                    } else {
                        DataDrop::NoRoute
                    },
                }),
            }
        }

        let rerr: Vec<(NodeId, u32)> = affected
            .iter()
            .filter(|a| a.2 && !repairing.contains(&a.0))
            .filter_map(|a| self.table.get(a.0).map(|e| (a.0, e.dest_seq)))
            .collect();
        let high_rss = reason == FailureReason::HighRss && !escalated;
        self.broadcast_rerr(rerr, high_rss, &mut out);
        out
    }

    pub fn on_timer(&mut self, now: f64, timer: RouteTimer) -> Vec<Action> {
        let mut out = Vec::new();
        match timer {
            RouteTimer::RreqTimeout { dest, generation } => {
                self.rreq_timeout(now, dest, generation, &mut out)
            }
            RouteTimer::CollectorClose { src, broadcast_id } => {
                self.close_collector(now, src, broadcast_id, &mut out)
            }
            RouteTimer::CongestionRetry { token } => {
                if let Some((held, next_hop)) = self.deferred.remove(&token) {
                    for packet in held {
                        match packet.payload {
                            Payload::Data(d) => self.route_data(now, d, None, &mut out),
                            _ => out.push(Action::Send { packet, next_hop }),
                        }
                    }
                }
            }
        }
        out
    }

    fn rreq_timeout(&mut self, now: f64, dest: NodeId, generation: u64, out: &mut Vec<Action>) {
        let Some(mut disc) = self.discoveries.get(&dest).copied() else {
            return;
        };
        if disc.generation != generation {
            return;
        }
        if self.table.valid(dest, now).is_some() {
            self.discoveries.remove(&dest);
            self.flush_buffer(now, dest, out);
            return;
        }
        match disc.kind {
            DiscoveryKind::Repair => {
                self.discoveries.remove(&dest);
                self.drop_buffered(dest, out);
                let entry = self.table.get_mut(dest);
                let mut rerr = Vec::new();
                if let Some(e) = entry {
                    e.state = RouteState::Invalid;
                    if !e.precursors.is_empty() {
                        rerr.push((dest, e.dest_seq));
                    }
                }
                self.broadcast_rerr(rerr, false, out);
            }
            DiscoveryKind::Normal | DiscoveryKind::Preemptive => {
                if disc.attempts >= self.cfg.rreq_retries {
                    self.discoveries.remove(&dest);
                    self.drop_buffered(dest, out);
                    return;
                }
                let known = self.table.get(dest).map_or(0, |e| e.dest_seq);
                let Some(rreq) = self.originate_rreq(dest, known) else {
                    return;
                };
                disc.attempts += 1;
                disc.kind = DiscoveryKind::Normal;
                self.discoveries.insert(dest, disc);
                self.emit_rreq(rreq, disc, out);
            }
        }
    }

    fn close_collector(&mut self, now: f64, src: NodeId, broadcast_id: u32, out: &mut Vec<Action>) {
        let Some(c) = self.collectors.remove(&(src, broadcast_id)) else {
            return;
        };
        let Some(best) = select_route(&c).copied() else {
            return;
        };
        self.table.update(
            now,
            self.cfg.route_lifetime,
            RouteUpdate {
                dest: src,
                next_hop: best.via,
                hop_count: best.hop_count,
                dest_seq: best.src_seq,
                path_fpd: best.cost_fpd,
            },
            true,
        );
        out.push(Action::Note(Note::RouteSelected {
            src,
            via: best.via,
            hops: best.hop_count,
            cost_fpd: best.cost_fpd,
            candidates: c.candidates.len(),
        }));
        out.push(Action::Send {
            packet: Packet::new(
                Payload::Rrep(RrepMessage {
                    hop_count: 0,
                    dest: self.id,
                    dest_seq: self.own_seq,
                    src,
                    cost_fpd: best.cost_fpd,
                }),
                self.cfg.net_diameter,
            ),
            next_hop: best.via,
        });
    }
}
