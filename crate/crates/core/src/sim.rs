//! One simulation run: nodes, the shared channel, the DCF state machine and
//! the routing agents, driven by the event scheduler.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{Scheduler, Trace};
use crate::mac::{
    failure_reason, frozen_backoff, next_cw, AirFrame, DcfState, DropKind, FrameKind, HeadOfLine,
    MacOverheadEstimator, MacTimings, Outgoing, Phase, Reception, TxRole, XmitFailure,
};
use crate::metrics::MetricCounters;
use crate::predict::{RssHistory, RssSample, DEFAULT_COALESCE_EPSILON};
use crate::radio::{
    classify_reception, link_quality, received_power, RadioParams, Reception as Rx,
};
use crate::routing::{
    fpd, Action, Agent, DiscoveryKind, FailureDecision, Note, Packet, Payload, Protocol,
    RouteTimer, RoutingConfig,
};
use crate::scenario::{CbrFlow, Position, Scenario, Trajectory};
use crate::NodeId;

/// Everything a run needs besides the scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub radio: RadioParams,
    pub mac: MacTimings,
    pub queue_len: usize,
    pub ewma_alpha: f64,
    pub coalesce_epsilon: f64,
    /// Power ratio at which a locked reception survives a weaker overlapping
    /// signal. `None` means any overlap destroys it.
    pub capture_threshold: Option<f64>,
    pub routing: RoutingConfig,
    /// Seed of the engine stream (backoff slots, jitter).
    pub seed: u64,
}

impl SimConfig {
    pub fn new(protocol: Protocol) -> Self {
        let radio = RadioParams::default();
        let mac = MacTimings::default();
        SimConfig {
            routing: RoutingConfig::new(protocol, radio.rx_threshold, &mac),
            radio,
            mac,
            queue_len: 50,
            ewma_alpha: 0.5,
            coalesce_epsilon: DEFAULT_COALESCE_EPSILON,
            capture_threshold: None,
            seed: 1,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn protocol(&self) -> Protocol {
        self.routing.protocol
    }

    pub fn validate(&self) -> Result<(), String> {
        self.radio.validate()?;
        self.mac.validate()?;
        self.routing.validate()?;
        if self.queue_len == 0 {
            return Err("queue_len must be >= 1".into());
        }
        if !(self.ewma_alpha > 0.0 && self.ewma_alpha <= 1.0) {
            return Err("ewma_alpha must lie in (0, 1]".into());
        }
        if self.capture_threshold.is_some_and(|c| !(c >= 1.0)) {
            return Err("capture_threshold must be >= 1".into());
        }
        if !(self.coalesce_epsilon >= 0.0) {
            return Err("coalesce_epsilon must be >= 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Event {
    Cbr {
        flow: usize,
    },
    Access {
        node: usize,
    },
    Check {
        node: usize,
    },
    TxEnd {
        node: usize,
    },
    RxEnd {
        node: usize,
        tx: u64,
        frame: Arc<AirFrame>,
    },
    CtsTimeout {
        node: usize,
    },
    AckTimeout {
        node: usize,
    },
    Respond {
        node: usize,
        frame: AirFrame,
    },
    SendData {
        node: usize,
    },
    Route {
        node: usize,
        timer: RouteTimer,
    },
    Enqueue {
        node: usize,
        out: Outgoing,
    },
}

struct Node {
    dcf: DcfState,
    agent: Agent,
    rss: Vec<RssHistory>,
}

pub struct Simulation {
    cfg: SimConfig,
    sched: Scheduler<Event>,
    rng: ChaCha8Rng,
    trajectories: Vec<Trajectory>,
    flows: Vec<CbrFlow>,
    flow_sent: Vec<u64>,
    nodes: Vec<Node>,
    metrics: MetricCounters,
    trace: Option<Trace>,
    next_tx: u64,
    next_data_id: u64,
    traffic_end: f64,
}

macro_rules! trace {
    ($sim:expr, $node:expr, $kind:expr, $($arg:tt)*) => {
        if let Some(t) = $sim.trace.as_mut() {
            t.record($sim.sched.now(), $node, $kind, format_args!($($arg)*));
        }
    };
}

fn frame_label(f: &AirFrame) -> impl fmt::Display + '_ {
    struct L<'a>(&'a AirFrame);
    impl fmt::Display for L<'_> {
        fn fmt(&self, w: &mut fmt::Formatter<'_>) -> fmt::Result {
            let f = self.0;
            write!(w, "{} src={} dst=", f.kind.name(), f.src)?;
            match f.dst {
                Some(d) => write!(w, "{d}")?,
                None => w.write_str("*")?,
            }
            write!(w, " seq={}", f.seq)?;
            if let Some(p) = &f.packet {
                write!(w, " pkt={}", p.kind())?;
                if let Some(d) = p.as_data() {
                    write!(w, " id={}", d.id)?;
                }
            }
            Ok(())
        }
    }
    L(f)
}

impl Simulation {
    pub fn new(scenario: &Scenario, cfg: SimConfig, trace: Option<Trace>) -> Self {
        let n = scenario.node_count();
        let estimator = MacOverheadEstimator::for_timings(&cfg.mac, cfg.ewma_alpha);
        let nodes = (0..n)
            .map(|i| Node {
                dcf: DcfState::new(n, cfg.queue_len, estimator),
                agent: Agent::new(i as NodeId, n, cfg.routing),
                rss: vec![RssHistory::with_epsilon(cfg.coalesce_epsilon); n],
            })
            .collect();
        let mut sched = Scheduler::new();
        for (i, f) in scenario.flows.iter().enumerate() {
            if f.start < scenario.duration {
                sched.schedule_at(Event::Cbr { flow: i }, f.start);
            }
        }
        Simulation {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            sched,
            trajectories: scenario.trajectories(),
            flows: scenario.flows.clone(),
            flow_sent: vec![0; scenario.flows.len()],
            nodes,
            metrics: MetricCounters::default(),
            trace,
            next_tx: 0,
            next_data_id: 0,
            traffic_end: scenario.duration,
        }
    }

    pub fn now(&self) -> f64 {
        self.sched.now()
    }

    pub fn position(&self, node: usize, t: f64) -> Position {
        self.trajectories[node].position_at(t)
    }

    pub fn agent(&self, node: usize) -> &Agent {
        &self.nodes[node].agent
    }

    pub fn rss_history(&self, node: usize, neighbor: usize) -> &RssHistory {
        &self.nodes[node].rss[neighbor]
    }

    pub fn mac_overhead(&self, node: usize) -> f64 {
        self.nodes[node].dcf.estimator.mac_overhead()
    }

    pub fn metrics(&self) -> &MetricCounters {
        &self.metrics
    }

    /// Process every event up to and including `end`, leaving the clock at `end`.
    pub fn run_until(&mut self, end: f64) -> MetricCounters {
        assert!(end >= self.sched.now(), "run_until: {end} is in the past");
        while let Some((_, _, ev)) = self.sched.pop_until(end) {
            self.dispatch(ev);
        }
        self.sched.advance_to(end);
        self.metrics.data_in_flight = self.data_in_flight();
        self.metrics.clone()
    }

    /// Counters plus the trace contents (for in-memory traces).
    pub fn finish(self) -> (MetricCounters, Vec<u8>) {
        let bytes = match self.trace {
            Some(t) => t.finish().expect("trace flush failed"),
            None => Vec::new(),
        };
        (self.metrics, bytes)
    }

    fn data_in_flight(&self) -> u64 {
        let mut n = 0;
        for node in &self.nodes {
            n += node.agent.held_data() as u64;
            n += node
                .dcf
                .queue
                .iter()
                .filter(|o| o.packet.as_data().is_some())
                .count() as u64;
            if let Some(h) = &node.dcf.hol {
                if h.out.packet.as_data().is_some() && !h.handed_off {
                    n += 1;
                }
            }
        }
        n
    }

    fn dispatch(&mut self, ev: Event) {
        match ev {
            Event::Cbr { flow } => self.cbr(flow),
            Event::Access { node } => self.access(node),
            Event::Check { node } => {
                self.nodes[node].dcf.check_timer = None;
                self.contend(node);
            }
            Event::TxEnd { node } => self.tx_end(node),
            Event::RxEnd { node, tx, frame } => self.rx_end(node, tx, &frame),
            Event::CtsTimeout { node } => {
                if matches!(self.hol_phase(node), Some(Phase::WaitCts(_))) {
                    self.attempt_failed(node);
                }
            }
            Event::AckTimeout { node } => {
                if matches!(self.hol_phase(node), Some(Phase::WaitAck(_))) {
                    self.attempt_failed(node);
                }
            }
            Event::Respond { node, frame } => {
                let dur = self.airtime(&frame);
                self.transmit(node, frame, dur, TxRole::Response);
            }
            Event::SendData { node } => self.send_data(node),
            Event::Route { node, timer } => {
                let now = self.now();
                let actions = self.nodes[node].agent.on_timer(now, timer);
                self.apply(node, actions);
            }
            Event::Enqueue { node, out } => self.enqueue(node, out),
        }
    }

    // ---- traffic ---------------------------------------------------------

    fn cbr(&mut self, flow: usize) {
        let now = self.now();
        let f = self.flows[flow];
        let k = self.flow_sent[flow];
        let data = crate::routing::DataPacket {
            id: self.next_data_id,
            flow: flow as u32,
            src: f.src,
            dst: f.dst,
            created: now,
            hops: 0,
            payload_bytes: f.payload,
        };
        self.next_data_id += 1;
        self.flow_sent[flow] += 1;
        self.metrics.data_generated += 1;
        trace!(
            self,
            Some(f.src),
            "gen",
            "id={} flow={} dst={}",
            data.id,
            flow,
            f.dst
        );
        let actions = self.nodes[f.src as usize].agent.originate_data(now, data);
        self.apply(f.src as usize, actions);
        let next = f.emission(k + 1);
        if next < self.traffic_end {
            self.sched.schedule_at(Event::Cbr { flow }, next);
        }
    }

    fn apply(&mut self, node: usize, actions: Vec<Action>) {
        let now = self.now();
        for a in actions {
            match a {
                Action::Send { packet, next_hop } => self.enqueue(
                    node,
                    Outgoing {
                        packet,
                        next_hop: Some(next_hop),
                    },
                ),
                Action::Broadcast { packet, jitter } => {
                    let out = Outgoing {
                        packet,
                        next_hop: None,
                    };
                    let max = self.cfg.routing.broadcast_jitter;
                    if jitter && max > 0.0 {
                        let d = self.rng.gen_range(0.0..=max);
                        self.sched.schedule(Event::Enqueue { node, out }, d);
                    } else {
                        self.enqueue(node, out);
                    }
                }
                Action::Timer { delay, timer } => {
                    self.sched.schedule(Event::Route { node, timer }, delay);
                }
                Action::Deliver(d) => {
                    self.metrics.delivered(now - d.created);
                    trace!(
                        self,
                        Some(node as NodeId),
                        "deliver",
                        "id={} from={} hops={}",
                        d.id,
                        d.src,
                        d.hops
                    );
                }
                Action::Drop { packet, cause } => {
                    self.metrics.data_drop(cause);
                    trace!(
                        self,
                        Some(node as NodeId),
                        "drop",
                        "id={} cause={:?}",
                        packet.id,
                        cause
                    );
                }
                Action::Note(n) => self.note(node, n),
            }
        }
    }

    fn note(&mut self, node: usize, n: Note) {
        let id = Some(node as NodeId);
        match n {
            Note::RreqOriginated {
                dest,
                broadcast_id,
                kind,
            } => {
                self.metrics.rreq_originated += 1;
                if kind == DiscoveryKind::Preemptive {
                    self.metrics.preemptive_discoveries += 1;
                }
                trace!(
                    self,
                    id,
                    "rreq-originate",
                    "dst={dest} bid={broadcast_id} kind={}",
                    kind.name()
                );
            }
            Note::RouteFound {
                dest,
                next_hop,
                hops,
            } => {
                trace!(
                    self,
                    id,
                    "route-found",
                    "dst={dest} via={next_hop} hops={hops}"
                );
            }
            Note::RouteSelected {
                src,
                via,
                hops,
                cost_fpd,
                candidates,
            } => {
                trace!(
                    self,
                    id,
                    "route-select",
                    "src={src} via={via} hops={hops} fpd={cost_fpd:e} candidates={candidates}"
                );
            }
            Note::RouteError {
                neighbor,
                reason,
                escalated,
            } => {
                self.metrics.route_errors += 1;
                trace!(
                    self,
                    id,
                    "route-error",
                    "neighbor={neighbor} reason={reason:?} escalated={escalated}"
                );
            }
            Note::Suppressed { neighbor, retry_in } => {
                self.metrics.repairs_suppressed += 1;
                trace!(
                    self,
                    id,
                    "repair-suppressed",
                    "neighbor={neighbor} retry_in={retry_in}"
                );
            }
            Note::WarningSent {
                link_from,
                src,
                dest,
                predicted_at,
            } => {
                self.metrics.warnings_sent += 1;
                trace!(
                    self,
                    id,
                    "warn-originate",
                    "link={link_from} src={src} dst={dest} t_pt={predicted_at:.9}"
                );
            }
            Note::WarningIgnored { dest } => {
                trace!(self, id, "warn-ignored", "dst={dest}");
            }
            Note::RerrSent {
                unreachable,
                high_rss,
            } => {
                if high_rss {
                    self.metrics.rerr_high_rss += 1;
                }
                trace!(
                    self,
                    id,
                    "rerr-originate",
                    "unreachable={unreachable} high_rss={high_rss}"
                );
            }
        }
    }

    // ---- MAC -------------------------------------------------------------

    fn enqueue(&mut self, node: usize, out: Outgoing) {
        let d = &mut self.nodes[node].dcf;
        if d.queue.len() >= d.queue_limit {
            self.metrics.mac_drop(DropKind::MacBusy);
            if out.packet.as_data().is_some() {
                self.metrics.data_drop(crate::routing::DataDrop::QueueFull);
            }
            trace!(
                self,
                Some(node as NodeId),
                "mac-drop",
                "MacBusy pkt={}",
                out.packet.kind()
            );
            return;
        }
        d.queue.push_back(out);
        self.try_start_hol(node);
    }

    fn try_start_hol(&mut self, node: usize) {
        let now = self.now();
        let cw = self.cfg.mac.cw_min;
        let d = &mut self.nodes[node].dcf;
        if d.hol.is_some() {
            return;
        }
        let Some(out) = d.queue.pop_front() else {
            return;
        };
        let seq = d.take_seq();
        let slots = self.rng.gen_range(0..=cw);
        d.hol = Some(HeadOfLine {
            out,
            seq,
            retries: 0,
            cw,
            backoff_slots: slots,
            attempt_since: now,
            phase: Phase::Contend,
            handed_off: false,
        });
        self.contend(node);
    }

    fn hol_phase(&self, node: usize) -> Option<Phase> {
        self.nodes[node].dcf.hol.as_ref().map(|h| h.phase)
    }

    /// Resume contention if the medium allows; otherwise wait for it to clear.
    fn contend(&mut self, node: usize) {
        let now = self.now();
        let d = &self.nodes[node].dcf;
        let Some(h) = d.hol.as_ref() else {
            return;
        };
        if h.phase != Phase::Contend
            || d.access_timer.is_some()
            || d.is_transmitting(now)
            || d.responding
        {
            return;
        }
        let idle = d.idle_at();
        if idle > now {
            if d.check_timer.is_none() {
                let hd = self.sched.schedule_at(Event::Check { node }, idle);
                self.nodes[node].dcf.check_timer = Some((hd, idle));
            }
            return;
        }
        let start = now + self.cfg.mac.t_difs;
        let fire = start + f64::from(h.backoff_slots) * self.cfg.mac.slot;
        let hd = self.sched.schedule_at(Event::Access { node }, fire);
        self.nodes[node].dcf.access_timer = Some((hd, start));
    }

    /// Carrier or virtual carrier went busy: freeze the backoff countdown.
    fn medium_busy(&mut self, node: usize) {
        let now = self.now();
        let slot = self.cfg.mac.slot;
        let d = &mut self.nodes[node].dcf;
        if let Some((hd, start)) = d.access_timer.take() {
            self.sched.cancel(hd);
            if let Some(h) = d.hol.as_mut() {
                h.backoff_slots = frozen_backoff(h.backoff_slots, start, now, slot);
            }
        }
        self.contend(node);
    }

    fn access(&mut self, node: usize) {
        let now = self.now();
        let d = &mut self.nodes[node].dcf;
        d.access_timer = None;
        if d.is_transmitting(now) || d.responding || d.idle_at() > now {
            self.contend(node);
            return;
        }
        let Some(h) = d.hol.as_mut() else {
            return;
        };
        d.estimator.observe_access_contention(now - h.attempt_since);
        let first = h.retries == 0;
        let size = h.out.packet.size_bytes();
        if first {
            if let Some(kind) = routing_kind(&h.out.packet) {
                self.metrics.routing_packets_transmitted += 1;
                match kind {
                    "rreq" => self.metrics.rreq_sent += 1,
                    "rrep" => self.metrics.rrep_sent += 1,
                    "rerr" => self.metrics.rerr_sent += 1,
                    _ => self.metrics.warn_sent += 1,
                }
            }
        }
        let data_air = self.cfg.mac.data_airtime(size);
        match h.out.next_hop {
            None => {
                h.phase = Phase::SendingBroadcast;
                let frame = AirFrame {
                    kind: FrameKind::Data,
                    src: node as NodeId,
                    dst: None,
                    seq: h.seq,
                    nav: 0.0,
                    packet: Some(h.out.packet.clone()),
                };
                self.transmit(node, frame, data_air, TxRole::HeadOfLine);
            }
            Some(nh) => {
                h.phase = Phase::SendingRts;
                let t = &self.cfg.mac;
                let frame = AirFrame {
                    kind: FrameKind::Rts,
                    src: node as NodeId,
                    dst: Some(nh),
                    seq: h.seq,
                    nav: 3.0 * t.t_sifs + t.t_cts + data_air + t.t_ack,
                    packet: None,
                };
                let dur = t.t_rts;
                self.transmit(node, frame, dur, TxRole::HeadOfLine);
            }
        }
    }

    fn airtime(&self, f: &AirFrame) -> f64 {
        let t = &self.cfg.mac;
        match f.kind {
            FrameKind::Rts => t.t_rts,
            FrameKind::Cts => t.t_cts,
            FrameKind::Ack => t.t_ack,
            FrameKind::Data => t.data_airtime(f.packet.as_ref().map_or(0, Packet::size_bytes)),
        }
    }

    /// Put a frame on the air and update every node that can sense it.
    fn transmit(&mut self, node: usize, frame: AirFrame, dur: f64, role: TxRole) {
        let now = self.now();
        let end = now + dur;
        let tx = self.next_tx;
        self.next_tx += 1;
        {
            let slot = self.cfg.mac.slot;
            let d = &mut self.nodes[node].dcf;
            d.tx_until = end;
            d.tx_role = Some(role);
            if let Some(r) = d.rx.as_mut() {
                if r.end > now {
                    r.corrupted = true;
                }
            }
            if let Some((hd, start)) = d.access_timer.take() {
                self.sched.cancel(hd);
                if let Some(h) = d.hol.as_mut() {
                    h.backoff_slots = frozen_backoff(h.backoff_slots, start, now, slot);
                }
            }
        }
        trace!(
            self,
            Some(node as NodeId),
            "tx",
            "{} dur={:.6}",
            frame_label(&frame),
            dur
        );
        let frame = Arc::new(frame);
        let here = self.position(node, now);
        for j in 0..self.nodes.len() {
            if j == node {
                continue;
            }
            let dist = here.distance(self.position(j, now));
            let pr = received_power(&self.cfg.radio, dist);
            let class = classify_reception(pr, &self.cfg.radio);
            if class == Rx::Undetectable {
                continue;
            }
            let addressed = frame.dst.is_none_or(|x| x as usize == j);
            let dj = &mut self.nodes[j].dcf;
            let was_sensing = dj.cs_busy_until > now;
            dj.cs_busy_until = dj.cs_busy_until.max(end);
            let mut locked = false;
            match dj.rx.as_mut() {
                Some(r) if r.end > now => {
                    let captured = self
                        .cfg
                        .capture_threshold
                        .is_some_and(|c| r.power >= c * pr);
                    if !captured {
                        r.corrupted = true;
                    }
                }
                Some(_) => {}
                None => {
                    if class == Rx::Deliverable && !dj.is_transmitting(now) && !was_sensing {
                        dj.rx = Some(Reception {
                            tx_id: tx,
                            end,
                            power: pr,
                            corrupted: false,
                        });
                        self.sched.schedule_at(
                            Event::RxEnd {
                                node: j,
                                tx,
                                frame: Arc::clone(&frame),
                            },
                            end,
                        );
                        locked = true;
                    }
                }
            }
            if !locked && class == Rx::Deliverable && addressed {
                self.metrics.mac_drop(DropKind::Collision);
                trace!(
                    self,
                    Some(j as NodeId),
                    "mac-drop",
                    "Collision {}",
                    frame_label(&frame)
                );
            }
            self.medium_busy(j);
        }
        self.sched.schedule_at(Event::TxEnd { node }, end);
    }

    fn tx_end(&mut self, node: usize) {
        let now = self.now();
        let t = self.cfg.mac;
        let d = &mut self.nodes[node].dcf;
        match d.tx_role.take() {
            Some(TxRole::Response) => d.responding = false,
            Some(TxRole::HeadOfLine) => {
                let phase = d.hol.as_ref().map(|h| h.phase);
                match phase {
                    Some(Phase::SendingRts) => {
                        let hd = self.sched.schedule_at(
                            Event::CtsTimeout { node },
                            now + t.t_sifs + t.t_cts + t.slot,
                        );
                        if let Some(h) = self.nodes[node].dcf.hol.as_mut() {
                            h.phase = Phase::WaitCts(hd);
                        }
                    }
                    Some(Phase::SendingData) => {
                        let hd = self.sched.schedule_at(
                            Event::AckTimeout { node },
                            now + t.t_sifs + t.t_ack + t.slot,
                        );
                        if let Some(h) = self.nodes[node].dcf.hol.as_mut() {
                            h.phase = Phase::WaitAck(hd);
                        }
                    }
                    Some(Phase::SendingBroadcast) => {
                        self.nodes[node].dcf.hol = None;
                    }
                    _ => {}
                }
            }
            None => {}
        }
        if self.nodes[node].dcf.hol.is_none() {
            self.try_start_hol(node);
        } else {
            self.contend(node);
        }
    }

    fn set_nav(&mut self, node: usize, until: f64) {
        let d = &mut self.nodes[node].dcf;
        if until > d.nav_until {
            d.nav_until = until;
            self.medium_busy(node);
        }
    }

    fn rx_end(&mut self, node: usize, tx: u64, frame: &AirFrame) {
        let now = self.now();
        let t = self.cfg.mac;
        let d = &mut self.nodes[node].dcf;
        let r = match d.rx {
            Some(r) if r.tx_id == tx => r,
            _ => return,
        };
        d.rx = None;
        let me = node as NodeId;
        let to_me = frame.dst == Some(me);
        if r.corrupted {
            if to_me || frame.dst.is_none() {
                self.metrics.mac_drop(DropKind::Collision);
                trace!(
                    self,
                    Some(me),
                    "mac-drop",
                    "Collision {}",
                    frame_label(frame)
                );
            }
            self.contend(node);
            return;
        }
        let src = frame.src as usize;
        // Power was evaluated at the frame start; stamp the sample there.
        let sample = RssSample {
            time: now - self.airtime(frame),
            power: r.power,
        };
        self.nodes[node].rss[src].record(sample.time, sample.power);
        if !to_me && frame.dst.is_some() {
            self.set_nav(node, now + frame.nav);
            return;
        }
        match frame.kind {
            FrameKind::Rts => {
                let d = &mut self.nodes[node].dcf;
                if !d.in_exchange()
                    && !d.responding
                    && d.nav_until <= now
                    && !d.is_transmitting(now)
                {
                    d.responding = true;
                    let cts = AirFrame {
                        kind: FrameKind::Cts,
                        src: me,
                        dst: Some(frame.src),
                        seq: frame.seq,
                        nav: frame.nav - t.t_sifs - t.t_cts,
                        packet: None,
                    };
                    self.sched
                        .schedule(Event::Respond { node, frame: cts }, t.t_sifs);
                }
            }
            FrameKind::Cts => {
                let d = &mut self.nodes[node].dcf;
                if let Some(h) = d.hol.as_mut() {
                    if let Phase::WaitCts(hd) = h.phase {
                        if h.out.next_hop == Some(frame.src) {
                            self.sched.cancel(hd);
                            h.phase = Phase::CtsReceived;
                            self.sched.schedule(Event::SendData { node }, t.t_sifs);
                        }
                    }
                }
            }
            FrameKind::Ack => {
                let d = &mut self.nodes[node].dcf;
                let done = match d.hol.as_ref() {
                    Some(h) => {
                        matches!(h.phase, Phase::WaitAck(_)) && h.out.next_hop == Some(frame.src)
                    }
                    None => false,
                };
                if done {
                    if let Some(Phase::WaitAck(hd)) = d.hol.as_ref().map(|h| h.phase) {
                        self.sched.cancel(hd);
                    }
                    self.nodes[node].dcf.hol = None;
                    self.nodes[node].agent.on_link_success(frame.src);
                    self.try_start_hol(node);
                }
            }
            FrameKind::Data => {
                let Some(packet) = frame.packet.clone() else {
                    return;
                };
                if to_me {
                    let d = &mut self.nodes[node].dcf;
                    d.responding = true;
                    let ack = AirFrame {
                        kind: FrameKind::Ack,
                        src: me,
                        dst: Some(frame.src),
                        seq: frame.seq,
                        nav: 0.0,
                        packet: None,
                    };
                    self.sched
                        .schedule(Event::Respond { node, frame: ack }, t.t_sifs);
                    if d.last_rx_seq[src] == Some(frame.seq) {
                        self.metrics.mac_drop(DropKind::Duplicate);
                        trace!(
                            self,
                            Some(me),
                            "mac-drop",
                            "Duplicate {}",
                            frame_label(frame)
                        );
                        return;
                    }
                    d.last_rx_seq[src] = Some(frame.seq);
                    if let Some(h) = self.nodes[src].dcf.hol.as_mut() {
                        if h.seq == frame.seq {
                            h.handed_off = true;
                        }
                    }
                }
                trace!(
                    self,
                    Some(me),
                    "rx",
                    "{} pr={:e}",
                    frame_label(frame),
                    r.power
                );
                self.deliver_up(node, frame.src, packet, sample);
            }
        }
    }

    fn send_data(&mut self, node: usize) {
        let d = &mut self.nodes[node].dcf;
        let Some(h) = d.hol.as_mut() else {
            return;
        };
        if h.phase != Phase::CtsReceived {
            return;
        }
        h.phase = Phase::SendingData;
        let frame = AirFrame {
            kind: FrameKind::Data,
            src: node as NodeId,
            dst: h.out.next_hop,
            seq: h.seq,
            nav: self.cfg.mac.t_sifs + self.cfg.mac.t_ack,
            packet: Some(h.out.packet.clone()),
        };
        let dur = self.airtime(&frame);
        self.transmit(node, frame, dur, TxRole::HeadOfLine);
    }

    fn attempt_failed(&mut self, node: usize) {
        let now = self.now();
        let limit = self.cfg.mac.retry_limit;
        let cw_max = self.cfg.mac.cw_max;
        let d = &mut self.nodes[node].dcf;
        let Some(h) = d.hol.as_mut() else {
            return;
        };
        h.retries += 1;
        if h.retries < limit {
            h.cw = next_cw(h.cw, cw_max);
            h.backoff_slots = self.rng.gen_range(0..=h.cw);
            h.attempt_since = now;
            h.phase = Phase::Contend;
            self.contend(node);
            return;
        }
        let h = d.hol.take().expect("hol present");
        self.metrics.mac_drop(DropKind::RetryExceed);
        let nh = h.out.next_hop.expect("unicast frames only time out");
        let node_ref = &mut self.nodes[node];
        let reason = failure_reason(&node_ref.rss[nh as usize], now, self.cfg.radio.rx_threshold);
        let failure = XmitFailure {
            neighbor: nh,
            reason,
            drop_kind: DropKind::RetryExceed,
        };
        trace!(
            self,
            Some(node as NodeId),
            "mac-drop",
            "RetryExceed dst={nh} pkt={} reason={reason:?}",
            h.out.packet.kind()
        );
        let packet = (!h.handed_off).then_some(h.out.packet);
        let node_ref = &mut self.nodes[node];
        let (decision, actions) =
            node_ref
                .agent
                .handle_mac_failure(now, &failure, packet, &mut node_ref.dcf.queue);
        if decision == FailureDecision::Repair {
            self.metrics.repair_decisions += 1;
        }
        self.apply(node, actions);
        self.try_start_hol(node);
    }

    fn deliver_up(&mut self, node: usize, from: NodeId, packet: Packet, rss: RssSample) {
        let now = self.now();
        let n = &mut self.nodes[node];
        let link_fpd = fpd(link_quality(rss.power), n.dcf.estimator.mac_overhead());
        let actions = n
            .agent
            .recv(now, from, packet, rss, &mut n.rss[from as usize], link_fpd);
        self.apply(node, actions);
    }
}

fn routing_kind(p: &Packet) -> Option<&'static str> {
    match p.payload {
        Payload::Data(_) => None,
        _ => Some(p.kind()),
    }
}

/// Convenience: build and run one scenario to its configured duration.
pub fn run_scenario(
    scenario: &Scenario,
    cfg: SimConfig,
    trace: Option<Trace>,
) -> (MetricCounters, Vec<u8>) {
    let mut sim = Simulation::new(scenario, cfg, trace);
    sim.run_until(scenario.duration);
    sim.finish()
}
