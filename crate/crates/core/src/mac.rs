//! Simplified IEEE 802.11 DCF.
//!
//! Unicast frames always use RTS/CTS/DATA/ACK separated by SIFS; broadcasts
//! go out as a bare DATA frame. Channel access waits DIFS plus a backoff drawn
//! uniformly from `[0, CW]`, with CW doubling per failed attempt. The frame
//! exchange itself is driven by [`crate::sim`]; this module holds the timing
//! model, the MAC-overhead estimator, per-node DCF state and the failure
//! classification reported to routing.

use std::collections::VecDeque;

use crate::engine::EventHandle;
use crate::predict::{lagrange_predict, RssHistory};
use crate::routing::Packet;
use crate::NodeId;

/// Frame airtimes and contention constants, all in seconds except the
/// contention windows (slots) and the retry limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacTimings {
    pub t_rts: f64,
    pub t_cts: f64,
    pub t_ack: f64,
    pub t_sifs: f64,
    pub t_difs: f64,
    pub slot: f64,
    pub cw_min: u32,
    pub cw_max: u32,
    pub retry_limit: u32,
    /// PLCP preamble and header time prepended to every DATA frame.
    pub phy_overhead: f64,
    /// DATA payload bit rate, bits per second.
    pub data_rate: f64,
    pub mac_header_bytes: u32,
}

impl Default for MacTimings {
    fn default() -> Self {
        MacTimings {
            t_rts: 352e-6,
            t_cts: 304e-6,
            t_ack: 304e-6,
            t_sifs: 10e-6,
            t_difs: 50e-6,
            slot: 20e-6,
            cw_min: 31,
            cw_max: 1023,
            retry_limit: 7,
            phy_overhead: 192e-6,
            data_rate: 2e6,
            mac_header_bytes: 28,
        }
    }
}

impl MacTimings {
    pub fn validate(&self) -> Result<(), String> {
        let durations = [
            ("t_rts", self.t_rts),
            ("t_cts", self.t_cts),
            ("t_ack", self.t_ack),
            ("t_sifs", self.t_sifs),
            ("t_difs", self.t_difs),
            ("slot", self.slot),
            ("data_rate", self.data_rate),
        ];
        if let Some((name, _)) = durations.iter().find(|(_, v)| !(*v > 0.0)) {
            return Err(format!("{name} must be > 0"));
        }
        if self.phy_overhead < 0.0 {
            return Err("phy_overhead must be >= 0".into());
        }
        if self.cw_min > self.cw_max {
            return Err("cw_min must not exceed cw_max".into());
        }
        if self.retry_limit < 1 {
            return Err("retry_limit must be >= 1".into());
        }
        Ok(())
    }

    /// Airtime of a DATA frame carrying `bytes` of network-layer payload.
    pub fn data_airtime(&self, bytes: u32) -> f64 {
        self.phy_overhead + f64::from(self.mac_header_bytes + bytes) * 8.0 / self.data_rate
    }

    /// Mean backoff of a first attempt.
    pub fn mean_initial_backoff(&self) -> f64 {
        f64::from(self.cw_min) / 2.0 * self.slot
    }

    /// Expected one-hop service time of an uncontended unicast frame.
    pub fn unicast_service_time(&self, bytes: u32) -> f64 {
        self.t_difs
            + self.mean_initial_backoff()
            + self.t_rts
            + self.t_cts
            + self.data_airtime(bytes)
            + self.t_ack
            + 3.0 * self.t_sifs
    }

    /// Expected one-hop service time of an uncontended broadcast frame.
    pub fn broadcast_service_time(&self, bytes: u32) -> f64 {
        self.t_difs + self.mean_initial_backoff() + self.data_airtime(bytes)
    }
}

/// Channel occupation of one RTS/CTS exchange: `t_rts + t_cts + 3·t_sifs`.
pub fn channel_occupation(t: &MacTimings) -> f64 {
    t.t_rts + t.t_cts + 3.0 * t.t_sifs
}

/// Smoothed MAC overhead: the fixed channel occupation plus an EWMA of the
/// observed access-contention time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacOverheadEstimator {
    c_oc: f64,
    t_ac_ewma: f64,
    alpha: f64,
}

impl MacOverheadEstimator {
    pub fn new(c_oc: f64, alpha: f64) -> Self {
        assert!(c_oc > 0.0, "channel occupation must be positive");
        assert!(alpha > 0.0 && alpha <= 1.0, "alpha must lie in (0, 1]");
        MacOverheadEstimator {
            c_oc,
            t_ac_ewma: 0.0,
            alpha,
        }
    }

    pub fn for_timings(t: &MacTimings, alpha: f64) -> Self {
        Self::new(channel_occupation(t), alpha)
    }

    pub fn with_access_time(mut self, t_ac: f64) -> Self {
        assert!(t_ac >= 0.0);
        self.t_ac_ewma = t_ac;
        self
    }

    pub fn c_oc(&self) -> f64 {
        self.c_oc
    }

    pub fn t_ac(&self) -> f64 {
        self.t_ac_ewma
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn mac_overhead(&self) -> f64 {
        self.c_oc + self.t_ac_ewma
    }

    pub fn observe_access_contention(&mut self, sample: f64) {
        assert!(sample >= 0.0, "negative access-contention sample {sample}");
        self.t_ac_ewma = self.alpha * sample + (1.0 - self.alpha) * self.t_ac_ewma;
    }
}

pub fn mac_overhead(est: &MacOverheadEstimator) -> f64 {
    est.mac_overhead()
}

/// Functional form of [`MacOverheadEstimator::observe_access_contention`].
pub fn observe_access_contention(
    mut est: MacOverheadEstimator,
    sample: f64,
) -> MacOverheadEstimator {
    est.observe_access_contention(sample);
    est
}

/// Why a unicast transmission ultimately failed, as seen by the sender.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FailureReason {
    /// The neighbor's extrapolated RSS says it is still in range: congestion.
    HighRss,
    LowRssOrUnknown,
}

/// The four MAC drop categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DropKind {
    Collision,
    RetryExceed,
    MacBusy,
    Duplicate,
}

impl DropKind {
    pub const ALL: [DropKind; 4] = [
        DropKind::Collision,
        DropKind::RetryExceed,
        DropKind::MacBusy,
        DropKind::Duplicate,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            DropKind::Collision => "collision",
            DropKind::RetryExceed => "retry_exceed",
            DropKind::MacBusy => "mac_busy",
            DropKind::Duplicate => "duplicate",
        }
    }
}

/// Failure notification passed from MAC to routing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XmitFailure {
    pub neighbor: NodeId,
    pub reason: FailureReason,
    pub drop_kind: DropKind,
}

/// `HighRss` iff the history is full and its extrapolation to `now` is at or
/// above `rx_threshold`.
pub fn failure_reason(history: &RssHistory, now: f64, rx_threshold: f64) -> FailureReason {
    match lagrange_predict(history, now) {
        Ok(p) if p >= rx_threshold => FailureReason::HighRss,
        _ => FailureReason::LowRssOrUnknown,
    }
}

// ---------------------------------------------------------------------------
// Per-node DCF state, driven by the simulator.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameKind {
    Rts,
    Cts,
    Data,
    Ack,
}

impl FrameKind {
    pub fn name(self) -> &'static str {
        match self {
            FrameKind::Rts => "RTS",
            FrameKind::Cts => "CTS",
            FrameKind::Data => "DATA",
            FrameKind::Ack => "ACK",
        }
    }
}

/// A frame on the air. DATA frames carry a network-layer packet.
#[derive(Debug, Clone)]
pub struct AirFrame {
    pub kind: FrameKind,
    pub src: NodeId,
    /// `None` for broadcast.
    pub dst: Option<NodeId>,
    pub seq: u32,
    /// Virtual-carrier reservation following the end of this frame.
    pub nav: f64,
    pub packet: Option<Packet>,
}

/// A packet waiting in the interface queue.
#[derive(Debug, Clone)]
pub struct Outgoing {
    pub packet: Packet,
    /// `None` for broadcast.
    pub next_hop: Option<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Phase {
    Contend,
    SendingRts,
    WaitCts(EventHandle),
    /// CTS received; DATA goes out after SIFS.
    CtsReceived,
    SendingData,
    WaitAck(EventHandle),
    SendingBroadcast,
}

/// Head-of-line frame under service.
#[derive(Debug, Clone)]
pub struct HeadOfLine {
    pub out: Outgoing,
    pub seq: u32,
    pub retries: u32,
    pub cw: u32,
    pub backoff_slots: u32,
    /// Start of the current access attempt (HOL arrival or last failure).
    pub attempt_since: f64,
    pub phase: Phase,
    /// Set once the receiver accepted the DATA frame; the sender's copy is
    /// then only kept for ACK bookkeeping.
    pub handed_off: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct Reception {
    pub tx_id: u64,
    pub end: f64,
    pub power: f64,
    pub corrupted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxRole {
    HeadOfLine,
    Response,
}

/// What a node is doing at the MAC layer.
#[derive(Debug)]
pub struct DcfState {
    pub queue: VecDeque<Outgoing>,
    pub queue_limit: usize,
    pub hol: Option<HeadOfLine>,
    pub tx_until: f64,
    pub tx_role: Option<TxRole>,
    pub cs_busy_until: f64,
    pub nav_until: f64,
    pub rx: Option<Reception>,
    /// A CTS or ACK is scheduled SIFS from now.
    pub responding: bool,
    pub access_timer: Option<(EventHandle, f64)>,
    pub check_timer: Option<(EventHandle, f64)>,
    pub next_seq: u32,
    /// Last DATA sequence number accepted per sender, for duplicate detection.
    pub last_rx_seq: Vec<Option<u32>>,
    pub estimator: MacOverheadEstimator,
}

impl DcfState {
    pub fn new(node_count: usize, queue_limit: usize, estimator: MacOverheadEstimator) -> Self {
        DcfState {
            queue: VecDeque::new(),
            queue_limit,
            hol: None,
            tx_until: 0.0,
            tx_role: None,
            cs_busy_until: 0.0,
            nav_until: 0.0,
            rx: None,
            responding: false,
            access_timer: None,
            check_timer: None,
            next_seq: 0,
            last_rx_seq: vec![None; node_count],
            estimator,
        }
    }

    /// Earliest time the medium can be idle from this node's perspective.
    pub fn idle_at(&self) -> f64 {
        self.tx_until.max(self.cs_busy_until).max(self.nav_until)
    }

    pub fn is_transmitting(&self, now: f64) -> bool {
        self.tx_until > now
    }

    /// Whether a reception is still in progress at `now`.
    pub fn receiving(&self, now: f64) -> bool {
        self.rx.is_some_and(|r| r.end > now)
    }

    /// Busy in its own frame exchange, so it cannot answer an RTS.
    pub fn in_exchange(&self) -> bool {
        matches!(
            self.hol.as_ref().map(|h| h.phase),
            Some(
                Phase::SendingRts
                    | Phase::WaitCts(_)
                    | Phase::CtsReceived
                    | Phase::SendingData
                    | Phase::WaitAck(_)
                    | Phase::SendingBroadcast
            )
        )
    }

    pub fn take_seq(&mut self) -> u32 {
        let s = self.next_seq;
        self.next_seq = self.next_seq.wrapping_add(1);
        s
    }
}

/// Slots remaining after a countdown that began at `countdown_start` is
/// frozen at `now`.
pub fn frozen_backoff(slots: u32, countdown_start: f64, now: f64, slot: f64) -> u32 {
    if now <= countdown_start {
        return slots;
    }
    // Only whole slots count as elapsed.
    let elapsed = ((now - countdown_start) / slot + 1e-9).floor() as u64;
    slots.saturating_sub(elapsed.min(u64::from(u32::MAX)) as u32)
}

/// Contention window after one more failed attempt.
pub fn next_cw(cw: u32, cw_max: u32) -> u32 {
    (cw.saturating_mul(2).saturating_add(1)).min(cw_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn channel_occupation_examples() {
        let t = MacTimings::default();
        assert_relative_eq!(channel_occupation(&t), 686e-6, max_relative = 1e-12);
        let doubled = MacTimings {
            t_rts: 2.0 * t.t_rts,
            t_cts: 2.0 * t.t_cts,
            t_sifs: 2.0 * t.t_sifs,
            ..t
        };
        assert_relative_eq!(
            channel_occupation(&doubled),
            2.0 * 686e-6,
            max_relative = 1e-12
        );
        // t_sifs is validated positive, but the formula itself is plain arithmetic.
        let no_sifs = MacTimings { t_sifs: 0.0, ..t };
        assert_relative_eq!(channel_occupation(&no_sifs), 656e-6, max_relative = 1e-12);
    }

    #[test]
    fn mac_overhead_examples() {
        let est = MacOverheadEstimator::new(686e-6, 0.5);
        assert_relative_eq!(mac_overhead(&est), 686e-6, max_relative = 1e-12);
        let busy = est.with_access_time(1.2e-3);
        assert_relative_eq!(mac_overhead(&busy), 1.886e-3, max_relative = 1e-12);
    }

    #[test]
    fn ewma_examples() {
        let est = MacOverheadEstimator::new(686e-6, 0.5);
        let e1 = observe_access_contention(est, 2e-3);
        assert_relative_eq!(e1.t_ac(), 1e-3, max_relative = 1e-12);
        let e2 = observe_access_contention(e1, 1e-3);
        assert_eq!(e2.t_ac(), 1e-3);
        // Geometric series: after n samples of s from zero, ewma = s(1 - (1-a)^n).
        let mut e = est;
        for _ in 0..60 {
            e.observe_access_contention(5e-3);
        }
        assert_relative_eq!(
            e.t_ac(),
            5e-3 * (1.0 - 0.5f64.powi(60)),
            max_relative = 1e-12
        );
    }

    #[test]
    #[should_panic(expected = "negative access-contention")]
    fn negative_sample_faults() {
        MacOverheadEstimator::new(686e-6, 0.5).observe_access_contention(-1.0);
    }

    #[test]
    fn overhead_grows_under_rising_contention() {
        let mut e = MacOverheadEstimator::new(686e-6, 0.5);
        let mut prev = e.mac_overhead();
        for k in 1..20 {
            e.observe_access_contention(k as f64 * 1e-3);
            assert!(e.mac_overhead() > prev);
            prev = e.mac_overhead();
        }
    }

    #[test]
    fn failure_reason_examples() {
        let thr = 3.65e-10;
        assert_eq!(
            failure_reason(&RssHistory::new(), 1.0, thr),
            FailureReason::LowRssOrUnknown
        );
        let steady =
            RssHistory::from_samples(&[(0.0, 10.0 * thr), (1.0, 10.0 * thr), (2.0, 10.0 * thr)]);
        assert_eq!(failure_reason(&steady, 3.0, thr), FailureReason::HighRss);
        // Samples on P(t) = 2.5·thr/t at t = 1, 2, 3. The quadratic through
        // them is thr·(0.41667t² - 2.91667t + 5), so P(3.2) = 0.85·thr.
        let c = 2.5 * thr;
        let decaying = RssHistory::from_samples(&[(1.0, c), (2.0, c / 2.0), (3.0, c / 3.0)]);
        let p = lagrange_predict(&decaying, 3.2).unwrap();
        assert_relative_eq!(p / thr, 0.85, max_relative = 1e-9);
        assert_eq!(
            failure_reason(&decaying, 3.2, thr),
            FailureReason::LowRssOrUnknown
        );
        let partial = RssHistory::from_samples(&[(0.0, 10.0 * thr), (1.0, 10.0 * thr)]);
        assert_eq!(
            failure_reason(&partial, 1.5, thr),
            FailureReason::LowRssOrUnknown
        );
    }

    #[test]
    fn backoff_freeze_counts_whole_slots() {
        let slot = 20e-6;
        assert_eq!(frozen_backoff(10, 1.0, 1.0 + 3.5 * slot, slot), 7);
        assert_eq!(frozen_backoff(10, 1.0, 0.9, slot), 10);
        assert_eq!(frozen_backoff(2, 1.0, 1.0 + 9.0 * slot, slot), 0);
    }

    #[test]
    fn cw_doubles_to_cap() {
        let mut cw = 31;
        let seq: Vec<u32> = (0..7)
            .map(|_| {
                cw = next_cw(cw, 1023);
                cw
            })
            .collect();
        assert_eq!(seq, vec![63, 127, 255, 511, 1023, 1023, 1023]);
    }

    #[test]
    fn service_times() {
        let t = MacTimings::default();
        // 192 µs PLCP + (28 + 20 + 512) bytes at 2 Mb/s.
        assert_relative_eq!(
            t.data_airtime(532),
            192e-6 + 560.0 * 4e-6,
            max_relative = 1e-12
        );
        let uni = t.unicast_service_time(40);
        assert_relative_eq!(
            uni,
            50e-6 + 310e-6 + 352e-6 + 304e-6 + t.data_airtime(40) + 304e-6 + 30e-6,
            max_relative = 1e-12
        );
    }

    proptest! {
        #[test]
        fn channel_occupation_closed_form(rts in 1e-6f64..1e-2, cts in 1e-6f64..1e-2, sifs in 1e-7f64..1e-3) {
            let t = MacTimings { t_rts: rts, t_cts: cts, t_sifs: sifs, ..MacTimings::default() };
            let hand = rts + cts + 3.0 * sifs;
            prop_assert!(((channel_occupation(&t) - hand) / hand).abs() < 1e-12);
        }
    }
}
