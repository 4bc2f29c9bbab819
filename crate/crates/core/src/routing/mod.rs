//! AODV and its two predictive variants.
//!
//! * `Aodv`: on-demand discovery, local repair and RERR.
//! * `PpAodv`: adds RSS-based link-failure prediction and WARN packets that
//!   trigger a preemptive discovery at the source.
//! * `LoPpAodv`: additionally accumulates the fpd metric in RREQs, lets the
//!   destination pick the best path after a collection window, and suppresses
//!   repair when a MAC failure looks like congestion rather than a break.

mod agent;
mod messages;
mod table;

use std::fmt;
use std::str::FromStr;

pub use agent::{
    select_route, Action, Agent, Candidate, DataDrop, DiscoveryKind, FailureDecision, Note,
    RouteTimer, RreqCollector, RreqOutcome,
};
pub use messages::{
    DataPacket, Packet, Payload, RerrMessage, RrepMessage, RreqMessage, WarnMessage, WireError,
    FPD_SENTINEL, RREQ_TYPE, RREQ_WIRE_LEN,
};
pub use table::{RouteEntry, RouteState, RouteTable, RouteUpdate};

use crate::mac::MacTimings;
use crate::radio::LinkQuality;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Protocol {
    Aodv,
    PpAodv,
    LoPpAodv,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Aodv, Protocol::PpAodv, Protocol::LoPpAodv];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Aodv => "aodv",
            Protocol::PpAodv => "ppaodv",
            Protocol::LoPpAodv => "lo-ppaodv",
        }
    }

    pub fn predicts(self) -> bool {
        self != Protocol::Aodv
    }

    pub fn uses_fpd(self) -> bool {
        self == Protocol::LoPpAodv
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "aodv" => Ok(Protocol::Aodv),
            "ppaodv" => Ok(Protocol::PpAodv),
            "lo-ppaodv" | "loppaodv" | "lo_ppaodv" => Ok(Protocol::LoPpAodv),
            other => Err(format!(
                "unknown protocol '{other}' (aodv, ppaodv, lo-ppaodv)"
            )),
        }
    }
}

/// One-hop transmission times of the control packets that make up a
/// preemptive discovery.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneHopTimes {
    pub t_warning: f64,
    pub t_rreq: f64,
    pub t_rrep: f64,
}

impl OneHopTimes {
    pub fn from_mac(t: &MacTimings) -> Self {
        OneHopTimes {
            t_warning: t.unicast_service_time(Packet::warn_size()),
            t_rreq: t.broadcast_service_time(Packet::rreq_size()),
            t_rrep: t.unicast_service_time(Packet::rrep_size()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoutingConfig {
    pub protocol: Protocol,
    pub route_lifetime: f64,
    pub rreq_retries: u32,
    /// Wait for the first RREP; doubles on each retry.
    pub rreq_timeout: f64,
    pub collection_window: f64,
    /// Upper bound of the uniform delay before rebroadcasting.
    pub broadcast_jitter: f64,
    pub warn_cooldown: f64,
    pub congestion_backoff: f64,
    /// Largest backoff exponent before a suppressed failure escalates to repair.
    pub max_suppressions: u32,
    pub max_repair_ttl: u32,
    pub local_add_ttl: u32,
    pub node_traversal_time: f64,
    pub net_diameter: u8,
    pub send_buffer: usize,
    pub rx_threshold: f64,
    pub safety_margin: f64,
    pub one_hop: OneHopTimes,
}

impl RoutingConfig {
    pub fn new(protocol: Protocol, rx_threshold: f64, mac: &MacTimings) -> Self {
        RoutingConfig {
            protocol,
            route_lifetime: 10.0,
            rreq_retries: 2,
            rreq_timeout: 1.0,
            collection_window: 0.1,
            broadcast_jitter: 0.01,
            warn_cooldown: 2.0,
            congestion_backoff: 0.05,
            max_suppressions: 3,
            max_repair_ttl: 3,
            local_add_ttl: 2,
            node_traversal_time: 0.04,
            net_diameter: 35,
            send_buffer: 64,
            rx_threshold,
            safety_margin: 1.0,
            one_hop: OneHopTimes::from_mac(mac),
        }
    }

    pub fn prediction_threshold(&self) -> f64 {
        self.rx_threshold * self.safety_margin
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("route_lifetime", self.route_lifetime),
            ("rreq_timeout", self.rreq_timeout),
            ("collection_window", self.collection_window),
            ("congestion_backoff", self.congestion_backoff),
            ("node_traversal_time", self.node_traversal_time),
            ("safety_margin", self.safety_margin),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| !(*v > 0.0)) {
            return Err(format!("{name} must be > 0"));
        }
        if self.broadcast_jitter < 0.0 || self.warn_cooldown < 0.0 {
            return Err("broadcast_jitter and warn_cooldown must be >= 0".into());
        }
        if self.send_buffer == 0 {
            return Err("send_buffer must be >= 1".into());
        }
        if self.net_diameter == 0 {
            return Err("net_diameter must be >= 1".into());
        }
        Ok(())
    }
}

/// Link cost `Lq / OH_MAC`.
pub fn fpd(lq: LinkQuality, oh_mac: f64) -> f64 {
    assert!(
        oh_mac > 0.0,
        "fpd: MAC overhead must be positive, got {oh_mac}"
    );
    lq.lq() / oh_mac
}
