//! Deterministic discrete-event simulator for mobile ad-hoc networks running
//! AODV, PPAODV or LO-PPAODV over a two-ray-ground radio and a simplified
//! 802.11 DCF MAC.

pub mod config;
pub mod engine;
pub mod experiment;
pub mod mac;
pub mod metrics;
pub mod predict;
pub mod radio;
pub mod routing;
pub mod scenario;
pub mod sim;

/// Node address; nodes are numbered densely from 0.
pub type NodeId = u32;
