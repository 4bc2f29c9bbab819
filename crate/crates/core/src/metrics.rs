//! Per-run counters and the derived performance metrics.

use thiserror::Error;

use crate::mac::DropKind;
use crate::routing::DataDrop;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricCounters {
    pub data_generated: u64,
    pub data_delivered: u64,
    /// Generation-to-delivery latency of each delivered packet, in delivery order.
    pub latencies: Vec<f64>,
    /// Per-hop transmissions of RREQ, RREP, RERR and WARN packets.
    pub routing_packets_transmitted: u64,
    pub rreq_sent: u64,
    pub rrep_sent: u64,
    pub rerr_sent: u64,
    pub warn_sent: u64,
    /// Repair processes executed after a MAC failure.
    pub route_errors: u64,
    /// Repair decisions returned by the routing layer; equals `route_errors`.
    pub repair_decisions: u64,
    /// Indexed by [`DropKind::index`].
    pub mac_drops: [u64; 4],
    pub mac_drops_total: u64,
    pub data_retry_exceed: u64,
    pub data_queue_full: u64,
    pub data_no_route: u64,
    /// Data packets still inside the network when the run ended.
    pub data_in_flight: u64,
    /// Warnings originated by predicting nodes.
    pub warnings_sent: u64,
    pub repairs_suppressed: u64,
    /// RERR packets caused directly by a failure classified as HighRss.
    pub rerr_high_rss: u64,
    pub rreq_originated: u64,
    pub preemptive_discoveries: u64,
}

impl MetricCounters {
    pub fn mac_drop(&mut self, kind: DropKind) {
        self.mac_drops[kind.index()] += 1;
        self.mac_drops_total += 1;
    }

    pub fn mac_drops_of(&self, kind: DropKind) -> u64 {
        self.mac_drops[kind.index()]
    }

    pub fn data_drop(&mut self, cause: DataDrop) {
        match cause {
            DataDrop::RetryExceed => self.data_retry_exceed += 1,
            DataDrop::QueueFull => self.data_queue_full += 1,
            DataDrop::NoRoute => self.data_no_route += 1,
        }
    }

    pub fn data_dropped(&self) -> u64 {
        self.data_retry_exceed + self.data_queue_full + self.data_no_route
    }

    pub fn delivered(&mut self, latency: f64) {
        self.data_delivered += 1;
        self.latencies.push(latency);
    }
}

/// Delivered over generated; absent when nothing was generated.
pub fn packet_delivery_fraction(c: &MetricCounters) -> Option<f64> {
    (c.data_generated > 0).then(|| c.data_delivered as f64 / c.data_generated as f64)
}

/// Mean latency of delivered packets; absent when none was delivered.
pub fn average_e2e_delay(c: &MetricCounters) -> Option<f64> {
    if c.latencies.is_empty() {
        return None;
    }
    Some(c.latencies.iter().sum::<f64>() / c.latencies.len() as f64)
}

/// Routing transmissions per delivered data packet; absent when none was delivered.
pub fn normalized_routing_load(c: &MetricCounters) -> Option<f64> {
    (c.data_delivered > 0).then(|| c.routing_packets_transmitted as f64 / c.data_delivered as f64)
}

#[derive(Debug, Error, PartialEq)]
pub enum AuditError {
    #[error(
        "conservation violated: generated {generated} != delivered {delivered} + in flight {in_flight} + dropped {dropped}"
    )]
    Conservation {
        generated: u64,
        delivered: u64,
        in_flight: u64,
        dropped: u64,
    },
    #[error("MAC drop tallies sum to {sum}, total is {total}")]
    MacDrops { sum: u64, total: u64 },
    #[error("route errors {route_errors} != repair decisions {repairs}")]
    RouteErrors { route_errors: u64, repairs: u64 },
    #[error("{delivered} deliveries but {latencies} latencies recorded")]
    Latencies { delivered: u64, latencies: usize },
}

/// End-of-run bookkeeping identities.
pub fn audit(c: &MetricCounters) -> Result<(), AuditError> {
    let dropped = c.data_dropped();
    if c.data_generated != c.data_delivered + c.data_in_flight + dropped {
        return Err(AuditError::Conservation {
            generated: c.data_generated,
            delivered: c.data_delivered,
            in_flight: c.data_in_flight,
            dropped,
        });
    }
    let sum: u64 = c.mac_drops.iter().sum();
    if sum != c.mac_drops_total {
        return Err(AuditError::MacDrops {
            sum,
            total: c.mac_drops_total,
        });
    }
    if c.route_errors != c.repair_decisions {
        return Err(AuditError::RouteErrors {
            route_errors: c.route_errors,
            repairs: c.repair_decisions,
        });
    }
    if c.latencies.len() as u64 != c.data_delivered {
        return Err(AuditError::Latencies {
            delivered: c.data_delivered,
            latencies: c.latencies.len(),
        });
    }
    Ok(())
}
