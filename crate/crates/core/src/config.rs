//! Run configuration: a plain `key = value` file with `#` comments and
//! comma-separated lists. Every key is optional.

use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::mac::MacTimings;
use crate::predict::DEFAULT_COALESCE_EPSILON;
use crate::radio::RadioParams;
use crate::routing::{Protocol, RoutingConfig};
use crate::scenario::ScenarioSpec;
use crate::sim::SimConfig;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("invalid value for '{field}': {msg}")]
    Invalid { field: String, msg: String },
}

impl ConfigError {
    fn invalid(field: &str, msg: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.to_string(),
            msg: msg.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Base scenario; `pause_time`, `source_count` and `seed` are set per run.
    pub scenario: ScenarioSpec,
    pub radio: RadioParams,
    pub mac: MacTimings,
    pub queue_len: usize,
    pub ewma_alpha: f64,
    pub coalesce_epsilon: f64,
    pub capture_threshold: Option<f64>,
    /// Protocol-independent routing constants; `protocol`, `rx_threshold`
    /// and the one-hop times are filled in per run.
    pub routing: RoutingConfig,
    pub protocols: Vec<Protocol>,
    pub pause_times: Vec<f64>,
    pub source_counts: Vec<usize>,
    pub seeds: Vec<u64>,
    pub output: Option<PathBuf>,
    /// Scripted scenario replacing the generated ones.
    pub scenario_file: Option<PathBuf>,
    pub trace: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let radio = RadioParams::default();
        let mac = MacTimings::default();
        RunConfig {
            scenario: ScenarioSpec::default(),
            radio,
            mac,
            queue_len: 50,
            ewma_alpha: 0.5,
            coalesce_epsilon: DEFAULT_COALESCE_EPSILON,
            capture_threshold: None,
            routing: RoutingConfig::new(Protocol::LoPpAodv, radio.rx_threshold, &mac),
            protocols: Protocol::ALL.to_vec(),
            pause_times: vec![0.0, 20.0, 40.0, 80.0, 200.0],
            source_counts: vec![40],
            seeds: vec![1, 2, 3, 4, 5],
            output: None,
            scenario_file: None,
            trace: None,
        }
    }
}

impl RunConfig {
    /// Engine configuration for one run.
    pub fn sim_config(&self, protocol: Protocol, seed: u64) -> SimConfig {
        let mut routing = self.routing;
        routing.protocol = protocol;
        let derived = RoutingConfig::new(protocol, self.radio.rx_threshold, &self.mac);
        routing.rx_threshold = derived.rx_threshold;
        routing.one_hop = derived.one_hop;
        SimConfig {
            radio: self.radio,
            mac: self.mac,
            queue_len: self.queue_len,
            ewma_alpha: self.ewma_alpha,
            coalesce_epsilon: self.coalesce_epsilon,
            capture_threshold: self.capture_threshold,
            routing,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (field, empty) in [
            ("protocols", self.protocols.is_empty()),
            ("pause_times", self.pause_times.is_empty()),
            ("source_counts", self.source_counts.is_empty()),
            ("seeds", self.seeds.is_empty()),
        ] {
            if empty {
                return Err(ConfigError::invalid(field, "sweep list is empty"));
            }
        }
        let s = &self.scenario;
        let checks: [(&str, bool, &str); 9] = [
            ("nodes", s.node_count >= 2, "need at least 2 nodes"),
            ("width", s.area.width > 0.0, "must be > 0"),
            ("height", s.area.height > 0.0, "must be > 0"),
            ("duration", s.duration > 0.0, "must be > 0"),
            ("v_min", s.v_min > 0.0, "must be > 0"),
            ("v_max", s.v_max >= s.v_min, "must be >= v_min"),
            ("rate", s.rate > 0.0, "must be > 0"),
            ("start_spread", s.start_spread >= 0.0, "must be >= 0"),
            ("payload", s.payload > 0, "must be > 0"),
        ];
        for (field, ok, msg) in checks {
            if !ok {
                return Err(ConfigError::invalid(field, msg));
            }
        }
        if let Some(p) = self.pause_times.iter().find(|p| !(**p >= 0.0)) {
            return Err(ConfigError::invalid(
                "pause_times",
                format!("{p} is negative"),
            ));
        }
        let pairs = s.node_count * (s.node_count - 1);
        if let Some(c) = self.source_counts.iter().find(|c| **c > pairs) {
            return Err(ConfigError::invalid(
                "source_counts",
                format!("{c} exceeds the {pairs} distinct node pairs"),
            ));
        }
        if let Some(f) = &self.scenario_file {
            if !f.exists() {
                return Err(ConfigError::invalid(
                    "scenario",
                    format!("{} does not exist", f.display()),
                ));
            }
        }
        let sim = self.sim_config(self.protocols[0], 0);
        sim.validate().map_err(|m| {
            let field = m.split_whitespace().next().unwrap_or("config").to_string();
            ConfigError::Invalid { field, msg: m }
        })
    }
}

fn scalar<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| ConfigError::Line {
        line,
        msg: format!(
            "{key}: cannot parse '{v}' as {}",
            std::any::type_name::<T>()
        ),
    })
}

fn list<T: FromStr>(line: usize, key: &str, v: &str) -> Result<Vec<T>, ConfigError> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| scalar(line, key, s))
        .collect()
}

fn protocols(line: usize, v: &str) -> Result<Vec<Protocol>, ConfigError> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|msg| ConfigError::Line { line, msg }))
        .collect()
}

/// Parse a config file, then validate it.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut c = RunConfig::default();
    let mut rx_set = false;
    let mut cs_set = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((k, v)) = body.split_once('=') else {
            return Err(ConfigError::Line {
                line,
                msg: format!("expected 'key = value', got '{body}'"),
            });
        };
        let (k, v) = (k.trim(), v.trim());
        if v.is_empty() {
            return Err(ConfigError::Line {
                line,
                msg: format!("{k}: missing value"),
            });
        }
        let r = &mut c.routing;
        let m = &mut c.mac;
        let s = &mut c.scenario;
        match k {
            "nodes" => s.node_count = scalar(line, k, v)?,
            "width" => s.area.width = scalar(line, k, v)?,
            "height" => s.area.height = scalar(line, k, v)?,
            "duration" => s.duration = scalar(line, k, v)?,
            "v_min" => s.v_min = scalar(line, k, v)?,
            "v_max" => s.v_max = scalar(line, k, v)?,
            "rate" => s.rate = scalar(line, k, v)?,
            "payload" => s.payload = scalar(line, k, v)?,
            "start_spread" => s.start_spread = scalar(line, k, v)?,

            "protocol" | "protocols" => c.protocols = protocols(line, v)?,
            "pause_times" | "pause" => c.pause_times = list(line, k, v)?,
            "source_counts" | "sources" => c.source_counts = list(line, k, v)?,
            "seeds" | "seed" => c.seeds = list(line, k, v)?,
            "output" | "out" => c.output = Some(PathBuf::from(v)),
            "scenario" => c.scenario_file = Some(PathBuf::from(v)),
            "trace" => c.trace = Some(PathBuf::from(v)),

            "tx_power" => c.radio.tx_power = scalar(line, k, v)?,
            "tx_gain" => c.radio.tx_gain = scalar(line, k, v)?,
            "rx_gain" => c.radio.rx_gain = scalar(line, k, v)?,
            "tx_height" => c.radio.tx_height = scalar(line, k, v)?,
            "rx_height" => c.radio.rx_height = scalar(line, k, v)?,
            "system_loss" => c.radio.system_loss = scalar(line, k, v)?,
            "rx_threshold" => {
                c.radio.rx_threshold = scalar(line, k, v)?;
                rx_set = true;
            }
            "cs_threshold" => {
                c.radio.cs_threshold = scalar(line, k, v)?;
                cs_set = true;
            }
            "crossover_frequency" => c.radio.crossover_frequency = Some(scalar(line, k, v)?),

            "t_rts" => m.t_rts = scalar(line, k, v)?,
            "t_cts" => m.t_cts = scalar(line, k, v)?,
            "t_ack" => m.t_ack = scalar(line, k, v)?,
            "t_sifs" => m.t_sifs = scalar(line, k, v)?,
            "t_difs" => m.t_difs = scalar(line, k, v)?,
            "slot" => m.slot = scalar(line, k, v)?,
            "cw_min" => m.cw_min = scalar(line, k, v)?,
            "cw_max" => m.cw_max = scalar(line, k, v)?,
            "retry_limit" => m.retry_limit = scalar(line, k, v)?,
            "phy_overhead" => m.phy_overhead = scalar(line, k, v)?,
            "data_rate" => m.data_rate = scalar(line, k, v)?,
            "mac_header_bytes" => m.mac_header_bytes = scalar(line, k, v)?,
            "capture_threshold" => c.capture_threshold = Some(scalar(line, k, v)?),
            "queue_len" => c.queue_len = scalar(line, k, v)?,
            "ewma_alpha" => c.ewma_alpha = scalar(line, k, v)?,

            "route_lifetime" => r.route_lifetime = scalar(line, k, v)?,
            "rreq_retries" => r.rreq_retries = scalar(line, k, v)?,
            "rreq_timeout" => r.rreq_timeout = scalar(line, k, v)?,
            "collection_window" => r.collection_window = scalar(line, k, v)?,
            "broadcast_jitter" => r.broadcast_jitter = scalar(line, k, v)?,
            "warn_cooldown" => r.warn_cooldown = scalar(line, k, v)?,
            "congestion_backoff" => r.congestion_backoff = scalar(line, k, v)?,
            "max_suppressions" => r.max_suppressions = scalar(line, k, v)?,
            "max_repair_ttl" => r.max_repair_ttl = scalar(line, k, v)?,
            "local_add_ttl" => r.local_add_ttl = scalar(line, k, v)?,
            "node_traversal_time" => r.node_traversal_time = scalar(line, k, v)?,
            "net_diameter" => r.net_diameter = scalar(line, k, v)?,
            "send_buffer" => r.send_buffer = scalar(line, k, v)?,
            "safety_margin" => r.safety_margin = scalar(line, k, v)?,
            "coalesce_epsilon" => c.coalesce_epsilon = scalar(line, k, v)?,
            other => {
                return Err(ConfigError::Line {
                    line,
                    msg: format!("unknown key '{other}'"),
                })
            }
        }
    }
    // Thresholds follow the radio unless pinned explicitly.
    let nominal = RadioParams {
        rx_threshold: 0.0,
        cs_threshold: 0.0,
        ..c.radio
    };
    if !rx_set {
        c.radio.rx_threshold =
            crate::radio::received_power(&nominal, crate::radio::DEFAULT_RX_RANGE);
    }
    if !cs_set {
        c.radio.cs_threshold =
            crate::radio::received_power(&nominal, crate::radio::DEFAULT_CS_RANGE);
    }
    c.validate()?;
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.scenario.node_count, 50);
        assert_eq!(c.scenario.duration, 200.0);
        assert_eq!(c.scenario.rate, 4.0);
        assert_eq!(
            (c.scenario.area.width, c.scenario.area.height),
            (1500.0, 300.0)
        );
    }

    #[test]
    fn pause_list_parses() {
        let c = parse_config("pause_times = 0,20,40,80,200  # five points\n").unwrap();
        assert_eq!(c.pause_times, vec![0.0, 20.0, 40.0, 80.0, 200.0]);
    }

    #[test]
    fn negative_nodes_rejected_with_line() {
        let e = parse_config("# header\nnodes = -5\n").unwrap_err();
        assert!(matches!(e, ConfigError::Line { line: 2, .. }), "{e}");
        assert!(e.to_string().contains("nodes"));
    }

    #[test]
    fn invalid_values_name_the_field() {
        let e = parse_config("nodes = 1").unwrap_err();
        assert_eq!(e, ConfigError::invalid("nodes", "need at least 2 nodes"));
        let e = parse_config("seeds = ,").unwrap_err();
        assert!(e.to_string().contains("seeds"), "{e}");
        let e = parse_config("ewma_alpha = 0").unwrap_err();
        assert!(e.to_string().contains("ewma_alpha"), "{e}");
    }

    #[test]
    fn unknown_and_malformed_lines() {
        assert_eq!(
            parse_config("\n\nspeed_of_light = 3").unwrap_err(),
            ConfigError::Line {
                line: 3,
                msg: "unknown key 'speed_of_light'".into()
            }
        );
        assert!(matches!(
            parse_config("nodes 50").unwrap_err(),
            ConfigError::Line { line: 1, .. }
        ));
        assert!(matches!(
            parse_config("protocols = aodv, olsr").unwrap_err(),
            ConfigError::Line { line: 1, .. }
        ));
    }

    #[test]
    fn thresholds_track_radio_changes() {
        let c = parse_config("tx_power = 0.5").unwrap();
        let r = RadioParams {
            tx_power: 0.5,
            ..RadioParams::default()
        };
        assert!(
            (c.radio.rx_threshold / crate::radio::received_power(&r, 250.0) - 1.0).abs() < 1e-12
        );
        let pinned = parse_config("tx_power = 0.5\nrx_threshold = 1e-9").unwrap();
        assert_eq!(pinned.radio.rx_threshold, 1e-9);
        let sim = pinned.sim_config(Protocol::PpAodv, 3);
        assert_eq!(sim.routing.rx_threshold, 1e-9);
        assert_eq!(sim.routing.protocol, Protocol::PpAodv);
        assert_eq!(sim.seed, 3);
    }
}
