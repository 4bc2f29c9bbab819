#![allow(dead_code)]

use manet_sim::engine::Trace;
use manet_sim::metrics::MetricCounters;
use manet_sim::routing::Protocol;
use manet_sim::scenario::Scenario;
use manet_sim::sim::{SimConfig, Simulation};

pub fn scenario(text: &str) -> Scenario {
    Scenario::parse(text).expect("test scenario parses")
}

/// Four static nodes 200 m apart on a line; one flow from end to end.
pub fn line4(duration: f64, rate: f64) -> Scenario {
    scenario(&format!(
        "set pause 0 vmax 10 seed 1 width 1000 height 10 duration {duration}
node 0 100 5
node 1 300 5
node 2 500 5
node 3 700 5
flow 0 3 1.0 {rate} 512
"
    ))
}

/// Source, relay and destination 200 m apart. The relay backs away from the
/// destination at 10 m/s, so that link crosses 250 m at t = 5 s.
pub const RECEDE_CROSSING: f64 = 5.0;

pub fn receding_relay() -> Scenario {
    scenario(
        "set pause 0 vmax 10 seed 1 width 1000 height 10 duration 8
node 0 300 5
node 1 500 5
node 2 700 5
move 1 0 400 5 10
flow 0 2 1.0 100 64
",
    )
}

/// Static 4x3 grid with 200 m spacing and eight crossing flows at 20 pkt/s.
pub fn saturated_grid() -> Scenario {
    let mut s = String::from("set pause 0 vmax 10 seed 1 width 700 height 500 duration 20\n");
    for r in 0..3 {
        for c in 0..4 {
            s += &format!("node {} {} {}\n", r * 4 + c, 50 + 200 * c, 50 + 200 * r);
        }
    }
    let flows = [
        (0, 11),
        (11, 0),
        (3, 8),
        (8, 3),
        (4, 7),
        (7, 4),
        (1, 10),
        (9, 2),
    ];
    for (i, (a, b)) in flows.iter().enumerate() {
        s += &format!("flow {a} {b} {:.1} 20 512\n", 1.0 + 0.1 * i as f64);
    }
    scenario(&s)
}

pub fn run(scenario: &Scenario, protocol: Protocol, seed: u64) -> MetricCounters {
    let mut sim = Simulation::new(scenario, SimConfig::new(protocol).with_seed(seed), None);
    sim.run_until(scenario.duration)
}

pub fn run_traced(scenario: &Scenario, protocol: Protocol, seed: u64) -> (MetricCounters, String) {
    let mut sim = Simulation::new(
        scenario,
        SimConfig::new(protocol).with_seed(seed),
        Some(Trace::memory()),
    );
    sim.run_until(scenario.duration);
    let (m, bytes) = sim.finish();
    (m, String::from_utf8(bytes).expect("trace is utf-8"))
}

/// A parsed trace line: time, node, kind, detail.
pub struct TraceLine<'a> {
    pub time: f64,
    pub node: Option<u32>,
    pub kind: &'a str,
    pub detail: &'a str,
}

pub fn trace_lines(trace: &str) -> impl Iterator<Item = TraceLine<'_>> {
    trace.lines().map(|l| {
        let mut it = l.splitn(4, ' ');
        let time = it.next().unwrap().parse().unwrap();
        let node = it.next().unwrap().parse().ok();
        let kind = it.next().unwrap();
        TraceLine {
            time,
            node,
            kind,
            detail: it.next().unwrap_or(""),
        }
    })
}

/// Value of `key=` inside a trace detail.
pub fn field<'a>(detail: &'a str, key: &str) -> Option<&'a str> {
    detail
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
}
