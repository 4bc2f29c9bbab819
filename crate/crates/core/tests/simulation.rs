mod common;

use proptest::prelude::*;

use manet_sim::metrics::audit;
use manet_sim::radio::RadioParams;
use manet_sim::routing::Protocol;
use manet_sim::scenario::{generate_scenario, Area, ScenarioSpec};
use manet_sim::sim::{SimConfig, Simulation};

use common::*;

fn pair(distance: f64, duration: f64) -> manet_sim::scenario::Scenario {
    scenario(&format!(
        "set pause 0 vmax 10 seed 1 width 500 height 10 duration {duration}
node 0 100 5
node 1 {} 5
flow 0 1 0.0 4 512
",
        100.0 + distance
    ))
}

#[test]
fn same_seed_same_counters() {
    let sc = receding_relay();
    for p in Protocol::ALL {
        assert_eq!(run(&sc, p, 3), run(&sc, p, 3), "{}", p.name());
    }
}

#[test]
fn idle_link_rss_is_two_ray_power() {
    let sc = pair(150.0, 5.0);
    let mut sim = Simulation::new(&sc, SimConfig::new(Protocol::Aodv), None);
    sim.run_until(5.0);
    let last = sim
        .rss_history(1, 0)
        .last()
        .expect("receiver heard the sender");
    // 0.28183815 W, unit gains, 1.5 m antennas, no loss
    let want = 0.281_838_15 * 1.5 * 1.5 * 1.5 * 1.5 / 150f64.powi(4);
    assert!(
        (last.power - want).abs() <= 1e-12 * want,
        "{} vs {want}",
        last.power
    );
    assert!(last.power >= RadioParams::default().rx_threshold);
}

#[test]
fn cbr_source_generates_rate_times_duration() {
    let m = run(&pair(150.0, 200.0), Protocol::Aodv, 1);
    assert_eq!(m.data_generated, 800);
}

#[test]
fn idle_single_hop_delay_matches_dcf_timing() {
    let m = run(&pair(150.0, 200.0), Protocol::Aodv, 1);
    assert_eq!(m.data_delivered, m.data_generated);
    // first packet waits for route discovery
    let steady = &m.latencies[1..];
    let mean = steady.iter().sum::<f64>() / steady.len() as f64;
    // DIFS, mean of 0..=31 slots, RTS, SIFS, CTS, SIFS, then the DATA frame:
    // 192 us PLCP plus 28 B MAC header, 20 B IP header and 512 B payload at 2 Mb/s.
    let us = 50.0
        + 15.5 * 20.0
        + 352.0
        + 10.0
        + 304.0
        + 10.0
        + 192.0
        + (28.0 + 20.0 + 512.0) * 8.0 / 2.0;
    let want = us * 1e-6;
    assert!(
        (mean - want).abs() < 0.02 * want,
        "mean delay {mean:e}, expected about {want:e}"
    );
}

#[test]
fn three_hop_discovery_costs_three_requests_and_three_replies() {
    let m = run(&line4(10.0, 4.0), Protocol::Aodv, 1);
    assert_eq!(m.rreq_sent, 3);
    assert_eq!(m.rrep_sent, 3);
    assert_eq!(m.rerr_sent + m.warn_sent, 0);
}

#[test]
fn receding_peer_failure_is_low_rss() {
    let (_, trace) = run_traced(&receding_relay(), Protocol::Aodv, 1);
    let failures: Vec<_> = trace_lines(&trace)
        .filter(|l| {
            l.kind == "mac-drop"
                && l.detail.starts_with("RetryExceed")
                && l.node == Some(1)
                && field(l.detail, "dst") == Some("2")
        })
        .collect();
    assert!(!failures.is_empty());
    for l in failures {
        // relay-destination distance is 200 + 10 t
        assert!(
            200.0 + 10.0 * l.time > 250.0,
            "failed at {} while in range",
            l.time
        );
        assert_eq!(field(l.detail, "reason"), Some("LowRssOrUnknown"));
    }
}

#[test]
fn congested_in_range_failure_is_high_rss() {
    let sc = saturated_grid();
    let (_, trace) = run_traced(&sc, Protocol::LoPpAodv, 1);
    let pos = |n: u32| ((50 + 200 * (n % 4)) as f64, (50 + 200 * (n / 4)) as f64);
    let thr = RadioParams::default().rx_threshold;
    let mut high = 0;
    for l in trace_lines(&trace) {
        if l.kind != "mac-drop" || field(l.detail, "reason") != Some("HighRss") {
            continue;
        }
        let a = pos(l.node.unwrap());
        let b = pos(field(l.detail, "dst").unwrap().parse().unwrap());
        let d = ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
        let pr = 0.281_838_15 * 1.5f64.powi(4) / d.powi(4);
        assert!(pr >= thr, "HighRss failure toward a peer {d} m away");
        high += 1;
    }
    assert!(high > 0);
}

#[test]
fn warning_predicts_crossing_before_it_happens() {
    for p in [Protocol::PpAodv, Protocol::LoPpAodv] {
        let (m, trace) = run_traced(&receding_relay(), p, 1);
        assert!(m.warnings_sent >= 1);
        let w = trace_lines(&trace)
            .find(|l| l.kind == "warn-originate")
            .unwrap();
        // the destination measures the relay's frames
        assert_eq!(w.node, Some(2));
        assert_eq!(field(w.detail, "link"), Some("1"));
        let t_pt: f64 = field(w.detail, "t_pt").unwrap().parse().unwrap();
        // extrapolation target lies past the geometric crossing, the warning before it
        assert!(t_pt > RECEDE_CROSSING, "{}: t_pt {t_pt}", p.name());
        assert!(w.time < RECEDE_CROSSING);
        assert!(t_pt - w.time < 0.01);
        let first_rerr = trace_lines(&trace)
            .find(|l| l.kind == "rerr-originate")
            .map(|l| l.time);
        let rediscovery = trace_lines(&trace)
            .find(|l| l.kind == "rreq-originate" && field(l.detail, "kind") == Some("preemptive"))
            .unwrap();
        if let Some(t) = first_rerr {
            assert!(rediscovery.time < t);
        }
    }
}

#[test]
fn mid_route_break_is_repaired_locally() {
    // 0 -> 1 -> 2 -> 3; node 2 drifts east out of range of 1 while node 4
    // arrives to bridge 1 and 3.
    let sc = scenario(
        "set pause 0 vmax 50 seed 1 width 700 height 500 duration 20
node 0 50 300
node 1 250 300
node 2 450 300
node 3 650 300
node 4 450 0
move 4 1 450 280 50
move 2 6 620 300 10
flow 0 3 1.0 4 512
",
    );
    let mut sim = Simulation::new(
        &sc,
        SimConfig::new(Protocol::Aodv),
        Some(manet_sim::engine::Trace::memory()),
    );
    sim.run_until(20.0);
    assert_eq!(
        sim.agent(1).table().valid(3, 20.0).map(|e| e.next_hop),
        Some(4)
    );
    let (m, trace) = sim.finish();
    let trace = String::from_utf8(trace).unwrap();
    assert!(trace_lines(&trace).any(|l| l.kind == "rreq-originate"
        && l.node == Some(1)
        && field(l.detail, "kind") == Some("repair")));
    assert_eq!(
        trace_lines(&trace)
            .filter(|l| l.kind == "rerr-originate")
            .count(),
        0
    );
    assert!(m.route_errors >= 1);
    assert!(m.data_delivered as f64 >= 0.9 * m.data_generated as f64);
}

#[test]
fn suppression_never_coexists_with_high_rss_rerr() {
    let sc = saturated_grid();
    for seed in 1..=3 {
        let m = run(&sc, Protocol::LoPpAodv, seed);
        assert!(m.repairs_suppressed > 0);
        assert_eq!(m.rerr_high_rss, 0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn every_run_conserves_data_packets(
        nodes in 4usize..14,
        sources in 1usize..5,
        pause in 0.0f64..20.0,
        proto in 0usize..3,
        seed in 0u64..1000,
    ) {
        let spec = ScenarioSpec {
            node_count: nodes,
            area: Area { width: 800.0, height: 300.0 },
            duration: 20.0,
            pause_time: pause,
            source_count: sources,
            start_spread: 5.0,
            seed,
            ..ScenarioSpec::default()
        };
        let sc = generate_scenario(&spec).unwrap();
        let m = run(&sc, Protocol::ALL[proto], seed);
        prop_assert!(audit(&m).is_ok(), "{:?}", audit(&m));
        prop_assert!(m.data_generated > 0);
    }
}
