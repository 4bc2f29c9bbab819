//! Parameter sweeps, the per-run CSV table and seed-averaged summaries.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::engine::Trace;
use crate::mac::DropKind;
use crate::metrics::{
    audit, average_e2e_delay, normalized_routing_load, packet_delivery_fraction, MetricCounters,
};
use crate::routing::Protocol;
use crate::scenario::{generate_scenario, Scenario, ScenarioSpec};
use crate::sim::Simulation;

pub const CSV_COLUMNS: [&str; 16] = [
    "run_id",
    "protocol",
    "nodes",
    "pause_time",
    "sources",
    "seed",
    "pdf",
    "avg_delay_s",
    "nrl",
    "route_errors",
    "mac_collision",
    "mac_retry_exceed",
    "mac_busy",
    "mac_duplicate",
    "warnings_sent",
    "repairs_suppressed",
];

/// One point of the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSpec {
    pub run_id: usize,
    pub protocol: Protocol,
    pub pause_time: f64,
    pub sources: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub spec: RunSpec,
    pub nodes: usize,
    pub counters: MetricCounters,
}

/// Sweep order: protocol, then pause time, then source count, then seed.
/// With a scripted scenario only protocols and seeds vary.
pub fn sweep(cfg: &RunConfig, scripted: Option<&Scenario>) -> Vec<RunSpec> {
    let mut out = Vec::new();
    let pauses = match scripted {
        Some(s) => vec![s.pause_time],
        None => cfg.pause_times.clone(),
    };
    let sources = match scripted {
        Some(s) => vec![s.flows.len()],
        None => cfg.source_counts.clone(),
    };
    for &protocol in &cfg.protocols {
        for &pause_time in &pauses {
            for &n in &sources {
                for &seed in &cfg.seeds {
                    out.push(RunSpec {
                        run_id: out.len(),
                        protocol,
                        pause_time,
                        sources: n,
                        seed,
                    });
                }
            }
        }
    }
    out
}

pub fn scenario_for(cfg: &RunConfig, run: &RunSpec) -> Result<Scenario> {
    let spec = ScenarioSpec {
        pause_time: run.pause_time,
        source_count: run.sources,
        seed: run.seed,
        ..cfg.scenario.clone()
    };
    Ok(generate_scenario(&spec)?)
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Scenario::parse(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Where the trace of `run` goes when tracing a multi-run sweep.
pub fn trace_path(base: &Path, run: &RunSpec, total: usize) -> PathBuf {
    if total == 1 {
        return base.to_path_buf();
    }
    let mut s = base.as_os_str().to_owned();
    s.push(format!(".{}", run.run_id));
    PathBuf::from(s)
}

/// Execute one run, optionally writing its event trace to `trace`.
pub fn execute_run(
    cfg: &RunConfig,
    scenario: &Scenario,
    run: &RunSpec,
    trace: Option<&Path>,
) -> Result<RunResult> {
    let tr = match trace {
        Some(p) => Some(Trace::file(p).with_context(|| format!("opening trace {}", p.display()))?),
        None => None,
    };
    let mut sim = Simulation::new(scenario, cfg.sim_config(run.protocol, run.seed), tr);
    sim.run_until(scenario.duration);
    let (counters, _) = sim.finish();
    audit(&counters).with_context(|| format!("run {} failed its end-of-run audit", run.run_id))?;
    Ok(RunResult {
        spec: *run,
        nodes: scenario.node_count(),
        counters,
    })
}

/// Run the whole sweep on the rayon pool; results come back in sweep order.
pub fn run_experiment(cfg: &RunConfig) -> Result<Vec<RunResult>> {
    cfg.validate()?;
    let scripted = match &cfg.scenario_file {
        Some(p) => Some(load_scenario(p)?),
        None => None,
    };
    let runs = sweep(cfg, scripted.as_ref());
    let total = runs.len();
    runs.par_iter()
        .map(|run| {
            let generated;
            let scenario = match &scripted {
                Some(s) => s,
                None => {
                    generated = scenario_for(cfg, run)?;
                    &generated
                }
            };
            let trace = cfg.trace.as_deref().map(|b| trace_path(b, run, total));
            execute_run(cfg, scenario, run, trace.as_deref())
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn csv_record(r: &RunResult) -> Vec<String> {
    let c = &r.counters;
    vec![
        r.spec.run_id.to_string(),
        r.spec.protocol.name().to_string(),
        r.nodes.to_string(),
        r.spec.pause_time.to_string(),
        r.spec.sources.to_string(),
        r.spec.seed.to_string(),
        opt(packet_delivery_fraction(c)),
        opt(average_e2e_delay(c)),
        opt(normalized_routing_load(c)),
        c.route_errors.to_string(),
        c.mac_drops_of(DropKind::Collision).to_string(),
        c.mac_drops_of(DropKind::RetryExceed).to_string(),
        c.mac_drops_of(DropKind::MacBusy).to_string(),
        c.mac_drops_of(DropKind::Duplicate).to_string(),
        c.warnings_sent.to_string(),
        c.repairs_suppressed.to_string(),
    ]
}

pub fn write_csv<W: Write>(results: &[RunResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in results {
        w.write_record(csv_record(r))?;
    }
    w.flush()?;
    Ok(())
}

/// One parsed row of the per-run CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub protocol: String,
    pub nodes: usize,
    pub pause_time: f64,
    pub sources: usize,
    pub seed: u64,
    /// `pdf` through `repairs_suppressed`, `None` for empty cells.
    pub values: Vec<Option<f64>>,
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<CsvRow>> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != CSV_COLUMNS {
        bail!("unexpected CSV header: {}", header.join(","));
    }
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let ctx = || format!("row {}", i + 1);
        let values = (6..CSV_COLUMNS.len())
            .map(|k| {
                let s = field(k);
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse::<f64>()
                        .map(Some)
                        .with_context(|| format!("{}: {}", ctx(), CSV_COLUMNS[k]))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(CsvRow {
            protocol: field(1).to_string(),
            nodes: field(2).parse().with_context(ctx)?,
            pause_time: field(3).parse().with_context(ctx)?,
            sources: field(4).parse().with_context(ctx)?,
            seed: field(5).parse().with_context(ctx)?,
            values,
        });
    }
    Ok(rows)
}

/// Seed-averaged means per (protocol, nodes, pause time, sources).
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub protocol: String,
    pub nodes: usize,
    pub pause_time: f64,
    pub sources: usize,
    pub runs: usize,
    /// Means over the runs where the value was present.
    pub means: Vec<Option<f64>>,
}

pub fn summarize(rows: &[CsvRow]) -> Vec<SummaryRow> {
    // Group in first-appearance order.
    let mut order: Vec<SummaryRow> = Vec::new();
    let mut index: BTreeMap<(String, usize, u64, usize), usize> = BTreeMap::new();
    let mut sums: Vec<Vec<(f64, usize)>> = Vec::new();
    for r in rows {
        let key = (
            r.protocol.clone(),
            r.nodes,
            r.pause_time.to_bits(),
            r.sources,
        );
        let slot = *index.entry(key).or_insert_with(|| {
            order.push(SummaryRow {
                protocol: r.protocol.clone(),
                nodes: r.nodes,
                pause_time: r.pause_time,
                sources: r.sources,
                runs: 0,
                means: Vec::new(),
            });
            sums.push(vec![(0.0, 0); r.values.len()]);
            order.len() - 1
        });
        order[slot].runs += 1;
        for (acc, v) in sums[slot].iter_mut().zip(&r.values) {
            if let Some(v) = v {
                acc.0 += v;
                acc.1 += 1;
            }
        }
    }
    for (row, s) in order.iter_mut().zip(sums) {
        row.means = s
            .into_iter()
            .map(|(sum, n)| (n > 0).then(|| sum / n as f64))
            .collect();
    }
    order
}

pub fn write_summary<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["protocol", "nodes", "pause_time", "sources", "runs"];
    header.extend_from_slice(&CSV_COLUMNS[6..]);
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.protocol.clone(),
            r.nodes.to_string(),
            r.pause_time.to_string(),
            r.sources.to_string(),
            r.runs.to_string(),
        ];
        rec.extend(r.means.iter().map(|m| opt(*m)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_shape_and_order() {
        let cfg = RunConfig {
            protocols: vec![Protocol::LoPpAodv],
            source_counts: vec![40],
            ..RunConfig::default()
        };
        let runs = sweep(&cfg, None);
        assert_eq!(runs.len(), 25);
        assert_eq!(runs[0].pause_time, 0.0);
        assert_eq!(runs[4].seed, 5);
        assert_eq!(runs[5].pause_time, 20.0);
        assert!(runs.iter().enumerate().all(|(i, r)| r.run_id == i));
    }

    #[test]
    fn summary_averages_over_seeds() {
        let row = |seed, pdf: Option<f64>, errs| CsvRow {
            protocol: "aodv".into(),
            nodes: 4,
            pause_time: 0.0,
            sources: 1,
            seed,
            values: vec![
                pdf,
                None,
                None,
                Some(errs),
                Some(0.0),
                Some(0.0),
                Some(0.0),
                Some(0.0),
                Some(0.0),
                Some(0.0),
            ],
        };
        let s = summarize(&[
            row(1, Some(1.0), 2.0),
            row(2, None, 4.0),
            row(3, Some(0.5), 0.0),
        ]);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].runs, 3);
        assert_eq!(s[0].means[0], Some(0.75));
        assert_eq!(s[0].means[1], None);
        assert_eq!(s[0].means[3], Some(2.0));
    }
}
