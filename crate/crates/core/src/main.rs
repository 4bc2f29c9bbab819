use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use manet_sim::config::{parse_config, RunConfig};
use manet_sim::experiment::{read_csv, run_experiment, summarize, write_csv, write_summary};
use manet_sim::routing::Protocol;
use manet_sim::scenario::{generate_scenario, ScenarioSpec};

#[derive(Parser)]
#[command(
    name = "manet-sim",
    version,
    about = "MANET routing simulator (AODV, PPAODV, LO-PPAODV)"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a sweep and write one CSV row per run.
    Run(RunArgs),
    /// Average a per-run CSV over seeds.
    Summarize {
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a generated scenario file.
    Scenario {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        pause: f64,
        #[arg(long, default_value_t = 40)]
        sources: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    protocol: Vec<Protocol>,
    #[arg(long, value_delimiter = ',')]
    pause: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    sources: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Worker threads for independent runs (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn load_config(path: Option<&PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            parse_config(&text).with_context(|| format!("in {}", p.display()))
        }
        None => Ok(RunConfig::default()),
    }
}

fn sink(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot write {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(a: RunArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_ref())?;
    if !a.protocol.is_empty() {
        cfg.protocols = a.protocol;
    }
    if !a.pause.is_empty() {
        cfg.pause_times = a.pause;
    }
    if !a.sources.is_empty() {
        cfg.source_counts = a.sources;
    }
    if !a.seed.is_empty() {
        cfg.seeds = a.seed;
    }
    cfg.output = a.out.or(cfg.output);
    cfg.scenario_file = a.scenario.or(cfg.scenario_file);
    cfg.trace = a.trace.or(cfg.trace);
    cfg.validate()?;
    if let Some(n) = a.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    // Open the output before spending minutes on the sweep.
    let out = sink(cfg.output.as_ref())?;
    let results = run_experiment(&cfg)?;
    write_csv(&results, out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match cli.cmd {
        Cmd::Run(a) => run(a),
        Cmd::Summarize { input, out } => (|| {
            let f = File::open(&input).with_context(|| format!("reading {}", input.display()))?;
            let rows = read_csv(f)?;
            write_summary(&summarize(&rows), sink(out.as_ref())?)
        })(),
        Cmd::Scenario {
            config,
            pause,
            sources,
            seed,
            out,
        } => (|| {
            let cfg = load_config(config.as_ref())?;
            let spec = ScenarioSpec {
                pause_time: pause,
                source_count: sources,
                seed,
                ..cfg.scenario
            };
            let s = generate_scenario(&spec)?;
            let mut w = sink(out.as_ref())?;
            w.write_all(s.to_text().as_bytes())?;
            Ok(w.flush()?)
        })(),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
