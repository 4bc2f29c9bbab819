use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use manet_sim::experiment::{read_csv, CSV_COLUMNS};

fn manet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_manet-sim"))
        .args(args)
        .output()
        .expect("binary runs")
}

const SMALL: &str = "\
# reduced sweep
nodes = 12
width = 600
height = 300
duration = 15
start_spread = 5
protocols = aodv, lo-ppaodv
pause_times = 0
source_counts = 3
seeds = 1, 2
";

fn write_config(dir: &Path) -> String {
    let p = dir.join("small.conf");
    fs::write(&p, SMALL).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn run_writes_one_row_per_run() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path());
    let out = dir.path().join("runs.csv");
    let o = manet(&["run", "--config", &conf, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_COLUMNS.join(","));
    let rows = read_csv(text.as_bytes()).unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0].protocol, "aodv");
    assert_eq!(rows[3].protocol, "lo-ppaodv");
    assert_eq!(rows[3].seed, 2);
    assert_eq!(rows[0].nodes, 12);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path());
    let o = manet(&[
        "run",
        "--config",
        &conf,
        "--protocol",
        "ppaodv",
        "--seed",
        "9",
    ]);
    assert!(o.status.success());
    let rows = read_csv(&o.stdout[..]).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].protocol, "ppaodv");
    assert_eq!(rows[0].seed, 9);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path());
    let tr = dir.path().join("trace");
    let tr = tr.to_str().unwrap();
    let a = manet(&[
        "run",
        "--config",
        &conf,
        "--seed",
        "1",
        "--protocol",
        "lo-ppaodv",
        "--trace",
        tr,
    ]);
    let trace_a = fs::read(tr).unwrap();
    let b = manet(&[
        "run",
        "--config",
        &conf,
        "--seed",
        "1",
        "--protocol",
        "lo-ppaodv",
        "--trace",
        tr,
    ]);
    let trace_b = fs::read(tr).unwrap();
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert!(!trace_a.is_empty());
    assert_eq!(trace_a, trace_b);
}

#[test]
fn unwritable_output_fails_before_running() {
    let o = manet(&["run", "--out", "/nonexistent-dir/x/runs.csv"]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("/nonexistent-dir/x/runs.csv"), "{err}");
}

#[test]
fn invalid_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.conf");
    fs::write(&p, "nodes = 10\nv_max = -3\n").unwrap();
    let o = manet(&["run", "--config", p.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("v_max"));

    fs::write(&p, "nodes = 10\nbogus = 1\n").unwrap();
    let o = manet(&["run", "--config", p.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2") && err.contains("bogus"), "{err}");
}

#[test]
fn summarize_averages_over_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path());
    let runs = dir.path().join("runs.csv");
    assert!(
        manet(&["run", "--config", &conf, "--out", runs.to_str().unwrap()])
            .status
            .success()
    );
    let o = manet(&["summarize", runs.to_str().unwrap()]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("protocol,nodes,pause_time,sources,runs,"));
    assert!(lines[1].starts_with("aodv,12,0,3,2,"));

    let rows = read_csv(fs::File::open(&runs).unwrap()).unwrap();
    let pdf_col = CSV_COLUMNS.iter().position(|c| *c == "pdf").unwrap() - 6;
    let mean = (rows[0].values[pdf_col].unwrap() + rows[1].values[pdf_col].unwrap()) / 2.0;
    let header: Vec<&str> = lines[0].split(',').collect();
    let at = header.iter().position(|c| *c == "pdf").unwrap();
    let got: f64 = lines[1].split(',').nth(at).unwrap().parse().unwrap();
    assert!((got - mean).abs() < 1e-12);
}

#[test]
fn scenario_command_round_trips_through_run() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path());
    let sc = dir.path().join("s.scen");
    let o = manet(&[
        "scenario",
        "--config",
        &conf,
        "--pause",
        "5",
        "--sources",
        "2",
        "--seed",
        "4",
        "--out",
        sc.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let o = manet(&[
        "run",
        "--config",
        &conf,
        "--scenario",
        sc.to_str().unwrap(),
        "--protocol",
        "aodv",
        "--seed",
        "4",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_csv(&o.stdout[..]).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].pause_time, 5.0);
    assert_eq!(rows[0].sources, 2);
}
