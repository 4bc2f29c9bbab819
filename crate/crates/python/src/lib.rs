//! Python bindings: the closed-form models and a single-run entry point.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use manet_sim::config::{parse_config, RunConfig};
use manet_sim::experiment::{execute_run, scenario_for, RunSpec};
use manet_sim::mac::{channel_occupation, DropKind, MacTimings};
use manet_sim::metrics::{average_e2e_delay, normalized_routing_load, packet_delivery_fraction};
use manet_sim::predict::{self, DiscoveryInputs, RssHistory};
use manet_sim::radio::{self, RadioParams};
use manet_sim::routing::{self, Protocol, RreqMessage};

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Two-ray-ground received power (W) at `distance` metres with default radio parameters.
#[pyfunction]
fn received_power(distance: f64) -> PyResult<f64> {
    if !(distance > 0.0) {
        return Err(value_err("distance must be positive"));
    }
    Ok(radio::received_power(&RadioParams::default(), distance))
}

#[pyfunction]
fn rx_threshold() -> f64 {
    RadioParams::default().rx_threshold
}

#[pyfunction]
fn default_channel_occupation() -> f64 {
    channel_occupation(&MacTimings::default())
}

#[pyfunction]
fn fpd(lq: f64, oh_mac: f64) -> PyResult<f64> {
    if !(oh_mac > 0.0) {
        return Err(value_err("oh_mac must be positive"));
    }
    Ok(routing::fpd(radio::link_quality(lq), oh_mac))
}

/// Extrapolate three `(time, power)` samples to `t`.
#[pyfunction]
fn lagrange_predict(samples: Vec<(f64, f64)>, t: f64) -> PyResult<f64> {
    let h = RssHistory::from_samples(&samples);
    predict::lagrange_predict(&h, t).map_err(value_err)
}

#[pyfunction]
fn discovery_period(
    t_warning: f64,
    t_rreq: f64,
    t_rrep: f64,
    hops_to_source: u32,
    hops_source_to_dest: u32,
) -> f64 {
    predict::discovery_period(&DiscoveryInputs {
        t_warning,
        t_rreq,
        t_rrep,
        hops_to_source,
        hops_source_to_dest,
    })
}

#[pyfunction]
fn encode_rreq<'py>(
    py: Python<'py>,
    src: u32,
    src_seq: u32,
    broadcast_id: u32,
    dest: u32,
    dest_seq: u32,
) -> Bound<'py, PyBytes> {
    let m = RreqMessage::new(src, src_seq, broadcast_id, dest, dest_seq);
    PyBytes::new(py, &m.to_bytes())
}

#[pyfunction]
fn decode_rreq<'py>(py: Python<'py>, data: &[u8]) -> PyResult<Bound<'py, PyDict>> {
    let m = RreqMessage::from_bytes(data).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("hop_count", m.hop_count)?;
    d.set_item("broadcast_id", m.broadcast_id)?;
    d.set_item("dest_addr", m.dest_addr)?;
    d.set_item("dest_seq", m.dest_seq)?;
    d.set_item("src_addr", m.src_addr)?;
    d.set_item("src_seq", m.src_seq)?;
    d.set_item("cost_fpd", m.cost_fpd)?;
    Ok(d)
}

/// Run one generated scenario and return its metrics.
///
/// `config` is optional config-file text; sweep keys in it are ignored.
#[pyfunction]
#[pyo3(signature = (protocol, pause_time, sources, seed, config=None))]
fn run<'py>(
    py: Python<'py>,
    protocol: &str,
    pause_time: f64,
    sources: usize,
    seed: u64,
    config: Option<&str>,
) -> PyResult<Bound<'py, PyDict>> {
    let protocol: Protocol = protocol.parse().map_err(value_err)?;
    let cfg = match config {
        Some(text) => parse_config(text).map_err(value_err)?,
        None => RunConfig::default(),
    };
    let spec = RunSpec {
        run_id: 0,
        protocol,
        pause_time,
        sources,
        seed,
    };
    let result = py
        .detach(|| {
            let scenario = scenario_for(&cfg, &spec)?;
            execute_run(&cfg, &scenario, &spec, None)
        })
        .map_err(|e| value_err(format!("{e:#}")))?;
    let c = &result.counters;
    let d = PyDict::new(py);
    d.set_item("protocol", protocol.name())?;
    d.set_item("nodes", result.nodes)?;
    d.set_item("data_generated", c.data_generated)?;
    d.set_item("data_delivered", c.data_delivered)?;
    d.set_item("pdf", packet_delivery_fraction(c))?;
    d.set_item("avg_delay_s", average_e2e_delay(c))?;
    d.set_item("nrl", normalized_routing_load(c))?;
    d.set_item("route_errors", c.route_errors)?;
    for k in DropKind::ALL {
        d.set_item(format!("mac_{}", k.name()), c.mac_drops_of(k))?;
    }
    d.set_item("warnings_sent", c.warnings_sent)?;
    d.set_item("repairs_suppressed", c.repairs_suppressed)?;
    Ok(d)
}

#[pymodule]
fn pymanet(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(received_power, m)?)?;
    m.add_function(wrap_pyfunction!(rx_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(default_channel_occupation, m)?)?;
    m.add_function(wrap_pyfunction!(fpd, m)?)?;
    m.add_function(wrap_pyfunction!(lagrange_predict, m)?)?;
    m.add_function(wrap_pyfunction!(discovery_period, m)?)?;
    m.add_function(wrap_pyfunction!(encode_rreq, m)?)?;
    m.add_function(wrap_pyfunction!(decode_rreq, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
