//! Byte-stable report emission: per-packet metrics CSV and a JSON summary.
//!
//! Identical results produce identical bytes: floats are rounded to 9
//! significant digits, JSON maps use sorted keys, and nothing wall-clock
//! dependent enters the files (runtimes go to the log, not the report).

use crate::sim::{AllocationEvent, RunMetrics, SimRun};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::Path;

/// Fixed 9-significant-digit rendering, stable across runs.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{:.8e}", x)
}

/// Rounds to 9 significant digits so serialized numbers are stable.
pub fn round_sig9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let exp = x.abs().log10().floor() as i32;
    let factor = 10f64.powi(8 - exp);
    (x * factor).round() / factor
}

/// One row per completed packet, stable ordering (completion then service).
pub fn metrics_csv(metrics: &RunMetrics) -> String {
    let mut out = String::from("service_id,arrival_tti,completion_tti,delay_s,excess_norm\n");
    for r in &metrics.records {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.service_id,
            r.arrival_tti,
            r.completion_tti,
            fmt_sig9(r.delay_s),
            fmt_sig9(r.excess_norm)
        )
        .unwrap();
    }
    out
}

#[derive(Debug, Serialize)]
struct AllocationRow {
    tti: u64,
    n_min: Vec<u32>,
    w: Vec<String>,
    objective: String,
    feasible: bool,
}

#[derive(Debug, Serialize)]
struct Summary {
    name: String,
    mode: String,
    seed: u64,
    horizon: u64,
    n_cell_rb: u32,
    /// Keyed by service id; values rendered with 9 significant digits.
    violation_probability: BTreeMap<String, f64>,
    /// Services that completed zero packets over the horizon.
    no_records: BTreeMap<String, bool>,
    mean_rb_utilization: f64,
    completed_packets: usize,
    allocations: Vec<AllocationRow>,
}

/// JSON summary for one run. Same inputs give identical bytes.
pub fn summary_json(name: &str, spec: &SimRun, metrics: &RunMetrics) -> String {
    let mut violation = BTreeMap::new();
    let mut no_records = BTreeMap::new();
    for (s, (&v, &none)) in metrics.violation.iter().zip(&metrics.no_records).enumerate() {
        violation.insert(s.to_string(), round_sig9(v));
        no_records.insert(s.to_string(), none);
    }
    let mean_util = if metrics.rb_utilization.is_empty() {
        0.0
    } else {
        metrics.rb_utilization.iter().sum::<f64>() / metrics.rb_utilization.len() as f64
    };
    let summary = Summary {
        name: name.to_string(),
        mode: spec.mode.name().to_string(),
        seed: spec.seed,
        horizon: spec.horizon,
        n_cell_rb: spec.cell.n_cell_rb,
        violation_probability: violation,
        no_records,
        mean_rb_utilization: round_sig9(mean_util),
        completed_packets: metrics.records.len(),
        allocations: metrics
            .allocations
            .iter()
            .map(|a: &AllocationEvent| AllocationRow {
                tti: a.tti,
                n_min: a.n_min.clone(),
                w: a.w.iter().map(|&w| fmt_sig9(w)).collect(),
                objective: fmt_sig9(a.objective),
                feasible: a.feasible,
            })
            .collect(),
    };
    let mut json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    json.push('\n');
    json
}

pub fn write_report(
    dir: &Path,
    label: &str,
    name: &str,
    spec: &SimRun,
    metrics: &RunMetrics,
) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(format!("{label}.metrics.csv")), metrics_csv(metrics))?;
    std::fs::write(
        dir.join(format!("{label}.summary.json")),
        summary_json(name, spec, metrics),
    )?;
    Ok(())
}

/// Generic small-table writer for validation / complexity studies.
pub fn write_table(dir: &Path, label: &str, header: &str, rows: &[String]) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut out = String::from(header);
    out.push('\n');
    for row in rows {
        out.push_str(row);
        out.push('\n');
    }
    std::fs::write(dir.join(format!("{label}.csv")), out)
}
