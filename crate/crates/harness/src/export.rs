//! CSV and JSON output.
//!
//! Per-run CSV (schema version 1), one row per instant:
//!
//! | column | meaning |
//! |---|---|
//! | `k` | instant |
//! | `x_1..x_n` | true state |
//! | `xhat_1..xhat_n` | estimate `x̂_{k|k}` |
//! | `y_1..y_m` | measurement |
//! | `rmse` | `‖x̂ − x‖ / √n` |
//! | `a4_checked` | `1` when the weak-coupling monitor was evaluable at `k` |
//! | `a4_satisfied` | `1` when it held |
//!
//! Monitor flags are `0` when monitors are disabled. Ensemble CSVs are long
//! format (`run, seed, k, rmse`) with a companion summary (`k, mean, min, max`).
//! Floats are written with shortest round-trip formatting.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{HarnessError, Result};
use crate::montecarlo::MonteCarloResult;
use crate::record::RunRecord;

pub const CSV_SCHEMA_VERSION: u32 = 1;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

pub fn csv_header(record: &RunRecord) -> Vec<String> {
    let n: usize = record.dims.iter().sum();
    let m: usize = record.out_dims.iter().sum();
    let mut h = vec!["k".to_string()];
    h.extend((1..=n).map(|j| format!("x_{j}")));
    h.extend((1..=n).map(|j| format!("xhat_{j}")));
    h.extend((1..=m).map(|j| format!("y_{j}")));
    h.extend(["rmse", "a4_checked", "a4_satisfied"].map(String::from));
    h
}

/// Rows of the per-run CSV, header first.
pub fn csv_rows(record: &RunRecord) -> Vec<Vec<String>> {
    let flag = |b: bool| if b { "1" } else { "0" }.to_string();
    let mut rows = vec![csv_header(record)];
    for (k, step) in record.steps.iter().enumerate() {
        let mut row = vec![k.to_string()];
        row.extend(record.trajectory.states[k].iter().map(f64::to_string));
        row.extend(step.estimate.iter().map(f64::to_string));
        row.extend(record.trajectory.measurements[k].iter().map(f64::to_string));
        row.push(record.rmse[k].to_string());
        let m = record.monitors.as_ref().map(|m| &m.rows[k]);
        row.push(flag(m.is_some_and(|r| r.a4_checked)));
        row.push(flag(m.is_some_and(|r| r.a4_satisfied)));
        rows.push(row);
    }
    rows
}

pub fn write_run_csv(record: &RunRecord, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    for row in csv_rows(record) {
        w.write_record(&row)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_run_json(record: &RunRecord, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, record)?;
    w.flush().map_err(io_err(path))
}

pub fn read_run_json(path: &Path) -> Result<RunRecord> {
    let f = File::open(path).map_err(io_err(path))?;
    Ok(serde_json::from_reader(BufReader::new(f))?)
}

/// Writes `<name>.csv` and `<name>.json` into `dir`; returns both paths.
pub fn export_run(record: &RunRecord, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let csv = dir.join(format!("{}.csv", record.config.name));
    let json = dir.join(format!("{}.json", record.config.name));
    write_run_csv(record, &csv)?;
    write_run_json(record, &json)?;
    Ok((csv, json))
}

pub fn write_ensemble_csv(result: &MonteCarloResult, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["run", "seed", "k", "rmse"])?;
    for r in &result.runs {
        for (k, v) in r.rmse.iter().enumerate() {
            w.write_record([r.run.to_string(), r.seed.to_string(), k.to_string(), v.to_string()])?;
        }
    }
    w.flush().map_err(io_err(path))
}

pub fn write_summary_csv(result: &MonteCarloResult, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["k", "mean", "min", "max"])?;
    let s = &result.stats;
    for k in 0..s.mean.len() {
        w.write_record([k.to_string(), s.mean[k].to_string(), s.min[k].to_string(), s.max[k].to_string()])?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes `<name>_ensemble.csv` and `<name>_summary.csv` into `dir`.
pub fn export_ensemble(result: &MonteCarloResult, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let long = dir.join(format!("{}_ensemble.csv", result.config.name));
    let summary = dir.join(format!("{}_summary.csv", result.config.name));
    write_ensemble_csv(result, &long)?;
    write_summary_csv(result, &summary)?;
    Ok((long, summary))
}
