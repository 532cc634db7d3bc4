//! CSV tables, JSON reports and per-step traces for a finished sweep.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use fliphat_core::ledger::{Charge, LedgerEntry};
use fliphat_core::policy::RegretTrace;

use crate::config::ExperimentConfig;
use crate::sweep::{CellRun, SweepResult};

pub const RAW_FILE: &str = "raw.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const LEDGER_FILE: &str = "ledger.json";
pub const META_FILE: &str = "run_meta.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub d: usize,
    pub epsilon: String,
    pub delta: f64,
    pub repetition: usize,
    pub final_regret: f64,
    pub seed_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub d: usize,
    pub epsilon: String,
    pub mean_regret: f64,
    pub stddev: f64,
    pub ci95_halfwidth: f64,
    pub repetitions: usize,
}

pub fn raw_rows(res: &SweepResult) -> Vec<RawRow> {
    res.cells
        .iter()
        .map(|c| RawRow {
            d: c.key.dim,
            epsilon: c.key.epsilon.to_string(),
            delta: res.config.delta,
            repetition: c.key.repetition,
            final_regret: c.final_regret,
            seed_path: c.seed_path.clone(),
        })
        .collect()
}

pub fn aggregate_rows(res: &SweepResult) -> Vec<AggregateRow> {
    res.aggregates
        .iter()
        .map(|a| AggregateRow {
            d: a.dim,
            epsilon: a.epsilon.to_string(),
            mean_regret: a.mean_regret,
            stddev: a.stddev,
            ci95_halfwidth: a.ci95_halfwidth,
            repetitions: a.repetitions,
        })
        .collect()
}

fn write_rows<T: Serialize>(rows: &[T], out: impl Write) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()
}

pub fn write_raw_csv(res: &SweepResult, out: impl Write) -> io::Result<()> {
    write_rows(&raw_rows(res), out)
}

pub fn write_aggregate_csv(res: &SweepResult, out: impl Write) -> io::Result<()> {
    write_rows(&aggregate_rows(res), out)
}

/// Writes `raw.csv` and `aggregate.csv` into `dir`, replacing earlier copies.
pub fn emit_csv(res: &SweepResult, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    write_raw_csv(res, fs::File::create(dir.join(RAW_FILE))?)?;
    write_aggregate_csv(res, fs::File::create(dir.join(AGGREGATE_FILE))?)
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> io::Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(io::Error::from)).collect()
}

pub fn read_raw_csv(path: &Path) -> io::Result<Vec<RawRow>> {
    read_rows(path)
}

pub fn read_aggregate_csv(path: &Path) -> io::Result<Vec<AggregateRow>> {
    read_rows(path)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellLedger {
    pub d: usize,
    pub epsilon: String,
    pub repetition: usize,
    pub seed_path: String,
    pub disjoint: bool,
    pub max_per_user: Charge,
    pub entries: Vec<LedgerEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerReport {
    /// Largest per-datum charge over every run of the sweep.
    pub max_per_user: Charge,
    pub cells: Vec<CellLedger>,
}

pub fn ledger_report(res: &SweepResult) -> LedgerReport {
    let cells: Vec<CellLedger> = res
        .cells
        .iter()
        .map(|c| CellLedger {
            d: c.key.dim,
            epsilon: c.key.epsilon.to_string(),
            repetition: c.key.repetition,
            seed_path: c.seed_path.clone(),
            disjoint: c.trace.ledger.is_disjoint(),
            max_per_user: c.trace.ledger.max_per_user_budget(),
            entries: c.trace.ledger.entries().to_vec(),
        })
        .collect();
    let max_per_user = cells.iter().fold(Charge { epsilon: 0.0, delta: 0.0 }, |acc, c| Charge {
        epsilon: acc.epsilon.max(c.max_per_user.epsilon),
        delta: acc.delta.max(c.max_per_user.delta),
    });
    LedgerReport { max_per_user, cells }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMeta {
    pub version: &'static str,
    pub cells: usize,
    pub config: ExperimentConfig,
    /// The resolved config in file syntax, defaults filled in.
    pub config_text: String,
}

pub fn run_meta(res: &SweepResult) -> RunMeta {
    RunMeta {
        version: env!("CARGO_PKG_VERSION"),
        cells: res.cells.len(),
        config: res.config.clone(),
        config_text: res.config.to_text(),
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> io::Result<()> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")
}

/// Writes `ledger.json` and `run_meta.json` into `dir`.
pub fn emit_json(res: &SweepResult, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&ledger_report(res), &dir.join(LEDGER_FILE))?;
    write_json(&run_meta(res), &dir.join(META_FILE))
}

/// One line per step: `t,episode,action,reward,instant_regret,cumulative_regret`.
pub fn write_trace(trace: &RegretTrace, out: impl Write) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "episode", "action", "reward", "instant_regret", "cumulative_regret"])?;
    let mut episode = 0usize;
    for i in 0..trace.horizon() {
        let t = i as u64 + 1;
        while episode + 1 < trace.episode_starts.len() && trace.episode_starts[episode + 1] <= t {
            episode += 1;
        }
        w.write_record([
            t.to_string(),
            episode.to_string(),
            trace.actions[i].to_string(),
            trace.rewards[i].to_string(),
            trace.per_step_regret[i].to_string(),
            trace.cumulative[i].to_string(),
        ])?;
    }
    w.flush()
}

pub fn trace_file_name(cell: &CellRun) -> String {
    format!("d{}_eps{}_rep{}.csv", cell.key.dim, cell.key.epsilon, cell.key.repetition)
}

/// Writes one trace file per cell under `dir/traces`.
pub fn emit_traces(res: &SweepResult, dir: &Path) -> io::Result<PathBuf> {
    let sub = dir.join("traces");
    fs::create_dir_all(&sub)?;
    for c in &res.cells {
        write_trace(&c.trace, fs::File::create(sub.join(trace_file_name(c)))?)?;
    }
    Ok(sub)
}
