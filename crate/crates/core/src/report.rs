//! CSV and JSON writers for run logs and benchmark reports.
//!
//! All numbers are written with Rust's locale-independent float formatting
//! ('.' decimal separator) and rows end in a bare LF.

use std::fs::File;
use std::path::Path;

use crate::bench::BenchReport;
use crate::error::{Error, Result};
use crate::orchestrator::{IterationLog, RunConfig, RunLog};

pub const RUN_CSV_HEADER: [&str; 15] = [
    "iter",
    "version",
    "samples",
    "collect_s",
    "learn_s",
    "dropped_stale",
    "mean_return",
    "std_return",
    "eval_return",
    "loss",
    "vf_loss",
    "entropy",
    "approx_kl",
    "clip_frac",
    "grad_norm",
];

pub const BENCH_CSV_HEADER: [&str; 7] = [
    "n_workers",
    "trial",
    "iter",
    "collect_s",
    "learn_s",
    "samples",
    "dropped_stale",
];

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let io = match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::other(format!("{other:?}")),
    };
    Error::io(path, io)
}

fn run_record(row: &IterationLog) -> [String; 15] {
    let s = &row.stats;
    [
        row.timing.iteration.to_string(),
        row.version.to_string(),
        row.timing.samples_gathered.to_string(),
        row.timing.collect_time_s.to_string(),
        row.timing.learn_time_s.to_string(),
        row.timing.chunks_dropped_stale.to_string(),
        opt(row.mean_return),
        opt(row.std_return),
        opt(row.eval_return),
        s.loss.to_string(),
        s.value_loss.to_string(),
        s.entropy.to_string(),
        s.approx_kl.to_string(),
        s.clip_frac.to_string(),
        s.grad_norm.to_string(),
    ]
}

/// Appends one row per iteration and flushes after each.
pub struct RunCsvWriter {
    path: std::path::PathBuf,
    inner: csv::Writer<File>,
}

impl RunCsvWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut inner = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        inner.write_record(RUN_CSV_HEADER).map_err(|e| csv_err(path, e))?;
        inner.flush().map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            inner,
        })
    }

    pub fn write_row(&mut self, row: &IterationLog) -> Result<()> {
        self.inner
            .write_record(run_record(row))
            .map_err(|e| csv_err(&self.path, e))?;
        self.inner.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn write_run_csv(log: &RunLog, path: &Path) -> Result<()> {
    let mut w = RunCsvWriter::create(path)?;
    for row in &log.iterations {
        w.write_row(row)?;
    }
    Ok(())
}

/// Records the full configuration, including learner defaults, next to the run CSV.
pub fn write_run_config(path: &Path, cfg: &RunConfig) -> Result<()> {
    let value = serde_json::json!({
        "config": cfg,
        "calibration": cfg.calibration,
        "reproducibility": "runs with n_workers = 1 are bit-reproducible for a fixed config; \
                            runs with different n_workers are not sample-identical",
    });
    let text = serde_json::to_string_pretty(&value).expect("config serializes");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Incremental writer for the per-iteration benchmark CSV.
pub struct BenchCsvWriter {
    path: std::path::PathBuf,
    inner: csv::Writer<File>,
}

impl BenchCsvWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut inner = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        inner.write_record(BENCH_CSV_HEADER).map_err(|e| csv_err(path, e))?;
        inner.flush().map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            inner,
        })
    }

    pub fn write_rows<'a>(&mut self, rows: impl IntoIterator<Item = &'a crate::bench::BenchRow>) -> Result<()> {
        for r in rows {
            self.inner
                .write_record([
                    r.n_workers.to_string(),
                    r.trial.to_string(),
                    r.iter.to_string(),
                    r.collect_s.to_string(),
                    r.learn_s.to_string(),
                    r.samples.to_string(),
                    r.dropped_stale.to_string(),
                ])
                .map_err(|e| csv_err(&self.path, e))?;
        }
        self.inner.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn write_bench_csv(report: &BenchReport, path: &Path) -> Result<()> {
    BenchCsvWriter::create(path)?.write_rows(&report.rows)
}

pub fn write_bench_json(report: &BenchReport, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_bench_json(path: &Path) -> Result<BenchReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}
