//! Worker-count sweep: the same training run repeated for each N, reduced
//! to median collection time, speedup and time shares.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::envs::{busy_calibration, BusyParams, EnvSpec};
use crate::error::{Error, Result};
use crate::learner::PpoHyper;
use crate::orchestrator::{train, RunConfig};
use crate::report::{write_bench_json, BenchCsvWriter};
use crate::sampler::DEFAULT_CHUNK_CAP;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub worker_counts: Vec<usize>,
    pub trials: usize,
    pub iters: usize,
    pub samples_per_iter: usize,
    pub env_spec: EnvSpec,
    pub hyper: PpoHyper,
    pub hidden_dims: Vec<usize>,
    pub base_seed: u64,
    pub chunk_cap: usize,
    pub out_dir: Option<PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        let env_spec = EnvSpec::Busy(BusyParams::default());
        Self {
            worker_counts: vec![1, 2, 4, 8],
            trials: 3,
            iters: 5,
            samples_per_iter: 20_000,
            hyper: PpoHyper::for_env(&env_spec),
            env_spec,
            hidden_dims: vec![64, 64],
            base_seed: 0,
            chunk_cap: DEFAULT_CHUNK_CAP,
            out_dir: None,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.worker_counts.is_empty() {
            return Err(Error::Config("worker_counts must be nonempty".into()));
        }
        if self.worker_counts.contains(&0) {
            return Err(Error::Config("worker counts must be >= 1".into()));
        }
        if self.worker_counts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "worker_counts must be strictly ascending, got {:?}",
                self.worker_counts
            )));
        }
        if self.trials == 0 || self.iters == 0 {
            return Err(Error::Config("trials and iters must be >= 1".into()));
        }
        self.run_config(self.worker_counts[0], 0).validate()
    }

    /// Everything but `n_workers` is identical across cells of the sweep.
    pub fn run_config(&self, n_workers: usize, trial: usize) -> RunConfig {
        RunConfig {
            env_spec: self.env_spec,
            n_workers,
            samples_per_iter: self.samples_per_iter,
            n_iters: self.iters,
            hyper: self.hyper,
            hidden_dims: self.hidden_dims.clone(),
            base_seed: self.base_seed.wrapping_add(trial as u64),
            chunk_cap: self.chunk_cap,
            eval_episodes: 0,
            checkpoint_every: 0,
            out_dir: None,
            ..RunConfig::for_env(self.env_spec)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n_workers: usize,
    pub trial: usize,
    pub iter: usize,
    pub collect_s: f64,
    pub learn_s: f64,
    pub samples: usize,
    pub dropped_stale: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub n_workers: usize,
    pub trial: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineMeta {
    pub logical_cores: usize,
    pub physical_cores: usize,
    pub busy_iters_per_us: Option<f64>,
    pub os: String,
    pub arch: String,
}

impl MachineMeta {
    pub fn probe(env_spec: &EnvSpec) -> Self {
        Self {
            logical_cores: num_cpus::get(),
            physical_cores: num_cpus::get_physical(),
            busy_iters_per_us: matches!(env_spec, EnvSpec::Busy(_)).then(|| busy_calibration().iters_per_us),
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupRow {
    pub n_workers: usize,
    pub median_collect_s: f64,
    pub median_learn_s: f64,
    pub speedup: f64,
    pub collect_share_pct: f64,
    pub learn_share_pct: f64,
    /// `speedup > n_workers`, which should never happen.
    pub over_linear: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub machine: MachineMeta,
    pub config: BenchConfig,
    pub rows: Vec<BenchRow>,
    pub failures: Vec<TrialFailure>,
    pub aggregates: Vec<SpeedupRow>,
    pub notes: Vec<String>,
}

pub fn median(xs: &mut [f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    Some(if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    })
}

/// Rows used for aggregation: the first iteration of every trial is warm-up
/// and dropped, unless a trial has only one iteration.
fn steady_rows(rows: &[BenchRow], n: usize) -> Vec<&BenchRow> {
    let cell: Vec<&BenchRow> = rows.iter().filter(|r| r.n_workers == n).collect();
    let steady: Vec<&BenchRow> = cell.iter().copied().filter(|r| r.iter > 0).collect();
    if steady.is_empty() {
        cell
    } else {
        steady
    }
}

/// Per-N medians, speedup relative to N = 1, and collection/learning shares.
pub fn speedup_table(report: &BenchReport) -> Result<Vec<SpeedupRow>> {
    let mut counts: Vec<usize> = report.rows.iter().map(|r| r.n_workers).collect();
    counts.sort_unstable();
    counts.dedup();

    let medians = |n: usize| -> Option<(f64, f64)> {
        let rows = steady_rows(&report.rows, n);
        let mut c: Vec<f64> = rows.iter().map(|r| r.collect_s).collect();
        let mut l: Vec<f64> = rows.iter().map(|r| r.learn_s).collect();
        Some((median(&mut c)?, median(&mut l)?))
    };
    let (base_collect, _) = medians(1)
        .ok_or_else(|| Error::Config("speedup table needs an N = 1 baseline".into()))?;

    Ok(counts
        .into_iter()
        .filter_map(|n| {
            let (c, l) = medians(n)?;
            let speedup = if n == 1 { 1.0 } else { base_collect / c };
            let collect_share_pct = 100.0 * c / (c + l);
            Some(SpeedupRow {
                n_workers: n,
                median_collect_s: c,
                median_learn_s: l,
                speedup,
                collect_share_pct,
                learn_share_pct: 100.0 - collect_share_pct,
                over_linear: speedup > n as f64,
            })
        })
        .collect())
}

/// Runs every (N, trial) cell sequentially. A failed cell is recorded and
/// the sweep continues.
pub fn run_bench(config: &BenchConfig) -> Result<BenchReport> {
    config.validate()?;
    let machine = MachineMeta::probe(&config.env_spec);
    let calibration = matches!(config.env_spec, EnvSpec::Busy(_)).then(busy_calibration);

    let mut csv = match &config.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            Some(BenchCsvWriter::create(&dir.join("bench.csv"))?)
        }
        None => None,
    };

    let mut notes = vec![
        "learner hyperparameters, samples per iteration and seeds are identical across worker counts; \
         only n_workers varies"
            .to_string(),
        "first iteration of each trial excluded from aggregates (warm-up); medians reported".to_string(),
    ];
    let max_n = *config.worker_counts.last().expect("validated nonempty");
    if machine.physical_cores < max_n {
        notes.push(format!(
            "machine has {} physical / {} logical cores, fewer than the largest worker count {max_n}; \
             speedups above the core count are not expected",
            machine.physical_cores, machine.logical_cores
        ));
    }

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &n in &config.worker_counts {
        for trial in 0..config.trials {
            let run_cfg = RunConfig {
                calibration,
                ..config.run_config(n, trial)
            };
            match train(&run_cfg) {
                Ok(log) => {
                    let cell: Vec<BenchRow> = log
                        .iterations
                        .iter()
                        .map(|it| BenchRow {
                            n_workers: n,
                            trial,
                            iter: it.timing.iteration,
                            collect_s: it.timing.collect_time_s,
                            learn_s: it.timing.learn_time_s,
                            samples: it.timing.samples_gathered,
                            dropped_stale: it.timing.chunks_dropped_stale,
                        })
                        .collect();
                    if let Some(w) = csv.as_mut() {
                        w.write_rows(&cell)?;
                    }
                    rows.extend(cell);
                }
                Err(e) => failures.push(TrialFailure {
                    n_workers: n,
                    trial,
                    error: e.to_string(),
                }),
            }
        }
    }

    let mut report = BenchReport {
        machine,
        config: config.clone(),
        rows,
        failures,
        aggregates: Vec::new(),
        notes,
    };
    match speedup_table(&report) {
        Ok(table) => {
            for r in table.iter().filter(|r| r.over_linear) {
                report.notes.push(format!(
                    "over-linear speedup flagged: N = {} gives {:.3}",
                    r.n_workers, r.speedup
                ));
            }
            report.aggregates = table;
        }
        Err(e) => report.notes.push(format!("no aggregates: {e}")),
    }
    if let Some(dir) = &config.out_dir {
        write_bench_json(&report, &dir.join("bench.json"))?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> MachineMeta {
        MachineMeta {
            logical_cores: 1,
            physical_cores: 1,
            busy_iters_per_us: None,
            os: "linux".into(),
            arch: "x86_64".into(),
        }
    }

    fn report_from(cells: &[(usize, f64, f64)]) -> BenchReport {
        let rows = cells
            .iter()
            .map(|&(n, c, l)| BenchRow {
                n_workers: n,
                trial: 0,
                iter: 1,
                collect_s: c,
                learn_s: l,
                samples: 100,
                dropped_stale: 0,
            })
            .collect();
        BenchReport {
            machine: meta(),
            config: BenchConfig::default(),
            rows,
            failures: vec![],
            aggregates: vec![],
            notes: vec![],
        }
    }

    #[test]
    fn speedups_are_median_ratios() {
        let r = report_from(&[(1, 100.0, 1.0), (2, 52.0, 1.0), (4, 27.0, 1.0)]);
        let t = speedup_table(&r).unwrap();
        let s: Vec<f64> = t.iter().map(|r| r.speedup).collect();
        assert_eq!(s[0], 1.0);
        assert!((s[1] - 1.923).abs() < 1e-3);
        assert!((s[2] - 3.704).abs() < 1e-3);
        assert!(t.iter().all(|r| !r.over_linear));
    }

    #[test]
    fn shares() {
        let t = speedup_table(&report_from(&[(1, 4.0, 1.0)])).unwrap();
        assert_eq!(t.len(), 1);
        assert!((t[0].collect_share_pct - 80.0).abs() < 1e-12);
        assert!((t[0].learn_share_pct - 20.0).abs() < 1e-12);
    }

    #[test]
    fn over_linear_flagged() {
        let t = speedup_table(&report_from(&[(1, 10.0, 1.0), (2, 4.0, 1.0)])).unwrap();
        assert!(t[1].over_linear);
    }

    #[test]
    fn missing_baseline_is_error() {
        assert!(speedup_table(&report_from(&[(2, 1.0, 1.0)])).is_err());
    }

    #[test]
    fn warmup_excluded_and_median_used() {
        let mut r = report_from(&[]);
        for (iter, c) in [(0, 100.0), (1, 3.0), (2, 5.0), (3, 4.0)] {
            r.rows.push(BenchRow {
                n_workers: 1,
                trial: 0,
                iter,
                collect_s: c,
                learn_s: 1.0,
                samples: 1,
                dropped_stale: 0,
            });
        }
        assert_eq!(speedup_table(&r).unwrap()[0].median_collect_s, 4.0);
    }

    #[test]
    fn config_validation() {
        let ok = BenchConfig::default();
        assert!(ok.validate().is_ok());
        for counts in [vec![], vec![0, 1], vec![2, 1], vec![1, 1]] {
            let c = BenchConfig {
                worker_counts: counts,
                ..BenchConfig::default()
            };
            assert!(c.validate().is_err());
        }
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
    }
}
