//! Collection speedup over worker counts on the busy environment.
//!
//!     cargo run --release --example speedup_bench -- [step_cost_us] [samples]
//!
//! Defaults are small enough to finish in about a minute. The `pararl bench`
//! command runs the full-size sweep.

use pararl::bench::{run_bench, BenchConfig};
use pararl::envs::{BusyParams, EnvSpec};

fn main() -> pararl::Result<()> {
    let mut args = std::env::args().skip(1);
    let step_cost_us = args.next().and_then(|s| s.parse().ok()).unwrap_or(100);
    let samples_per_iter = args.next().and_then(|s| s.parse().ok()).unwrap_or(4096);

    let cores = num_cpus::get();
    let worker_counts: Vec<usize> = [1, 2, 4, 8].into_iter().filter(|&n| n == 1 || n <= 2 * cores).collect();
    let cfg = BenchConfig {
        worker_counts,
        trials: 2,
        iters: 3,
        samples_per_iter,
        env_spec: EnvSpec::Busy(BusyParams::with_step_cost(step_cost_us)),
        out_dir: Some(std::env::temp_dir().join("pararl_speedup")),
        ..BenchConfig::default()
    };
    let report = run_bench(&cfg)?;
    println!("{} logical cores", report.machine.logical_cores);
    println!("{:>3} {:>10} {:>10} {:>8} {:>9}", "N", "collect_s", "learn_s", "speedup", "collect%");
    for r in &report.aggregates {
        println!(
            "{:>3} {:>10.3} {:>10.3} {:>8.2} {:>8.1}%{}",
            r.n_workers,
            r.median_collect_s,
            r.median_learn_s,
            r.speedup,
            r.collect_share_pct,
            if r.over_linear { "  (over-linear!)" } else { "" }
        );
    }
    for note in &report.notes {
        println!("note: {note}");
    }
    Ok(())
}
