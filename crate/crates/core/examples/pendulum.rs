//! Continuous control: PPO with a Gaussian head on the pendulum swing-up.
//! Returns start around -1200 and climb as the policy learns to swing up.
//!
//!     cargo run --release --example pendulum -- [iters]

use pararl::envs::EnvSpec;
use pararl::orchestrator::{train_with, RunConfig};
use pararl::report::write_run_csv;

fn main() -> pararl::Result<()> {
    let n_iters = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(30);
    let cfg = RunConfig {
        n_workers: 2,
        n_iters,
        eval_episodes: 5,
        ..RunConfig::for_env(EnvSpec::Pendulum)
    };
    let log = train_with(&cfg, |row| {
        println!(
            "iter {:3}  return {:>8.1}  eval {:>8.1}  entropy {:.3}",
            row.timing.iteration,
            row.mean_return.unwrap_or(f64::NAN),
            row.eval_return.unwrap_or(f64::NAN),
            row.stats.entropy
        );
        std::ops::ControlFlow::Continue(())
    })?;
    let path = std::env::temp_dir().join("pendulum_run.csv");
    write_run_csv(&log, &path)?;
    println!("log written to {}", path.display());
    println!("final log_std {:?}", log.final_snapshot.log_std);
    Ok(())
}
