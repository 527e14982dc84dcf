//! Train cartpole with a few samplers and stop once the greedy policy
//! balances for the full horizon.
//!
//!     cargo run --release --example train_cartpole -- [workers] [seed]

use std::ops::ControlFlow;

use pararl::envs::EnvSpec;
use pararl::orchestrator::{train_with, RunConfig};

fn main() -> pararl::Result<()> {
    let mut args = std::env::args().skip(1);
    let n_workers = args.next().and_then(|s| s.parse().ok()).unwrap_or(2);
    let base_seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);

    let cfg = RunConfig {
        n_workers,
        base_seed,
        ..RunConfig::for_env(EnvSpec::CartPole)
    };
    let log = train_with(&cfg, |row| {
        println!(
            "iter {:3}  collect {:.3}s  learn {:.3}s  train return {:>7.1}  eval {:>6.1}",
            row.timing.iteration,
            row.timing.collect_time_s,
            row.timing.learn_time_s,
            row.mean_return.unwrap_or(f64::NAN),
            row.eval_return.unwrap_or(f64::NAN),
        );
        if row.eval_return == Some(500.0) {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })?;
    println!(
        "{} iterations in {:.1}s, {} workers joined",
        log.iterations.len(),
        log.total_wall_s,
        log.shutdown.joined
    );
    Ok(())
}
