//! A sampler that fails mid-run aborts training cleanly: the error reaches
//! the caller and every other worker is joined.

use pararl::envs::EnvSpec;
use pararl::orchestrator::{train, RunConfig};
use pararl::sampler::{FaultInjection, FaultKind};

fn main() {
    for kind in [FaultKind::Error, FaultKind::Panic] {
        let cfg = RunConfig {
            n_workers: 3,
            n_iters: 50,
            eval_episodes: 0,
            fault: Some(FaultInjection {
                worker_id: 1,
                after_chunks: 2,
                kind,
            }),
            ..RunConfig::for_env(EnvSpec::CartPole)
        };
        match train(&cfg) {
            Ok(_) => println!("{kind:?}: run finished before the fault fired"),
            Err(e) => println!("{kind:?}: training aborted with: {e}"),
        }
    }
}
