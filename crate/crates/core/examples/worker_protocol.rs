//! Driving the sampler pool by hand: broadcast, gather, stop, shutdown.
//! Chunks left over from an earlier version show up as dropped stale chunks.

use pararl::envs::EnvSpec;
use pararl::orchestrator::{RunConfig, WorkerPool};
use pararl::policy::init_policy;

fn main() -> pararl::Result<()> {
    let cfg = RunConfig {
        n_workers: 4,
        samples_per_iter: 2000,
        chunk_cap: 128,
        ..RunConfig::for_env(EnvSpec::CartPole)
    };
    let mut snap = init_policy(&cfg.env_spec, &cfg.hidden_dims, 0)?;
    let mut pool = WorkerPool::spawn(&cfg, &snap)?;
    println!("{} workers live", pool.live_workers());

    for _ in 0..5 {
        pool.broadcast(&snap)?;
        let (batch, stats) = pool.gather(snap.version, cfg.samples_per_iter)?;
        pool.stop_iter(snap.version);
        println!(
            "version {}: {} samples in {} segments, {} stale dropped, per worker {:?}",
            batch.version,
            stats.samples,
            batch.segments.len(),
            stats.chunks_dropped_stale,
            stats.chunks_per_worker
        );
        // A real learner would update here; bumping the version is enough to
        // exercise the protocol.
        snap.version += 1;
    }

    let report = pool.shutdown();
    println!(
        "shutdown: {} joined, {} forced, errors {:?}; {} live",
        report.joined,
        report.forced.len(),
        report.worker_errors,
        pool.live_workers()
    );
    Ok(())
}
