//! Acceptance suite. Runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line each. Exits nonzero if any criterion fails.
//!
//! `ACCEPTANCE_ONLY=5,6,7` restricts the run to the listed criteria.

use std::collections::BTreeSet;
use std::ops::ControlFlow;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::mpsc;
use std::time::{Duration, Instant};

use pararl::bench::{run_bench, speedup_table, BenchConfig, SpeedupRow};
use pararl::envs::{BusyParams, EnvSpec};
use pararl::learner::{compute_gae, ppo_loss_and_grad, PpoHyper, PpoSample, Segment, SegmentEnd, Transition};
use pararl::nn::{finite_diff_grad_scaled, Rng};
use pararl::orchestrator::{gather, train, train_with, RunConfig, WorkerPool};
use pararl::policy::{
    decode_snapshot, encode_snapshot, init_policy, log_prob, policy_forward, sample_action, ActionValue,
    DistParams, ParameterSnapshot,
};
use pararl::sampler::{ExperienceChunk, FaultInjection, FaultKind};
use statrs::distribution::{ContinuousCDF, StudentsT};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn scratch_dir(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

// ---------------------------------------------------------------- oracles

fn gae_brute_force(r: &[f64], v: &[f64], term: &[bool], boot: f64, g: f64, l: f64) -> Vec<f64> {
    let n = r.len();
    let next_v = |t: usize| -> f64 {
        if term[t] {
            0.0
        } else if t + 1 < n {
            v[t + 1]
        } else {
            boot
        }
    };
    (0..n)
        .map(|t| {
            let mut sum = 0.0;
            let mut w = 1.0;
            for k in t..n {
                sum += w * (r[k] + g * next_v(k) - v[k]);
                if term[k] {
                    break;
                }
                w *= g * l;
            }
            sum
        })
        .collect()
}

fn gae_oracle() -> Outcome {
    let mut rng = Rng::new(0x6ae);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = 1 + rng.below(60);
        let r: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        // Terminal cut only at the last step of a segment, as the sampler produces.
        let mut term = vec![false; n];
        term[n - 1] = rng.uniform() < 0.5;
        let boot = if term[n - 1] { 0.0 } else { rng.normal() };
        let g = rng.uniform_range(0.9, 1.0);
        let l = rng.uniform_range(0.8, 1.0);
        let (adv, ret) = compute_gae(&r, &v, &term, boot, g, l).map_err(|e| e.to_string())?;
        let oracle = gae_brute_force(&r, &v, &term, boot, g, l);
        for t in 0..n {
            worst = worst.max((adv[t] - oracle[t]).abs());
            worst = worst.max((ret[t] - (oracle[t] + v[t])).abs());
        }
    }
    check(worst <= 1e-10, format!("100 segments, max |diff| = {worst:.3e} (tol 1e-10)"))
}

fn random_small_env(rng: &mut Rng) -> EnvSpec {
    match rng.below(3) {
        0 => EnvSpec::CartPole,
        1 => EnvSpec::Pendulum,
        _ => EnvSpec::Busy(BusyParams {
            step_cost_us: 0,
            episode_len: 10,
            obs_dim: 2 + rng.below(4),
        }),
    }
}

fn ppo_gradient_oracle() -> Outcome {
    let mut rng = Rng::new(0x9ad);
    let mut worst = 0.0f64;
    let mut max_params = 0;
    for net in 0..20 {
        let spec = random_small_env(&mut rng);
        let hidden: Vec<usize> = (0..1 + rng.below(2)).map(|_| 3 + rng.below(5)).collect();
        let mut snap = init_policy(&spec, &hidden, 1000 + net).map_err(|e| e.to_string())?;
        let n_params = snap.num_params();
        if n_params > 200 {
            return Err(format!("generated net has {n_params} params"));
        }
        max_params = max_params.max(n_params);
        let flat: Vec<f64> = snap.flat_params().iter().map(|x| x + 0.1 * rng.normal()).collect();
        snap.set_flat_params(&flat).map_err(|e| e.to_string())?;
        let hyper = PpoHyper {
            ent_coef: 0.01,
            ..PpoHyper::for_env(&spec)
        };
        let (lo, hi) = (1.0 - hyper.clip_eps, 1.0 + hyper.clip_eps);
        let mb: Vec<PpoSample> = (0..4 + rng.below(5))
            .map(|_| {
                let obs: Vec<f64> = (0..spec.obs_dim()).map(|_| rng.normal()).collect();
                let dist = policy_forward(&snap, &obs).expect("forward");
                let (action, lp) = sample_action(&dist, &mut rng);
                // Old log-prob offset so both the clipped and unclipped branches
                // occur, kept clear of the clip kinks where the loss is not smooth.
                let offset = loop {
                    let u = rng.uniform_range(-0.5, 0.5);
                    let ratio = f64::exp(u);
                    if (ratio - lo).abs() > 1e-3 && (ratio - hi).abs() > 1e-3 {
                        break u;
                    }
                };
                PpoSample {
                    obs,
                    action,
                    logprob_old: lp - offset,
                    advantage: rng.normal(),
                    value_target: rng.normal(),
                }
            })
            .collect();
        let (_, grad, _) = ppo_loss_and_grad(&snap, &mb, &hyper).map_err(|e| e.to_string())?;
        let mut probe = snap.clone();
        let fd = finite_diff_grad_scaled(
            |p| {
                probe.set_flat_params(p).expect("same shape");
                ppo_loss_and_grad(&probe, &mb, &hyper).expect("finite").0
            },
            &flat,
            |x| 1e-6 * x.abs().max(1.0),
        );
        for (a, b) in grad.iter().zip(fd.iter()) {
            worst = worst.max((a - b).abs() / a.abs().max(b.abs()).max(1e-4));
        }
    }
    check(
        worst <= 1e-4,
        format!("20 nets (<= {max_params} params), max rel err = {worst:.3e} (tol 1e-4)"),
    )
}

fn discrete_normalization() -> Outcome {
    let mut rng = Rng::new(0xd15c);
    let mut worst = 0.0f64;
    for n in 1..=16 {
        for _ in 0..50 {
            let scale = [0.1, 1.0, 10.0, 100.0][rng.below(4)];
            let logits: Vec<f64> = (0..n).map(|_| scale * rng.normal()).collect();
            let dist = DistParams::Categorical { logits };
            let total: f64 = (0..n).map(|a| log_prob(&dist, &ActionValue::Discrete(a)).exp()).sum();
            worst = worst.max((total - 1.0).abs());
        }
    }
    check(worst <= 1e-12, format!("n = 1..16, max |sum p - 1| = {worst:.3e} (tol 1e-12)"))
}

fn snapshot_round_trip() -> Outcome {
    let mut rng = Rng::new(0x5a9);
    for i in 0..50u64 {
        let spec = random_small_env(&mut rng);
        let mut snap = init_policy(&spec, &[1 + rng.below(9), 1 + rng.below(9)], i).map_err(|e| e.to_string())?;
        let flat: Vec<f64> = snap.flat_params().iter().map(|x| x * rng.normal() * 1e3).collect();
        snap.set_flat_params(&flat).map_err(|e| e.to_string())?;
        snap.version = rng.next_u64();
        let back = decode_snapshot(&encode_snapshot(&snap)).map_err(|e| e.to_string())?;
        let bits = |s: &ParameterSnapshot| s.flat_params().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        if back != snap || bits(&back) != bits(&snap) {
            return Err(format!("snapshot {i} changed across encode/decode"));
        }
    }
    Ok("50 random snapshots bit-exact".into())
}

fn reproducible_run() -> Outcome {
    let cfg = RunConfig {
        n_workers: 1,
        samples_per_iter: 1000,
        n_iters: 4,
        eval_episodes: 2,
        base_seed: 31,
        ..RunConfig::for_env(EnvSpec::CartPole)
    };
    let a = train(&cfg).map_err(|e| e.to_string())?;
    let b = train(&cfg).map_err(|e| e.to_string())?;
    let digests = |log: &pararl::orchestrator::RunLog| log.iterations.iter().map(|i| i.batch_digest).collect::<Vec<_>>();
    let bits = |s: &ParameterSnapshot| s.flat_params().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    let evals = |log: &pararl::orchestrator::RunLog| {
        log.iterations.iter().map(|i| i.eval_return.map(f64::to_bits)).collect::<Vec<_>>()
    };
    check(
        digests(&a) == digests(&b) && bits(&a.final_snapshot) == bits(&b.final_snapshot) && evals(&a) == evals(&b),
        format!("N = 1, {} iterations: batch digests, eval returns and final parameters identical", cfg.n_iters),
    )
}

fn criterion_6() -> Outcome {
    let parts: [(&str, fn() -> Outcome); 5] = [
        ("gae", gae_oracle),
        ("ppo-grad", ppo_gradient_oracle),
        ("normalization", discrete_normalization),
        ("snapshot", snapshot_round_trip),
        ("reproducibility", reproducible_run),
    ];
    let mut lines = Vec::new();
    let mut failed = false;
    for (name, f) in parts {
        match f() {
            Ok(d) => lines.push(format!("{name}: {d}")),
            Err(d) => {
                failed = true;
                lines.push(format!("{name}: FAILED {d}"))
            }
        }
    }
    check(!failed, lines.join("; "))
}

// --------------------------------------------------------------- protocol

fn fake_chunk(worker_id: usize, version: u64, len: usize) -> ExperienceChunk {
    let transitions = (0..len)
        .map(|i| Transition {
            obs: vec![i as f64; 4],
            action: ActionValue::Discrete(i % 2),
            reward: 1.0,
            terminated: false,
            time_limit: false,
            logprob_old: -std::f64::consts::LN_2,
        })
        .collect();
    ExperienceChunk {
        worker_id,
        version,
        transitions,
        segments: vec![Segment {
            start: 0,
            len,
            end: SegmentEnd::Truncated { final_obs: vec![0.0; 4] },
        }],
        complete: false,
        episode_returns: Vec::new(),
    }
}

fn stale_chunk_dropped() -> Outcome {
    let (tx, rx) = mpsc::sync_channel(8);
    let sender = std::thread::spawn(move || {
        tx.send(fake_chunk(0, 7, 100)).unwrap();
        // A straggler from the previous iteration arrives late, mid-gather.
        std::thread::sleep(Duration::from_millis(30));
        tx.send(fake_chunk(1, 6, 100)).unwrap();
        tx.send(fake_chunk(1, 7, 100)).unwrap();
        tx.send(fake_chunk(2, 7, 100)).unwrap();
    });
    let (batch, stats) = gather(7, 300, &rx, || Ok(())).map_err(|e| e.to_string())?;
    sender.join().unwrap();
    check(
        stats.chunks_dropped_stale == 1 && stats.chunks_accepted == 3 && batch.len() == 300 && batch.version == 7,
        format!(
            "dropped {} stale, accepted {} chunks, batch {} transitions at version {}",
            stats.chunks_dropped_stale,
            stats.chunks_accepted,
            batch.len(),
            batch.version
        ),
    )
}

fn overshoot_bound() -> Outcome {
    let cfg = RunConfig {
        n_workers: 4,
        samples_per_iter: 1500,
        chunk_cap: 128,
        ..RunConfig::for_env(EnvSpec::CartPole)
    };
    let mut snap = init_policy(&cfg.env_spec, &cfg.hidden_dims, 5).map_err(|e| e.to_string())?;
    let mut pool = WorkerPool::spawn(&cfg, &snap).map_err(|e| e.to_string())?;
    let (lo, hi) = (cfg.samples_per_iter, cfg.samples_per_iter + cfg.n_workers * cfg.chunk_cap);
    let (mut min, mut max, mut stale) = (usize::MAX, 0, 0);
    for _ in 0..50 {
        pool.broadcast(&snap).map_err(|e| e.to_string())?;
        let (batch, stats) = pool.gather(snap.version, cfg.samples_per_iter).map_err(|e| e.to_string())?;
        pool.stop_iter(snap.version);
        batch.validate().map_err(|e| e.to_string())?;
        min = min.min(stats.samples);
        max = max.max(stats.samples);
        stale += stats.chunks_dropped_stale;
        snap.version += 1;
    }
    let report = pool.shutdown();
    check(
        min >= lo && max <= hi && report.forced.is_empty(),
        format!("50 gathers, samples in [{min}, {max}] within [{lo}, {hi}], {stale} stale chunks dropped"),
    )
}

fn fault_shutdown() -> Outcome {
    let mut lines = Vec::new();
    for kind in [FaultKind::Panic, FaultKind::Error] {
        let cfg = RunConfig {
            n_workers: 4,
            samples_per_iter: 2000,
            n_iters: 1000,
            eval_episodes: 0,
            shutdown_timeout_s: 5.0,
            fault: Some(FaultInjection {
                worker_id: 2,
                after_chunks: 3,
                kind,
            }),
            ..RunConfig::for_env(EnvSpec::CartPole)
        };
        let snap = init_policy(&cfg.env_spec, &cfg.hidden_dims, 1).map_err(|e| e.to_string())?;
        let mut pool = WorkerPool::spawn(&cfg, &snap).map_err(|e| e.to_string())?;
        let live = pool.live_counter();
        let mut version_snap = snap.clone();
        let mut err = None;
        let mut iters = 0;
        let t_loop = Instant::now();
        // The faulty worker may get little CPU time on a busy machine, so keep
        // iterating until the fault surfaces or the deadline passes.
        while t_loop.elapsed() < Duration::from_secs(30) {
            iters += 1;
            pool.broadcast(&version_snap).map_err(|e| e.to_string())?;
            match pool.gather(version_snap.version, cfg.samples_per_iter) {
                Ok(_) => pool.stop_iter(version_snap.version),
                Err(e) => {
                    err = Some(e.to_string());
                    break;
                }
            }
            version_snap.version += 1;
        }
        let report = pool.shutdown();
        drop(pool);
        let remaining = live.load(std::sync::atomic::Ordering::SeqCst);
        let Some(err) = err else {
            return Err(format!("{kind:?}: injected fault never surfaced in {iters} iterations"));
        };
        if remaining != 0 || !report.forced.is_empty() {
            return Err(format!("{kind:?}: {remaining} live workers, forced {:?}", report.forced));
        }
        lines.push(format!("{kind:?}: aborted ({err}), {} joined, 0 live", report.joined));

        // The same fault through the training loop must return an error, not hang.
        let t0 = Instant::now();
        match train(&cfg) {
            Ok(_) => return Err(format!("{kind:?}: train ignored the fault")),
            Err(_) if t0.elapsed() < Duration::from_secs(60) => {}
            Err(_) => return Err(format!("{kind:?}: train took {:?} to abort", t0.elapsed())),
        }
    }

    // Early termination requested by the caller.
    let cfg = RunConfig {
        n_workers: 4,
        samples_per_iter: 1000,
        n_iters: 10,
        eval_episodes: 0,
        ..RunConfig::for_env(EnvSpec::CartPole)
    };
    let log = train_with(&cfg, |row| {
        if row.timing.iteration == 1 {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })
    .map_err(|e| e.to_string())?;
    let s = &log.shutdown;
    if log.iterations.len() != 2 || s.joined != 4 || !s.forced.is_empty() || !s.worker_errors.is_empty() {
        return Err(format!("early stop: {} iterations, shutdown {s:?}", log.iterations.len()));
    }
    lines.push("early stop after 2 iterations: 4 joined, 0 forced".into());
    Ok(lines.join("; "))
}

fn criterion_7() -> Outcome {
    let parts: [(&str, fn() -> Outcome); 3] = [
        ("stale", stale_chunk_dropped),
        ("overshoot", overshoot_bound),
        ("shutdown", fault_shutdown),
    ];
    let mut lines = Vec::new();
    let mut failed = false;
    for (name, f) in parts {
        match f() {
            Ok(d) => lines.push(format!("{name}: {d}")),
            Err(d) => {
                failed = true;
                lines.push(format!("{name}: FAILED {d}"))
            }
        }
    }
    check(!failed, lines.join("; "))
}

// --------------------------------------------------------------- learning

const LEARNING_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

struct SeedResult {
    seed: u64,
    first_hit: Option<usize>,
    final_eval: f64,
}

fn cartpole_runs(n_workers: usize) -> Result<(Vec<SeedResult>, f64), String> {
    let t0 = Instant::now();
    let mut out = Vec::new();
    for seed in LEARNING_SEEDS {
        let cfg = RunConfig {
            n_workers,
            samples_per_iter: 4000,
            n_iters: 50,
            base_seed: seed,
            ..RunConfig::for_env(EnvSpec::CartPole)
        };
        let log = train(&cfg).map_err(|e| format!("seed {seed}: {e}"))?;
        let evals: Vec<f64> = log.iterations.iter().map(|i| i.eval_return.unwrap_or(f64::NAN)).collect();
        out.push(SeedResult {
            seed,
            first_hit: evals.iter().position(|&r| r >= 195.0),
            final_eval: *evals.last().ok_or("no iterations")?,
        });
    }
    Ok((out, t0.elapsed().as_secs_f64()))
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

/// Two-sided Welch t-test p-value. Two constant samples give 1 if equal, 0 otherwise.
fn welch_p(a: &[f64], b: &[f64]) -> f64 {
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = sa + sb;
    if se2 == 0.0 {
        return if ma == mb { 1.0 } else { 0.0 };
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (a.len() as f64 - 1.0) + sb * sb / (b.len() as f64 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).expect("valid t distribution");
    2.0 * (1.0 - dist.cdf(t.abs()))
}

fn criterion_5() -> Outcome {
    let (one, wall) = cartpole_runs(1)?;
    let reached = one.iter().filter(|r| r.first_hit.is_some()).count();
    let per_seed: Vec<String> = one
        .iter()
        .map(|r| match r.first_hit {
            Some(i) => format!("seed {} hit 195 at iter {i}, final {:.1}", r.seed, r.final_eval),
            None => format!("seed {} never hit 195, final {:.1}", r.seed, r.final_eval),
        })
        .collect();
    println!("  criterion 5 detail (N=1): {}", per_seed.join("; "));

    let (four, wall4) = cartpole_runs(4)?;
    let a: Vec<f64> = one.iter().map(|r| r.final_eval).collect();
    let b: Vec<f64> = four.iter().map(|r| r.final_eval).collect();
    let p = welch_p(&a, &b);
    println!("  criterion 5 detail (N=4): final evals {b:?}, {wall4:.0}s");

    check(
        reached >= 3 && wall <= 600.0 && p >= 0.05,
        format!(
            "{reached}/5 seeds reached eval >= 195 within 50 iters in {wall:.0}s (need 3/5, <= 600s); \
             final eval N=1 {a:?} vs N=4 {b:?}, Welch p = {p:.3} (need >= 0.05)"
        ),
    )
}

// ---------------------------------------------------------------- scaling

fn row(table: &[SpeedupRow], n: usize) -> Result<&SpeedupRow, String> {
    table.iter().find(|r| r.n_workers == n).ok_or(format!("no aggregate for N = {n}"))
}

fn scaling_criteria(selected: &BTreeSet<u32>, results: &mut Vec<(u32, &'static str, Outcome)>) {
    let cfg = BenchConfig {
        out_dir: Some(scratch_dir("bench")),
        ..BenchConfig::default()
    };
    let t0 = Instant::now();
    let table = run_bench(&cfg).map_err(|e| e.to_string()).and_then(|report| {
        if !report.failures.is_empty() {
            return Err(format!("bench cells failed: {:?}", report.failures));
        }
        println!(
            "  benchmark: {} logical / {} physical cores, {:.0}s",
            report.machine.logical_cores,
            report.machine.physical_cores,
            t0.elapsed().as_secs_f64()
        );
        speedup_table(&report).map_err(|e| e.to_string())
    });
    if let Ok(t) = &table {
        for r in t {
            println!(
                "  N={}: collect {:.3}s learn {:.3}s speedup {:.2} collect share {:.1}%",
                r.n_workers, r.median_collect_s, r.median_learn_s, r.speedup, r.collect_share_pct
            );
        }
    }

    let c1 = || -> Outcome {
        let t = table.as_ref().map_err(Clone::clone)?;
        let (s2, s4, s8) = (row(t, 2)?.speedup, row(t, 4)?.speedup, row(t, 8)?.speedup);
        let not_over = t.iter().all(|r| r.speedup <= r.n_workers as f64);
        check(
            s2 >= 1.7 && s4 >= 3.0 && s8 >= 5.5 && not_over,
            format!("speedup(2) {s2:.2} (>= 1.7), speedup(4) {s4:.2} (>= 3.0), speedup(8) {s8:.2} (>= 5.5), all <= N: {not_over}"),
        )
    };
    let c2 = || -> Outcome {
        let t = table.as_ref().map_err(Clone::clone)?;
        let c: Vec<f64> = [1, 2, 4].iter().map(|&n| row(t, n).map(|r| r.median_collect_s)).collect::<Result<_, _>>()?;
        check(
            c[0] > c[1] && c[1] > c[2],
            format!("median collect N=1 {:.3}s, N=2 {:.3}s, N=4 {:.3}s (strictly decreasing)", c[0], c[1], c[2]),
        )
    };
    let c3 = || -> Outcome {
        let t = table.as_ref().map_err(Clone::clone)?;
        let (a, b) = (row(t, 1)?, row(t, 8)?);
        let drop = a.collect_share_pct - b.collect_share_pct;
        check(
            drop >= 30.0 && b.learn_share_pct > a.learn_share_pct,
            format!(
                "collect share N=1 {:.1}% -> N=8 {:.1}% (drop {drop:.1} points, need >= 30); learn share {:.1}% -> {:.1}%",
                a.collect_share_pct, b.collect_share_pct, a.learn_share_pct, b.learn_share_pct
            ),
        )
    };
    let c4 = || -> Outcome {
        let t = table.as_ref().map_err(Clone::clone)?;
        let base = row(t, 1)?.median_learn_s;
        let l: Vec<f64> = t.iter().map(|r| r.median_learn_s).collect();
        let worst = l.iter().map(|x| (x / base - 1.0).abs()).fold(0.0f64, f64::max);
        check(
            worst <= 0.30,
            format!(
                "median learn time {l:.3?}s, max deviation from N=1 {:.1}% (need <= 30%)",
                100.0 * worst
            ),
        )
    };
    let all: [(u32, &'static str, &dyn Fn() -> Outcome); 4] = [
        (1, "near-linear collection speedup", &c1),
        (2, "collection time decreases to N=4", &c2),
        (3, "collection share drops at N=8", &c3),
        (4, "flat learning time across N", &c4),
    ];
    for (id, name, f) in all {
        if selected.contains(&id) {
            results.push((id, name, f()));
        }
    }
}

// ------------------------------------------------------------------- main

fn guarded(f: fn() -> Outcome) -> Outcome {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| p.downcast_ref::<String>().cloned())
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    })
}

fn main() {
    let selected: BTreeSet<u32> = match std::env::var("ACCEPTANCE_ONLY") {
        Ok(s) if !s.trim().is_empty() => s.split(',').filter_map(|x| x.trim().parse().ok()).collect(),
        _ => (1..=7).collect(),
    };
    let mut results: Vec<(u32, &'static str, Outcome)> = Vec::new();
    let singles: [(u32, &'static str, fn() -> Outcome); 3] = [
        (6, "oracle suites", criterion_6),
        (7, "protocol suite", criterion_7),
        (5, "cartpole learning sanity", criterion_5),
    ];
    for (id, name, f) in singles {
        if selected.contains(&id) {
            let t0 = Instant::now();
            let out = guarded(f);
            println!("  criterion {id} took {:.1}s", t0.elapsed().as_secs_f64());
            results.push((id, name, out));
        }
    }
    if (1..=4).any(|id| selected.contains(&id)) {
        scaling_criteria(&selected, &mut results);
    }

    results.sort_by_key(|r| r.0);
    let mut failed = 0;
    println!();
    for (id, name, out) in &results {
        match out {
            Ok(d) => println!("PASS criterion {id} ({name}): {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {id} ({name}): {d}")
            }
        }
    }
    println!("\n{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
