//! Command-line front end: `train`, `bench` and `eval`.
//!
//! Exit codes: 0 success, 1 runtime error, 2 usage error.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::bench::{run_bench, BenchConfig};
use crate::config::{default_out_dir, parse_list, Settings, RUN_KEYS};
use crate::envs::{BusyParams, EnvSpec};
use crate::error::{Error, Result};
use crate::orchestrator::{evaluate_policy, train_with};
use crate::policy::{read_checkpoint, PolicyHead};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "pararl", about = "Parallel rollout sampling with a PPO learner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a policy and write run.csv plus a checkpoint.
    Train(TrainArgs),
    /// Sweep worker counts and report collection speedup.
    Bench(BenchArgs),
    /// Evaluate a checkpoint's deterministic policy.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct HyperArgs {
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    clip_eps: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    minibatch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    vf_coef: Option<f64>,
    #[arg(long)]
    ent_coef: Option<f64>,
    #[arg(long)]
    max_grad_norm: Option<f64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// cartpole | pendulum | busy
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    samples_per_iter: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// key=value config file; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    chunk_cap: Option<usize>,
    #[arg(long)]
    eval_episodes: Option<usize>,
    /// Comma-separated hidden layer widths
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    step_cost_us: Option<u64>,
    #[arg(long)]
    episode_len: Option<usize>,
    #[arg(long)]
    obs_dim: Option<usize>,
    #[command(flatten)]
    hyper: HyperArgs,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Comma-separated worker counts, ascending
    #[arg(long, value_delimiter = ',')]
    workers: Option<Vec<usize>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    step_cost_us: Option<u64>,
    #[arg(long)]
    samples_per_iter: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 20)]
    episodes: usize,
    #[arg(long, default_value_t = 12345)]
    seed: u64,
    /// Defaults to the environment matching the checkpoint's shapes
    #[arg(long)]
    env: Option<String>,
}

fn put<T: ToString>(s: &mut Settings, key: &str, v: &Option<T>) {
    if let Some(v) = v {
        s.set(key, v.to_string());
    }
}

fn hyper_overrides(s: &mut Settings, h: &HyperArgs) {
    put(s, "hyper.gamma", &h.gamma);
    put(s, "hyper.lambda", &h.lambda);
    put(s, "hyper.clip_eps", &h.clip_eps);
    put(s, "hyper.epochs", &h.epochs);
    put(s, "hyper.minibatch_size", &h.minibatch_size);
    put(s, "hyper.lr", &h.lr);
    put(s, "hyper.vf_coef", &h.vf_coef);
    put(s, "hyper.ent_coef", &h.ent_coef);
    put(s, "hyper.max_grad_norm", &h.max_grad_norm);
}

fn load_settings(path: &Option<PathBuf>) -> Result<Settings> {
    match path {
        Some(p) => Settings::load(p),
        None => Ok(Settings::default()),
    }
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut s = load_settings(&a.config)?;
    put(&mut s, "env", &a.env);
    put(&mut s, "workers", &a.workers);
    put(&mut s, "samples_per_iter", &a.samples_per_iter);
    put(&mut s, "iters", &a.iters);
    put(&mut s, "seed", &a.seed);
    put(&mut s, "chunk_cap", &a.chunk_cap);
    put(&mut s, "eval_episodes", &a.eval_episodes);
    put(&mut s, "hidden", &a.hidden);
    put(&mut s, "busy.step_cost_us", &a.step_cost_us);
    put(&mut s, "busy.episode_len", &a.episode_len);
    put(&mut s, "busy.obs_dim", &a.obs_dim);
    if let Some(out) = &a.out {
        s.set("out", out.display().to_string());
    }
    hyper_overrides(&mut s, &a.hyper);

    let mut cfg = s.run_config()?;
    if cfg.out_dir.is_none() {
        cfg.out_dir = Some(default_out_dir("train"));
    }
    cfg.validate()?;
    let out = cfg.out_dir.clone().expect("set above");
    println!(
        "training {} with {} worker(s), {} samples/iter, {} iters -> {}",
        cfg.env_spec,
        cfg.n_workers,
        cfg.samples_per_iter,
        cfg.n_iters,
        out.display()
    );
    let log = train_with(&cfg, |row| {
        let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.2}"));
        println!(
            "iter {:>4}  samples {:>6}  collect {:>8.3}s  learn {:>8.3}s  return {:>9}  eval {:>9}",
            row.timing.iteration,
            row.timing.samples_gathered,
            row.timing.collect_time_s,
            row.timing.learn_time_s,
            fmt(row.mean_return),
            fmt(row.eval_return),
        );
        std::ops::ControlFlow::Continue(())
    })?;
    println!(
        "done in {:.2}s; final version {}; checkpoint {}",
        log.total_wall_s,
        log.final_snapshot.version,
        out.join("checkpoint.bin").display()
    );
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let mut s = load_settings(&a.config)?;
    if let Some(w) = &a.workers {
        s.set(
            "workers",
            w.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(","),
        );
    }
    put(&mut s, "trials", &a.trials);
    put(&mut s, "iters", &a.iters);
    put(&mut s, "busy.step_cost_us", &a.step_cost_us);
    put(&mut s, "samples_per_iter", &a.samples_per_iter);
    put(&mut s, "seed", &a.seed);
    if let Some(out) = &a.out {
        s.set("out", out.display().to_string());
    }
    s.check_keys(RUN_KEYS)?;

    let mut cfg = BenchConfig::default();
    cfg.env_spec = s.env_spec(EnvSpec::Busy(BusyParams::default()))?;
    cfg.hyper = s.hyper(crate::learner::PpoHyper::for_env(&cfg.env_spec))?;
    if let Some(w) = s.get("workers") {
        cfg.worker_counts =
            parse_list(w).map_err(|_| Error::Config(format!("invalid worker list {w:?}")))?;
    }
    let num = |key: &str| -> Result<Option<usize>> {
        s.get(key)
            .map(|v| v.parse().map_err(|_| Error::Config(format!("invalid value {v:?} for {key}"))))
            .transpose()
    };
    if let Some(v) = num("trials")? {
        cfg.trials = v;
    }
    if let Some(v) = num("iters")? {
        cfg.iters = v;
    }
    if let Some(v) = num("samples_per_iter")? {
        cfg.samples_per_iter = v;
    }
    if let Some(v) = num("chunk_cap")? {
        cfg.chunk_cap = v;
    }
    if let Some(v) = s.get("seed") {
        cfg.base_seed = v
            .parse()
            .map_err(|_| Error::Config(format!("invalid seed {v:?}")))?;
    }
    if let Some(h) = s.hidden_dims()? {
        cfg.hidden_dims = h;
    }
    cfg.out_dir = Some(s.get("out").map(PathBuf::from).unwrap_or_else(|| default_out_dir("bench")));
    cfg.validate()?;

    let report = run_bench(&cfg)?;
    println!(
        "machine: {} logical / {} physical cores",
        report.machine.logical_cores, report.machine.physical_cores
    );
    println!("{:>9} {:>12} {:>12} {:>9} {:>9} {:>9}", "n_workers", "collect_s", "learn_s", "speedup", "collect%", "learn%");
    for r in &report.aggregates {
        println!(
            "{:>9} {:>12.4} {:>12.4} {:>9.3} {:>9.1} {:>9.1}{}",
            r.n_workers,
            r.median_collect_s,
            r.median_learn_s,
            r.speedup,
            r.collect_share_pct,
            r.learn_share_pct,
            if r.over_linear { "  OVER-LINEAR" } else { "" }
        );
    }
    for f in &report.failures {
        println!("failed cell n_workers={} trial={}: {}", f.n_workers, f.trial, f.error);
    }
    for n in &report.notes {
        println!("note: {n}");
    }
    if let Some(dir) = &cfg.out_dir {
        println!("wrote {} and {}", dir.join("bench.csv").display(), dir.join("bench.json").display());
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let snap = read_checkpoint(&a.checkpoint)?;
    let spec = match &a.env {
        Some(name) => name.parse::<EnvSpec>()?,
        None => match (snap.head, snap.obs_dim()) {
            (PolicyHead::Categorical { n: 2 }, 4) => EnvSpec::CartPole,
            (PolicyHead::Gaussian { dim: 1 }, 3) => EnvSpec::Pendulum,
            (PolicyHead::Categorical { n: 2 }, d) => EnvSpec::Busy(BusyParams {
                obs_dim: d,
                ..BusyParams::default()
            }),
            (head, d) => {
                return Err(Error::Config(format!(
                    "cannot infer env for head {head:?} with obs dim {d}; pass --env"
                )))
            }
        },
    };
    let mean = evaluate_policy(&snap, &spec, a.episodes, a.seed, None)?;
    println!("{mean}");
    eprintln!(
        "evaluated version {} on {} over {} episodes",
        snap.version, spec, a.episodes
    );
    Ok(())
}

/// Parses `argv` (including the program name) and runs the command.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Eval(a) => cmd_eval(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e @ Error::Config(_)) => {
            eprintln!("usage error: {e}");
            EXIT_USAGE
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}
