//! The agent side of the pipeline: owns the worker pool and the learner,
//! and runs the broadcast / gather / update loop with timing.

use std::collections::BTreeMap;
use std::ops::ControlFlow;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender, TryRecvError};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::envs::{busy_calibration, make_env_calibrated, ActionSpace, BusyCalibration, EnvSpec};
use crate::error::{Error, Result};
use crate::learner::{ppo_update, ExperienceBatch, PpoHyper, UpdateStats};
use crate::nn::{splitmix64, AdamState, Rng};
use crate::policy::{
    encode_snapshot, init_policy, mode_action, policy_forward, write_checkpoint, ActionValue,
    ParameterSnapshot,
};
use crate::report::RunCsvWriter;
use crate::sampler::{
    worker_loop, ControlSignal, ExperienceChunk, FaultInjection, Mailbox, WorkerContext, WorkerExit,
    DEFAULT_CHUNK_CAP,
};

const LEARNER_SALT: u64 = 0x4C45_4152_4E45_5221;
const EVAL_SALT: u64 = 0x4556_414C_5541_5445;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub env_spec: EnvSpec,
    pub n_workers: usize,
    pub samples_per_iter: usize,
    pub n_iters: usize,
    pub hyper: PpoHyper,
    pub hidden_dims: Vec<usize>,
    pub base_seed: u64,
    pub chunk_cap: usize,
    pub eval_episodes: usize,
    /// Experience queue capacity in chunks; `None` means `4 * n_workers`.
    pub queue_capacity: Option<usize>,
    pub checkpoint_every: usize,
    /// Directory for `run.csv`, `run_config.json` and `checkpoint.bin`.
    pub out_dir: Option<PathBuf>,
    pub shutdown_timeout_s: f64,
    /// Overrides the process-wide busy-loop calibration.
    #[serde(skip)]
    pub calibration: Option<BusyCalibration>,
    #[serde(skip)]
    pub fault: Option<FaultInjection>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::for_env(EnvSpec::CartPole)
    }
}

impl RunConfig {
    pub fn for_env(env_spec: EnvSpec) -> Self {
        Self {
            env_spec,
            n_workers: 1,
            samples_per_iter: 4000,
            n_iters: 50,
            hyper: PpoHyper::for_env(&env_spec),
            hidden_dims: vec![64, 64],
            base_seed: 0,
            chunk_cap: DEFAULT_CHUNK_CAP,
            eval_episodes: 20,
            queue_capacity: None,
            checkpoint_every: 10,
            out_dir: None,
            shutdown_timeout_s: 10.0,
            calibration: None,
            fault: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.env_spec.validate()?;
        self.hyper.validate()?;
        let bad = |m: String| Err(Error::Config(m));
        if self.n_workers == 0 {
            return bad("n_workers must be >= 1".into());
        }
        if self.chunk_cap == 0 {
            return bad("chunk_cap must be >= 1".into());
        }
        if self.samples_per_iter < self.chunk_cap {
            return bad(format!(
                "samples_per_iter ({}) must be >= chunk_cap ({})",
                self.samples_per_iter, self.chunk_cap
            ));
        }
        if self.n_iters == 0 {
            return bad("n_iters must be >= 1".into());
        }
        if self.hyper.minibatch_size > self.samples_per_iter {
            return bad("minibatch_size exceeds samples_per_iter".into());
        }
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return bad(format!("invalid hidden dims {:?}", self.hidden_dims));
        }
        if self.queue_capacity == Some(0) {
            return bad("queue_capacity must be >= 1".into());
        }
        Ok(())
    }

    fn queue_capacity(&self) -> usize {
        self.queue_capacity.unwrap_or(4 * self.n_workers)
    }
}

/// Wall-clock split of one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub iteration: usize,
    /// From `BEGIN(v)` to the gather returning with enough version-`v` samples.
    pub collect_time_s: f64,
    /// Brackets `ppo_update` only.
    pub learn_time_s: f64,
    pub samples_gathered: usize,
    pub chunks_dropped_stale: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub timing: TimingRecord,
    /// Version the batch was sampled under.
    pub version: u64,
    pub stats: UpdateStats,
    pub episodes: usize,
    pub mean_return: Option<f64>,
    pub std_return: Option<f64>,
    pub eval_return: Option<f64>,
    /// Hash over every float in the batch, for reproducibility checks.
    pub batch_digest: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ShutdownReport {
    pub joined: usize,
    /// Workers that did not exit within the timeout and were detached.
    pub forced: Vec<usize>,
    pub worker_errors: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunLog {
    pub iterations: Vec<IterationLog>,
    pub final_snapshot: ParameterSnapshot,
    pub total_wall_s: f64,
    pub calibration: Option<BusyCalibration>,
    pub shutdown: ShutdownReport,
}

/// Outcome of one gather.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GatherStats {
    pub samples: usize,
    pub chunks_accepted: usize,
    pub chunks_dropped_stale: usize,
    pub chunks_per_worker: BTreeMap<usize, usize>,
}

/// Pulls chunks until at least `target` transitions of `version` arrived.
///
/// Older chunks are dropped and counted; newer ones are a protocol error.
/// `health` runs between receives and aborts the gather if it fails.
pub fn gather(
    version: u64,
    target: usize,
    queue: &Receiver<ExperienceChunk>,
    mut health: impl FnMut() -> Result<()>,
) -> Result<(ExperienceBatch, GatherStats)> {
    let mut batch = ExperienceBatch::new(version);
    let mut stats = GatherStats::default();
    while stats.samples < target {
        health()?;
        let chunk = match queue.recv_timeout(Duration::from_millis(50)) {
            Ok(c) => c,
            Err(RecvTimeoutError::Timeout) => continue,
            Err(RecvTimeoutError::Disconnected) => {
                return Err(Error::Protocol(format!(
                    "all workers exited while gathering version {version}"
                )))
            }
        };
        if chunk.version < version {
            stats.chunks_dropped_stale += 1;
            continue;
        }
        if chunk.version > version {
            return Err(Error::Protocol(format!(
                "chunk from worker {} has future version {} (gathering {version})",
                chunk.worker_id, chunk.version
            )));
        }
        stats.samples += chunk.len();
        stats.chunks_accepted += 1;
        *stats.chunks_per_worker.entry(chunk.worker_id).or_default() += 1;
        batch.extend(chunk.transitions, chunk.segments);
        batch.episode_returns.extend(chunk.episode_returns);
    }
    Ok((batch, stats))
}

struct WorkerSlot {
    id: usize,
    handle: Option<JoinHandle<Result<WorkerExit>>>,
    control: Sender<ControlSignal>,
    mailbox: Arc<Mailbox>,
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into())
}

fn join_worker(id: usize, handle: JoinHandle<Result<WorkerExit>>) -> Option<String> {
    match handle.join() {
        Ok(Ok(_)) => None,
        Ok(Err(e)) => Some(format!("worker {id}: {e}")),
        Err(p) => Some(format!("worker {id} panicked: {}", panic_message(p))),
    }
}

/// Decrements the live-worker count when a worker thread ends, however it ends.
struct LiveGuard(Arc<AtomicUsize>);

impl Drop for LiveGuard {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}

/// N sampler threads plus the queues that connect them to the agent.
pub struct WorkerPool {
    workers: Vec<WorkerSlot>,
    experience_rx: Option<Receiver<ExperienceChunk>>,
    live: Arc<AtomicUsize>,
    last_begin: Option<u64>,
    shutdown: Option<ShutdownReport>,
    shutdown_timeout: Duration,
}

impl WorkerPool {
    /// Primes every mailbox with `initial` and starts the workers.
    pub fn spawn(cfg: &RunConfig, initial: &ParameterSnapshot) -> Result<Self> {
        initial.check_compatible(&cfg.env_spec)?;
        let calibration = match cfg.env_spec {
            EnvSpec::Busy(_) => Some(cfg.calibration.unwrap_or_else(busy_calibration)),
            _ => None,
        };
        let (tx, rx) = mpsc::sync_channel(cfg.queue_capacity());
        let live = Arc::new(AtomicUsize::new(0));
        let encoded: Arc<[u8]> = encode_snapshot(initial).into();
        let mut workers = Vec::with_capacity(cfg.n_workers);
        for id in 0..cfg.n_workers {
            let mailbox = Arc::new(Mailbox::new());
            mailbox.put(initial.version, encoded.clone());
            let (control, control_rx) = mpsc::channel();
            let ctx = WorkerContext {
                worker_id: id,
                env_spec: cfg.env_spec,
                calibration,
                mailbox: mailbox.clone(),
                experience_tx: tx.clone(),
                control_rx,
                base_seed: cfg.base_seed,
                chunk_cap: cfg.chunk_cap,
                fault: cfg.fault,
            };
            live.fetch_add(1, Ordering::SeqCst);
            let guard = LiveGuard(live.clone());
            let handle = std::thread::Builder::new()
                .name(format!("sampler-{id}"))
                .spawn(move || {
                    let _guard = guard;
                    worker_loop(ctx)
                })
                .map_err(|e| Error::Worker(format!("failed to spawn worker {id}: {e}")))?;
            workers.push(WorkerSlot {
                id,
                handle: Some(handle),
                control,
                mailbox,
            });
        }
        Ok(Self {
            workers,
            experience_rx: Some(rx),
            live,
            last_begin: None,
            shutdown: None,
            shutdown_timeout: Duration::from_secs_f64(cfg.shutdown_timeout_s.max(0.0)),
        })
    }

    pub fn n_workers(&self) -> usize {
        self.workers.len()
    }

    /// Worker threads that have not yet finished.
    pub fn live_workers(&self) -> usize {
        self.live.load(Ordering::SeqCst)
    }

    /// Counter shared with the worker threads; stays valid after the pool is dropped.
    pub fn live_counter(&self) -> Arc<AtomicUsize> {
        self.live.clone()
    }

    fn ensure_running(&self) -> Result<()> {
        if self.shutdown.is_some() {
            return Err(Error::Protocol("worker pool already shut down".into()));
        }
        Ok(())
    }

    /// Overwrites every mailbox with `snap`, then sends `BEGIN(snap.version)`.
    pub fn broadcast(&mut self, snap: &ParameterSnapshot) -> Result<()> {
        self.ensure_running()?;
        if let Some(last) = self.last_begin {
            if snap.version <= last {
                return Err(Error::Protocol(format!(
                    "version regression: broadcast {} after {last}",
                    snap.version
                )));
            }
        }
        let encoded: Arc<[u8]> = encode_snapshot(snap).into();
        for w in &self.workers {
            w.mailbox.put(snap.version, encoded.clone());
        }
        self.signal(ControlSignal::Begin(snap.version));
        self.last_begin = Some(snap.version);
        Ok(())
    }

    pub fn stop_iter(&self, version: u64) {
        self.signal(ControlSignal::StopIter(version));
    }

    fn signal(&self, s: ControlSignal) {
        for w in &self.workers {
            // A dead worker is reported by the health check, not here.
            let _ = w.control.send(s);
        }
    }

    fn health(&mut self) -> Result<()> {
        for w in &mut self.workers {
            if w.handle.as_ref().is_some_and(|h| h.is_finished()) {
                let handle = w.handle.take().expect("checked above");
                let why = join_worker(w.id, handle)
                    .unwrap_or_else(|| format!("worker {} exited unexpectedly", w.id));
                return Err(Error::Worker(why));
            }
        }
        Ok(())
    }

    pub fn gather(&mut self, version: u64, target: usize) -> Result<(ExperienceBatch, GatherStats)> {
        self.ensure_running()?;
        let rx = self.experience_rx.take().expect("receiver present while running");
        let result = gather(version, target, &rx, || self.health());
        self.experience_rx = Some(rx);
        result
    }

    /// Sends `SHUTDOWN`, drains the experience queue while waiting, and joins
    /// every worker. Idempotent: later calls return the first report.
    pub fn shutdown(&mut self) -> ShutdownReport {
        if let Some(r) = &self.shutdown {
            return r.clone();
        }
        self.signal(ControlSignal::Shutdown);
        let deadline = Instant::now() + self.shutdown_timeout;
        let mut report = ShutdownReport::default();

        loop {
            if let Some(rx) = &self.experience_rx {
                loop {
                    match rx.try_recv() {
                        Ok(_) => continue,
                        Err(TryRecvError::Empty) | Err(TryRecvError::Disconnected) => break,
                    }
                }
            }
            let pending = self
                .workers
                .iter()
                .any(|w| w.handle.as_ref().is_some_and(|h| !h.is_finished()));
            if !pending || Instant::now() >= deadline {
                break;
            }
            std::thread::sleep(Duration::from_millis(1));
        }

        // Anything still blocked on a full queue sees a disconnect once the receiver is gone.
        self.experience_rx = None;
        for w in &mut self.workers {
            let Some(handle) = w.handle.take() else {
                report.joined += 1;
                continue;
            };
            if handle.is_finished() {
                if let Some(err) = join_worker(w.id, handle) {
                    report.worker_errors.push(err);
                }
                report.joined += 1;
            } else {
                log_diag(&format!(
                    "worker {} did not exit within {:?}; detaching",
                    w.id, self.shutdown_timeout
                ));
                report.forced.push(w.id);
            }
        }
        self.shutdown = Some(report.clone());
        report
    }
}

impl Drop for WorkerPool {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn log_diag(msg: &str) {
    eprintln!("pararl: {msg}");
}

/// Mean undiscounted return of the deterministic (mode) policy.
pub fn evaluate_policy(
    snap: &ParameterSnapshot,
    env_spec: &EnvSpec,
    episodes: usize,
    seed: u64,
    calibration: Option<BusyCalibration>,
) -> Result<f64> {
    if episodes == 0 {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    snap.check_compatible(env_spec)?;
    let mut env = make_env_calibrated(env_spec, calibration)?;
    let mut rng = Rng::new(seed);
    let space = env_spec.action_space();
    let mut total = 0.0;
    for _ in 0..episodes {
        let mut obs = env.reset(&mut rng);
        loop {
            let action = match (mode_action(&policy_forward(snap, &obs)?), &space) {
                (ActionValue::Continuous(x), ActionSpace::Continuous { low, high, .. }) => {
                    ActionValue::Continuous(x.iter().map(|v| v.clamp(*low, *high)).collect())
                }
                (a, _) => a,
            };
            let step = env.step(&action)?;
            total += step.reward;
            if step.done() {
                break;
            }
            obs = step.obs;
        }
    }
    Ok(total / episodes as f64)
}

fn batch_digest(batch: &ExperienceBatch) -> u64 {
    let mut h = 0u64;
    let mut mix = |x: u64| h = splitmix64(h ^ x);
    for t in &batch.transitions {
        t.obs.iter().for_each(|v| mix(v.to_bits()));
        match &t.action {
            ActionValue::Discrete(a) => mix(*a as u64),
            ActionValue::Continuous(x) => x.iter().for_each(|v| mix(v.to_bits())),
        }
        mix(t.reward.to_bits());
        mix(t.logprob_old.to_bits());
        mix(t.terminated as u64 | (t.time_limit as u64) << 1);
    }
    h
}

fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (Some(mean), Some(var.sqrt()))
}

pub fn train(cfg: &RunConfig) -> Result<RunLog> {
    train_with(cfg, |_| ControlFlow::Continue(()))
}

/// Runs the full iteration loop. `observer` sees each row as it is logged
/// and may end the run early by returning `Break`.
pub fn train_with(
    cfg: &RunConfig,
    mut observer: impl FnMut(&IterationLog) -> ControlFlow<()>,
) -> Result<RunLog> {
    cfg.validate()?;
    let started = Instant::now();
    // Calibrate before any worker exists so the measurement sees a quiet machine.
    let calibration = match cfg.env_spec {
        EnvSpec::Busy(_) => Some(cfg.calibration.unwrap_or_else(busy_calibration)),
        _ => None,
    };
    let cfg = RunConfig {
        calibration,
        ..cfg.clone()
    };

    let mut snap = init_policy(&cfg.env_spec, &cfg.hidden_dims, cfg.base_seed)?;
    let mut adam = AdamState::new(snap.num_params());
    let mut learner_rng = Rng::new(splitmix64(cfg.base_seed ^ LEARNER_SALT));

    let mut csv = match &cfg.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            crate::report::write_run_config(&dir.join("run_config.json"), &cfg)?;
            Some(RunCsvWriter::create(&dir.join("run.csv"))?)
        }
        None => None,
    };
    let checkpoint_path = cfg.out_dir.as_ref().map(|d| d.join("checkpoint.bin"));

    let mut pool = WorkerPool::spawn(&cfg, &snap)?;
    let mut iterations = Vec::with_capacity(cfg.n_iters);

    let outcome: Result<()> = (|| {
        for iteration in 0..cfg.n_iters {
            let version = snap.version;
            let t0 = Instant::now();
            pool.broadcast(&snap)?;
            let (batch, gstats) = pool.gather(version, cfg.samples_per_iter)?;
            let collect_time_s = t0.elapsed().as_secs_f64();
            pool.stop_iter(version);

            let t1 = Instant::now();
            let (next, next_adam, stats) = ppo_update(&snap, &batch, &cfg.hyper, &adam, &mut learner_rng)?;
            let learn_time_s = t1.elapsed().as_secs_f64();
            snap = next;
            adam = next_adam;
            if stats.skipped {
                log_diag(&format!("iteration {iteration}: non-finite update skipped"));
            }

            let eval_return = if cfg.eval_episodes > 0 {
                let seed = splitmix64(cfg.base_seed ^ EVAL_SALT).wrapping_add(iteration as u64);
                Some(evaluate_policy(&snap, &cfg.env_spec, cfg.eval_episodes, seed, calibration)?)
            } else {
                None
            };

            let (mean_return, std_return) = mean_std(&batch.episode_returns);
            let row = IterationLog {
                timing: TimingRecord {
                    iteration,
                    collect_time_s,
                    learn_time_s,
                    samples_gathered: gstats.samples,
                    chunks_dropped_stale: gstats.chunks_dropped_stale,
                },
                version,
                stats,
                episodes: batch.episode_returns.len(),
                mean_return,
                std_return,
                eval_return,
                batch_digest: batch_digest(&batch),
            };
            if let Some(w) = csv.as_mut() {
                w.write_row(&row)?;
            }
            if let Some(path) = &checkpoint_path {
                if cfg.checkpoint_every > 0 && (iteration + 1) % cfg.checkpoint_every == 0 {
                    write_checkpoint(path, &snap)?;
                }
            }
            let flow = observer(&row);
            iterations.push(row);
            if flow.is_break() {
                break;
            }
        }
        Ok(())
    })();

    let shutdown = pool.shutdown();
    outcome?;
    if let Some(path) = &checkpoint_path {
        write_checkpoint(path, &snap)?;
    }
    Ok(RunLog {
        iterations,
        final_snapshot: snap,
        total_wall_s: started.elapsed().as_secs_f64(),
        calibration,
        shutdown,
    })
}
