//! Rollout workers.
//!
//! Each worker owns one environment and one generator, reads the newest
//! snapshot from its mailbox, and pushes fixed-size experience chunks onto
//! the shared experience queue until told to stop.

use std::sync::mpsc::{Receiver, SyncSender, TryRecvError};
use std::sync::{Arc, Mutex};

use crate::envs::{make_env_calibrated, ActionSpace, BusyCalibration, Env, EnvSpec};
use crate::error::{Error, Result};
use crate::learner::{Segment, SegmentEnd, Transition};
use crate::nn::{derive_worker_rng, Rng};
use crate::policy::{decode_snapshot, policy_forward, sample_action, ActionValue, ParameterSnapshot};

pub const DEFAULT_CHUNK_CAP: usize = 256;

/// A bounded run of transitions from one worker, all sampled under `version`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperienceChunk {
    pub worker_id: usize,
    pub version: u64,
    pub transitions: Vec<Transition>,
    pub segments: Vec<Segment>,
    /// The final segment ended in true termination.
    pub complete: bool,
    /// Returns of episodes that finished inside this chunk.
    pub episode_returns: Vec<f64>,
}

impl ExperienceChunk {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlSignal {
    /// A snapshot of at least this version is in the mailbox.
    Begin(u64),
    /// Enough samples of this version have been gathered.
    StopIter(u64),
    Shutdown,
}

/// Latest-wins, depth-one snapshot slot. Writers overwrite; readers never
/// see anything but the newest encoded snapshot.
#[derive(Debug, Default)]
pub struct Mailbox {
    slot: Mutex<Option<(u64, Arc<[u8]>)>>,
}

impl Mailbox {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&self, version: u64, encoded: Arc<[u8]>) {
        *self.slot.lock().unwrap_or_else(|p| p.into_inner()) = Some((version, encoded));
    }

    pub fn latest(&self) -> Option<(u64, Arc<[u8]>)> {
        self.slot.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }
}

/// An environment plus the episode currently in flight.
#[derive(Debug)]
pub struct EnvRunner {
    env: Env,
    obs: Option<Vec<f64>>,
    episode_return: f64,
}

impl EnvRunner {
    pub fn new(env: Env) -> Self {
        Self {
            env,
            obs: None,
            episode_return: 0.0,
        }
    }

    pub fn env(&self) -> &Env {
        &self.env
    }

    /// Drops any partial episode; the next chunk starts from a reset.
    pub fn discard_episode(&mut self) {
        self.obs = None;
        self.episode_return = 0.0;
    }
}

fn clamp_for_env(action: &ActionValue, space: &ActionSpace) -> ActionValue {
    match (action, space) {
        (ActionValue::Continuous(x), ActionSpace::Continuous { low, high, .. }) => {
            ActionValue::Continuous(x.iter().map(|v| v.clamp(*low, *high)).collect())
        }
        _ => action.clone(),
    }
}

/// Steps the environment for exactly `chunk_cap` transitions, resetting at
/// episode ends. Log-probabilities are taken on the unclamped action.
pub fn collect_chunk(
    runner: &mut EnvRunner,
    snap: &ParameterSnapshot,
    rng: &mut Rng,
    chunk_cap: usize,
    worker_id: usize,
) -> Result<ExperienceChunk> {
    if chunk_cap == 0 {
        return Err(Error::Config("chunk_cap must be >= 1".into()));
    }
    let space = runner.env.spec().action_space();
    let mut transitions = Vec::with_capacity(chunk_cap);
    let mut segments = Vec::new();
    let mut episode_returns = Vec::new();
    let mut seg_start = 0;
    let mut complete = false;

    while transitions.len() < chunk_cap {
        let obs = match runner.obs.take() {
            Some(o) => o,
            None => {
                runner.episode_return = 0.0;
                runner.env.reset(rng)
            }
        };
        let dist = policy_forward(snap, &obs)?;
        let (action, logprob_old) = sample_action(&dist, rng);
        let step = runner.env.step(&clamp_for_env(&action, &space))?;
        runner.episode_return += step.reward;
        let done = step.done();
        transitions.push(Transition {
            obs,
            action,
            reward: step.reward,
            terminated: step.terminated,
            time_limit: step.time_limit,
            logprob_old,
        });
        if done {
            let end = if step.terminated {
                SegmentEnd::Terminated
            } else {
                SegmentEnd::Truncated {
                    final_obs: step.obs,
                }
            };
            complete = step.terminated;
            segments.push(Segment {
                start: seg_start,
                len: transitions.len() - seg_start,
                end,
            });
            seg_start = transitions.len();
            episode_returns.push(runner.episode_return);
            runner.episode_return = 0.0;
        } else {
            complete = false;
            runner.obs = Some(step.obs);
        }
    }
    if seg_start < transitions.len() {
        let final_obs = runner.obs.clone().expect("open segment has a next observation");
        segments.push(Segment {
            start: seg_start,
            len: transitions.len() - seg_start,
            end: SegmentEnd::Truncated { final_obs },
        });
    }
    Ok(ExperienceChunk {
        worker_id,
        version: snap.version,
        transitions,
        segments,
        complete,
        episode_returns,
    })
}

/// Failure injected into a worker, for exercising the abort and shutdown paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultKind {
    Panic,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaultInjection {
    pub worker_id: usize,
    /// Fail just before producing chunk number `after_chunks` (0-based).
    pub after_chunks: usize,
    pub kind: FaultKind,
}

/// Everything a worker owns for its lifetime.
pub struct WorkerContext {
    pub worker_id: usize,
    pub env_spec: EnvSpec,
    pub calibration: Option<BusyCalibration>,
    pub mailbox: Arc<Mailbox>,
    pub experience_tx: SyncSender<ExperienceChunk>,
    pub control_rx: Receiver<ControlSignal>,
    pub base_seed: u64,
    pub chunk_cap: usize,
    pub fault: Option<FaultInjection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkerExit {
    Shutdown,
    /// A queue endpoint went away; the worker stopped on its own.
    Disconnected,
}

/// Generator used by `worker_id` while serving snapshot `version`.
///
/// Re-deriving per version keeps a worker's stream independent of how many
/// surplus chunks it produced in earlier iterations.
pub fn iteration_rng(base_seed: u64, worker_id: usize, version: u64) -> Rng {
    derive_worker_rng(base_seed, worker_id).fork(version)
}

struct Serving {
    snap: ParameterSnapshot,
    rng: Rng,
}

/// Runs until `SHUTDOWN` or a disconnected queue.
///
/// Protocol: block for `BEGIN(v)` of an unserved version, decode the newest
/// snapshot from the mailbox, then alternate between draining control
/// signals and pushing chunks. `STOP_ITER(v)` discards the partial episode
/// and returns to blocking.
pub fn worker_loop(ctx: WorkerContext) -> Result<WorkerExit> {
    let env = make_env_calibrated(&ctx.env_spec, ctx.calibration)?;
    let mut runner = EnvRunner::new(env);
    let mut serving: Option<Serving> = None;
    let mut newest_started: Option<u64> = None;
    let mut produced = 0usize;

    loop {
        let signal = if serving.is_some() {
            match ctx.control_rx.try_recv() {
                Ok(s) => Some(s),
                Err(TryRecvError::Empty) => None,
                Err(TryRecvError::Disconnected) => return Ok(WorkerExit::Disconnected),
            }
        } else {
            match ctx.control_rx.recv() {
                Ok(s) => Some(s),
                Err(_) => return Ok(WorkerExit::Disconnected),
            }
        };

        if let Some(signal) = signal {
            match signal {
                ControlSignal::Shutdown => return Ok(WorkerExit::Shutdown),
                ControlSignal::Begin(v) => {
                    if newest_started.is_some_and(|n| v <= n) {
                        continue;
                    }
                    let (mail_version, bytes) = ctx.mailbox.latest().ok_or_else(|| {
                        Error::Protocol(format!("BEGIN({v}) with an empty mailbox"))
                    })?;
                    if mail_version < v {
                        return Err(Error::Protocol(format!(
                            "BEGIN({v}) but mailbox holds version {mail_version}"
                        )));
                    }
                    let snap = decode_snapshot(&bytes)?;
                    snap.check_compatible(&ctx.env_spec)?;
                    runner.discard_episode();
                    newest_started = Some(snap.version);
                    serving = Some(Serving {
                        rng: iteration_rng(ctx.base_seed, ctx.worker_id, snap.version),
                        snap,
                    });
                }
                ControlSignal::StopIter(v) => {
                    if serving.as_ref().is_some_and(|s| s.snap.version <= v) {
                        serving = None;
                        runner.discard_episode();
                    }
                }
            }
            continue;
        }

        let Some(s) = serving.as_mut() else { continue };
        if let Some(f) = ctx.fault {
            if f.worker_id == ctx.worker_id && produced == f.after_chunks {
                match f.kind {
                    FaultKind::Panic => panic!("injected fault in worker {}", ctx.worker_id),
                    FaultKind::Error => {
                        return Err(Error::Worker(format!(
                            "injected fault in worker {}",
                            ctx.worker_id
                        )))
                    }
                }
            }
        }
        let chunk = collect_chunk(&mut runner, &s.snap, &mut s.rng, ctx.chunk_cap, ctx.worker_id)?;
        produced += 1;
        if ctx.experience_tx.send(chunk).is_err() {
            return Ok(WorkerExit::Disconnected);
        }
    }
}
