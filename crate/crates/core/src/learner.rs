//! On-policy learner: GAE over trajectory segments and the PPO
//! clipped-surrogate update.

use serde::{Deserialize, Serialize};

use crate::envs::EnvSpec;
use crate::error::{Error, Result};
use crate::nn::{mlp_backward_trace, mlp_forward_trace, AdamConfig, AdamState, ParamVector, Rng};
use crate::policy::{
    dist_from_output, entropy, log_prob, softmax, value_of, ActionValue, DistParams,
    ParameterSnapshot,
};

/// One environment step as recorded by a sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: ActionValue,
    pub reward: f64,
    pub terminated: bool,
    pub time_limit: bool,
    /// Log-probability of `action` under the sampling snapshot.
    pub logprob_old: f64,
}

/// How a segment's return tail is handled.
#[derive(Debug, Clone, PartialEq)]
pub enum SegmentEnd {
    /// True termination: the tail is zero.
    Terminated,
    /// Horizon or collection cutoff: bootstrap with `V(final_obs)`.
    Truncated { final_obs: Vec<f64> },
}

/// A contiguous run of transitions from one episode (or a piece of one).
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: usize,
    pub len: usize,
    pub end: SegmentEnd,
}

/// Everything the learner consumes in one iteration. All transitions were
/// sampled under `version`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperienceBatch {
    pub version: u64,
    pub transitions: Vec<Transition>,
    pub segments: Vec<Segment>,
    /// Undiscounted returns of episodes that finished inside this batch.
    pub episode_returns: Vec<f64>,
}

impl ExperienceBatch {
    pub fn new(version: u64) -> Self {
        Self {
            version,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Appends transitions and their segments, re-basing segment offsets.
    pub fn extend(&mut self, transitions: Vec<Transition>, segments: Vec<Segment>) {
        let base = self.transitions.len();
        self.transitions.extend(transitions);
        self.segments.extend(segments.into_iter().map(|s| Segment {
            start: s.start + base,
            ..s
        }));
    }

    /// Segments must tile the transitions exactly, in order.
    pub fn validate(&self) -> Result<()> {
        if self.transitions.is_empty() {
            return Err(Error::Protocol("empty experience batch".into()));
        }
        let mut next = 0;
        for s in &self.segments {
            if s.start != next || s.len == 0 {
                return Err(Error::Protocol(format!(
                    "malformed segment at {} (len {}), expected start {next}",
                    s.start, s.len
                )));
            }
            next += s.len;
        }
        if next != self.transitions.len() {
            return Err(Error::Protocol(format!(
                "segments cover {next} of {} transitions",
                self.transitions.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpoHyper {
    pub gamma: f64,
    pub lambda: f64,
    pub clip_eps: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub lr: f64,
    pub vf_coef: f64,
    pub ent_coef: f64,
    pub max_grad_norm: f64,
}

impl Default for PpoHyper {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda: 0.95,
            clip_eps: 0.2,
            epochs: 10,
            minibatch_size: 64,
            lr: 3e-4,
            vf_coef: 0.5,
            ent_coef: 0.0,
            max_grad_norm: 0.5,
        }
    }
}

impl PpoHyper {
    /// Defaults with the per-environment entropy bonus.
    pub fn for_env(spec: &EnvSpec) -> Self {
        let ent_coef = match spec {
            EnvSpec::Pendulum => 0.01,
            _ => 0.0,
        };
        Self {
            ent_coef,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must be in (0, 1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda must be in [0, 1], got {}", self.lambda));
        }
        if !(self.clip_eps > 0.0) {
            return bad(format!("clip_eps must be > 0, got {}", self.clip_eps));
        }
        if self.minibatch_size == 0 {
            return bad("minibatch_size must be >= 1".into());
        }
        if !(self.lr > 0.0) {
            return bad(format!("lr must be > 0, got {}", self.lr));
        }
        if !(self.max_grad_norm > 0.0) {
            return bad(format!("max_grad_norm must be > 0, got {}", self.max_grad_norm));
        }
        if self.vf_coef < 0.0 || self.ent_coef < 0.0 {
            return bad("vf_coef and ent_coef must be >= 0".into());
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    /// Total loss, averaged over minibatches.
    pub loss: f64,
    /// Clipped-surrogate term (sign included).
    pub policy_loss: f64,
    /// Mean squared value error, without `vf_coef`.
    pub value_loss: f64,
    pub entropy: f64,
    /// Mean of `logprob_old - logprob_new`.
    pub approx_kl: f64,
    pub clip_frac: f64,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    pub minibatches: usize,
    /// Set when a non-finite loss or gradient aborted the update.
    pub skipped: bool,
}

/// Recursive GAE over one segment.
///
/// `bootstrap_value` is `V(s_T)` for truncated segments and 0 for terminated ones.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    terminated: &[bool],
    bootstrap_value: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n {
        return Err(Error::dim("gae values", n, values.len()));
    }
    if terminated.len() != n {
        return Err(Error::dim("gae terminated flags", n, terminated.len()));
    }
    let mut adv = vec![0.0; n];
    let mut next_value = bootstrap_value;
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let live = if terminated[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// `(A - mean) / (std + 1e-8)` with the population standard deviation.
pub fn normalize_advantages(adv: &[f64]) -> Vec<f64> {
    match adv.len() {
        0 => Vec::new(),
        1 => vec![0.0],
        n => {
            let mean = adv.iter().sum::<f64>() / n as f64;
            let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64;
            let denom = var.sqrt() + 1e-8;
            adv.iter().map(|a| (a - mean) / denom).collect()
        }
    }
}

/// One training example after advantage estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct PpoSample {
    pub obs: Vec<f64>,
    pub action: ActionValue,
    pub logprob_old: f64,
    pub advantage: f64,
    pub value_target: f64,
}

/// Clipped-surrogate loss and its exact gradient over the snapshot's flat
/// parameters (policy, value, log-std).
pub fn ppo_loss_and_grad(
    snap: &ParameterSnapshot,
    minibatch: &[PpoSample],
    hyper: &PpoHyper,
) -> Result<(f64, ParamVector, UpdateStats)> {
    loss_and_grad(snap, minibatch.iter(), minibatch.len(), hyper)
}

fn loss_and_grad<'a>(
    snap: &ParameterSnapshot,
    samples: impl Iterator<Item = &'a PpoSample>,
    count: usize,
    hyper: &PpoHyper,
) -> Result<(f64, ParamVector, UpdateStats)> {
    if count == 0 {
        return Err(Error::Config("empty minibatch".into()));
    }
    let n_pol = snap.policy_params.len();
    let n_val = snap.value_params.len();
    let mut grad = ParamVector::zeros(snap.num_params());
    let (g_pol, rest) = grad.split_at_mut(n_pol);
    let (g_val, g_std) = rest.split_at_mut(n_val);

    let inv_b = 1.0 / count as f64;
    let (lo, hi) = (1.0 - hyper.clip_eps, 1.0 + hyper.clip_eps);
    let mut st = UpdateStats::default();

    for s in samples {
        let trace = mlp_forward_trace(&snap.policy_params, &snap.policy_layout, &s.obs)?;
        let dist = dist_from_output(snap, trace.output().to_vec());
        let lp = log_prob(&dist, &s.action);
        let h = entropy(&dist);
        let ratio = (lp - s.logprob_old).exp();
        let surr1 = ratio * s.advantage;
        let surr2 = ratio.clamp(lo, hi) * s.advantage;
        let objective = surr1.min(surr2);

        st.policy_loss -= objective * inv_b;
        st.entropy += h * inv_b;
        st.approx_kl += (s.logprob_old - lp) * inv_b;
        if (ratio - 1.0).abs() > hyper.clip_eps {
            st.clip_frac += inv_b;
        }

        // dL/dlogp_new for the surrogate term; zero when the clipped branch binds.
        let d_lp = if surr1 <= surr2 { -surr1 * inv_b } else { 0.0 };
        let d_ent = -hyper.ent_coef * inv_b;

        let out_grad: Vec<f64> = match (&dist, &s.action) {
            (DistParams::Categorical { logits }, ActionValue::Discrete(a)) => {
                let p = softmax(logits);
                p.iter()
                    .enumerate()
                    .map(|(j, &pj)| {
                        let onehot = if j == *a { 1.0 } else { 0.0 };
                        let dh = if pj > 0.0 { -pj * (pj.ln() + h) } else { 0.0 };
                        d_lp * (onehot - pj) + d_ent * dh
                    })
                    .collect()
            }
            (DistParams::Gaussian { mean, log_std }, ActionValue::Continuous(x)) => {
                let mut g_mean = Vec::with_capacity(mean.len());
                for d in 0..mean.len() {
                    let inv_var = (-2.0 * log_std[d]).exp();
                    let diff = x[d] - mean[d];
                    g_mean.push(d_lp * diff * inv_var);
                    g_std[d] += d_lp * (diff * diff * inv_var - 1.0) + d_ent;
                }
                g_mean
            }
            _ => {
                return Err(Error::Config(format!(
                    "action {:?} incompatible with policy head {:?}",
                    s.action, snap.head
                )))
            }
        };
        mlp_backward_trace(&snap.policy_params, &snap.policy_layout, &trace, &out_grad, g_pol)?;

        let vtrace = mlp_forward_trace(&snap.value_params, &snap.value_layout, &s.obs)?;
        let err = vtrace.output()[0] - s.value_target;
        st.value_loss += err * err * inv_b;
        let dv = 2.0 * hyper.vf_coef * err * inv_b;
        mlp_backward_trace(&snap.value_params, &snap.value_layout, &vtrace, &[dv], g_val)?;
    }

    let loss = st.policy_loss + hyper.vf_coef * st.value_loss - hyper.ent_coef * st.entropy;
    st.loss = loss;
    st.minibatches = 1;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("ppo loss is {loss}")));
    }
    st.grad_norm = l2_norm(&grad);
    Ok((loss, grad, st))
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Value estimates, GAE per segment, and batch-wide normalization.
pub fn prepare_samples(
    snap: &ParameterSnapshot,
    batch: &ExperienceBatch,
    hyper: &PpoHyper,
) -> Result<Vec<PpoSample>> {
    batch.validate()?;
    let values = batch
        .transitions
        .iter()
        .map(|t| value_of(snap, &t.obs))
        .collect::<Result<Vec<f64>>>()?;
    let mut advantages = Vec::with_capacity(batch.len());
    let mut returns = Vec::with_capacity(batch.len());
    for seg in &batch.segments {
        let range = seg.start..seg.start + seg.len;
        let trs = &batch.transitions[range.clone()];
        let rewards: Vec<f64> = trs.iter().map(|t| t.reward).collect();
        let terminated: Vec<bool> = trs.iter().map(|t| t.terminated).collect();
        let bootstrap = match &seg.end {
            SegmentEnd::Terminated => 0.0,
            SegmentEnd::Truncated { final_obs } => value_of(snap, final_obs)?,
        };
        let (a, r) = compute_gae(
            &rewards,
            &values[range],
            &terminated,
            bootstrap,
            hyper.gamma,
            hyper.lambda,
        )?;
        advantages.extend(a);
        returns.extend(r);
    }
    let advantages = normalize_advantages(&advantages);
    Ok(batch
        .transitions
        .iter()
        .zip(advantages)
        .zip(returns)
        .map(|((t, advantage), value_target)| PpoSample {
            obs: t.obs.clone(),
            action: t.action.clone(),
            logprob_old: t.logprob_old,
            advantage,
            value_target,
        })
        .collect())
}

/// Runs `hyper.epochs` passes of shuffled minibatch Adam steps and returns
/// the next snapshot, whose version is always `snap.version + 1`.
///
/// A non-finite loss or gradient abandons the whole update: the returned
/// snapshot keeps the old parameters and `stats.skipped` is set.
pub fn ppo_update(
    snap: &ParameterSnapshot,
    batch: &ExperienceBatch,
    hyper: &PpoHyper,
    adam: &AdamState,
    rng: &mut Rng,
) -> Result<(ParameterSnapshot, AdamState, UpdateStats)> {
    hyper.validate()?;
    if batch.version != snap.version {
        return Err(Error::Protocol(format!(
            "batch version {} does not match learner version {}",
            batch.version, snap.version
        )));
    }
    if adam.len() != snap.num_params() {
        return Err(Error::dim("adam state", snap.num_params(), adam.len()));
    }
    if hyper.minibatch_size > batch.len() {
        return Err(Error::Config(format!(
            "minibatch_size {} exceeds batch size {}",
            hyper.minibatch_size,
            batch.len()
        )));
    }

    let mut bumped = snap.clone();
    bumped.version += 1;
    if hyper.epochs == 0 {
        return Ok((bumped, adam.clone(), UpdateStats::default()));
    }

    let skip = |bumped: ParameterSnapshot| {
        let stats = UpdateStats {
            skipped: true,
            ..UpdateStats::default()
        };
        Ok((bumped, adam.clone(), stats))
    };

    let samples = prepare_samples(snap, batch, hyper)?;
    let mut work = snap.clone();
    let mut flat = work.flat_params();
    let mut opt = adam.clone();
    let adam_cfg = hyper.adam();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut acc = UpdateStats::default();

    for _ in 0..hyper.epochs {
        rng.shuffle(&mut order);
        for idx in order.chunks(hyper.minibatch_size) {
            let mb = idx.iter().map(|&i| &samples[i]);
            let (_, mut grad, st) = match loss_and_grad(&work, mb, idx.len(), hyper) {
                Ok(r) => r,
                Err(Error::NonFinite(_)) => return skip(bumped),
                Err(e) => return Err(e),
            };
            if !st.grad_norm.is_finite() {
                return skip(bumped);
            }
            if st.grad_norm > hyper.max_grad_norm {
                let scale = hyper.max_grad_norm / st.grad_norm;
                grad.iter_mut().for_each(|g| *g *= scale);
            }
            if opt.step(&mut flat, &grad, &adam_cfg).is_err() || flat.iter().any(|x| !x.is_finite()) {
                return skip(bumped);
            }
            work.set_flat_params(&flat)?;
            accumulate(&mut acc, &st);
        }
    }
    let n = acc.minibatches as f64;
    let stats = UpdateStats {
        loss: acc.loss / n,
        policy_loss: acc.policy_loss / n,
        value_loss: acc.value_loss / n,
        entropy: acc.entropy / n,
        approx_kl: acc.approx_kl / n,
        clip_frac: acc.clip_frac / n,
        grad_norm: acc.grad_norm / n,
        minibatches: acc.minibatches,
        skipped: false,
    };
    work.version = snap.version + 1;
    Ok((work, opt, stats))
}

fn accumulate(acc: &mut UpdateStats, st: &UpdateStats) {
    acc.loss += st.loss;
    acc.policy_loss += st.policy_loss;
    acc.value_loss += st.value_loss;
    acc.entropy += st.entropy;
    acc.approx_kl += st.approx_kl;
    acc.clip_frac += st.clip_frac;
    acc.grad_norm += st.grad_norm;
    acc.minibatches += 1;
}
