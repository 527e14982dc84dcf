//! Policy and value networks, action distributions, and the binary
//! snapshot format used for the policy queue and checkpoint files.

use std::f64::consts::{E, TAU};

use crate::envs::{ActionSpace, EnvSpec};
use crate::error::{Error, Result};
use crate::nn::{mlp_forward, MlpLayout, ParamVector, Rng};

pub use crate::envs::ActionValue;

/// Initial log standard deviation of the Gaussian head.
pub const INIT_LOG_STD: f64 = -0.5;

const HALF_LOG_TAU: f64 = 0.918_938_533_204_672_8; // 0.5 * ln(2 pi)

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyHead {
    Categorical { n: usize },
    Gaussian { dim: usize },
}

/// Versioned parameters of the policy and value networks. Immutable once
/// broadcast; the unit carried by the policy queue.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSnapshot {
    pub version: u64,
    pub head: PolicyHead,
    pub policy_layout: MlpLayout,
    pub value_layout: MlpLayout,
    pub policy_params: ParamVector,
    pub value_params: ParamVector,
    /// Empty for categorical heads.
    pub log_std: Vec<f64>,
}

impl ParameterSnapshot {
    pub fn obs_dim(&self) -> usize {
        self.policy_layout.input_dim
    }

    /// Total trainable parameters: policy, then value, then log-std.
    pub fn num_params(&self) -> usize {
        self.policy_params.len() + self.value_params.len() + self.log_std.len()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_params());
        v.extend_from_slice(&self.policy_params);
        v.extend_from_slice(&self.value_params);
        v.extend_from_slice(&self.log_std);
        v
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::dim("flat params", self.num_params(), flat.len()));
        }
        let (p, rest) = flat.split_at(self.policy_params.len());
        let (v, s) = rest.split_at(self.value_params.len());
        self.policy_params.copy_from_slice(p);
        self.value_params.copy_from_slice(v);
        self.log_std.copy_from_slice(s);
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.policy_params.all_finite()
            && self.value_params.all_finite()
            && self.log_std.iter().all(|x| x.is_finite())
    }

    /// Checks the snapshot can drive `spec`.
    pub fn check_compatible(&self, spec: &EnvSpec) -> Result<()> {
        if self.obs_dim() != spec.obs_dim() {
            return Err(Error::dim("snapshot obs dim", spec.obs_dim(), self.obs_dim()));
        }
        let ok = match (self.head, spec.action_space()) {
            (PolicyHead::Categorical { n }, ActionSpace::Discrete(m)) => n == m,
            (PolicyHead::Gaussian { dim }, ActionSpace::Continuous { dim: d, .. }) => dim == d,
            _ => false,
        };
        if !ok {
            return Err(Error::Config(format!(
                "snapshot head {:?} does not match {} action space",
                self.head, spec
            )));
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        self.policy_layout.validate()?;
        self.value_layout.validate()?;
        if self.value_layout.output_dim != 1 {
            return Err(Error::Config("value layout must have output_dim 1".into()));
        }
        if self.value_layout.input_dim != self.policy_layout.input_dim {
            return Err(Error::Config("policy/value input dims differ".into()));
        }
        let (out, std_len) = match self.head {
            PolicyHead::Categorical { n } => (n, 0),
            PolicyHead::Gaussian { dim } => (dim, dim),
        };
        if self.policy_layout.output_dim != out || self.log_std.len() != std_len {
            return Err(Error::Config(format!(
                "head {:?} inconsistent with policy output {} / log_std {}",
                self.head,
                self.policy_layout.output_dim,
                self.log_std.len()
            )));
        }
        if self.policy_params.len() != self.policy_layout.param_count() {
            return Err(Error::dim(
                "policy params",
                self.policy_layout.param_count(),
                self.policy_params.len(),
            ));
        }
        if self.value_params.len() != self.value_layout.param_count() {
            return Err(Error::dim(
                "value params",
                self.value_layout.param_count(),
                self.value_params.len(),
            ));
        }
        Ok(())
    }
}

/// Fresh networks for `env_spec` at version 0.
pub fn init_policy(env_spec: &EnvSpec, hidden_dims: &[usize], seed: u64) -> Result<ParameterSnapshot> {
    if hidden_dims.is_empty() {
        return Err(Error::Config("hidden_dims must be nonempty".into()));
    }
    let obs = env_spec.obs_dim();
    let (head, out) = match env_spec.action_space() {
        ActionSpace::Discrete(n) => (PolicyHead::Categorical { n }, n),
        ActionSpace::Continuous { dim, .. } => (PolicyHead::Gaussian { dim }, dim),
    };
    let policy_layout = MlpLayout::new(obs, hidden_dims.to_vec(), out)?;
    let value_layout = MlpLayout::new(obs, hidden_dims.to_vec(), 1)?;
    let mut rng = Rng::new(seed);
    let policy_params = policy_layout.init_params(&mut rng);
    let value_params = value_layout.init_params(&mut rng);
    let log_std = match head {
        PolicyHead::Categorical { .. } => Vec::new(),
        PolicyHead::Gaussian { dim } => vec![INIT_LOG_STD; dim],
    };
    Ok(ParameterSnapshot {
        version: 0,
        head,
        policy_layout,
        value_layout,
        policy_params,
        value_params,
        log_std,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum DistParams {
    Categorical { logits: Vec<f64> },
    Gaussian { mean: Vec<f64>, log_std: Vec<f64> },
}

pub fn policy_forward(snap: &ParameterSnapshot, obs: &[f64]) -> Result<DistParams> {
    let out = mlp_forward(&snap.policy_params, &snap.policy_layout, obs)?;
    Ok(dist_from_output(snap, out))
}

pub(crate) fn dist_from_output(snap: &ParameterSnapshot, out: Vec<f64>) -> DistParams {
    match snap.head {
        PolicyHead::Categorical { .. } => DistParams::Categorical { logits: out },
        PolicyHead::Gaussian { .. } => DistParams::Gaussian {
            mean: out,
            log_std: snap.log_std.clone(),
        },
    }
}

pub fn value_of(snap: &ParameterSnapshot, obs: &[f64]) -> Result<f64> {
    Ok(mlp_forward(&snap.value_params, &snap.value_layout, obs)?[0])
}

pub(crate) fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let lse = logsumexp(logits);
    logits.iter().map(|z| (z - lse).exp()).collect()
}

/// Draws an action and its log-probability under `dist`.
///
/// Categorical heads invert the softmax CDF; Gaussian heads use
/// `mean + exp(log_std) * z` with a Box–Muller normal `z`.
pub fn sample_action(dist: &DistParams, rng: &mut Rng) -> (ActionValue, f64) {
    let action = match dist {
        DistParams::Categorical { logits } => {
            let u = rng.uniform();
            let probs = softmax(logits);
            let mut cum = 0.0;
            let mut chosen = probs.len() - 1;
            for (i, p) in probs.iter().enumerate() {
                cum += p;
                if u < cum {
                    chosen = i;
                    break;
                }
            }
            ActionValue::Discrete(chosen)
        }
        DistParams::Gaussian { mean, log_std } => ActionValue::Continuous(
            mean.iter()
                .zip(log_std)
                .map(|(m, s)| m + s.exp() * rng.normal())
                .collect(),
        ),
    };
    let lp = log_prob(dist, &action);
    (action, lp)
}

/// Deterministic action: argmax for categorical, the mean for Gaussian.
pub fn mode_action(dist: &DistParams) -> ActionValue {
    match dist {
        DistParams::Categorical { logits } => {
            let best = logits
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, &z)| if z > acc.1 { (i, z) } else { acc })
                .0;
            ActionValue::Discrete(best)
        }
        DistParams::Gaussian { mean, .. } => ActionValue::Continuous(mean.clone()),
    }
}

/// Log-density of `action`. Incompatible pairs give `-inf`.
pub fn log_prob(dist: &DistParams, action: &ActionValue) -> f64 {
    match (dist, action) {
        (DistParams::Categorical { logits }, ActionValue::Discrete(a)) if *a < logits.len() => {
            logits[*a] - logsumexp(logits)
        }
        (DistParams::Gaussian { mean, log_std }, ActionValue::Continuous(x)) if x.len() == mean.len() => x
            .iter()
            .zip(mean)
            .zip(log_std)
            .map(|((x, m), s)| {
                let z = (x - m) / s.exp();
                -0.5 * z * z - s - HALF_LOG_TAU
            })
            .sum(),
        _ => f64::NEG_INFINITY,
    }
}

pub fn entropy(dist: &DistParams) -> f64 {
    match dist {
        DistParams::Categorical { logits } => {
            let lse = logsumexp(logits);
            -logits
                .iter()
                .map(|z| {
                    let lp = z - lse;
                    let p = lp.exp();
                    if p > 0.0 {
                        p * lp
                    } else {
                        0.0
                    }
                })
                .sum::<f64>()
        }
        DistParams::Gaussian { log_std, .. } => log_std
            .iter()
            .map(|s| s + 0.5 * (TAU * E).ln())
            .sum(),
    }
}

// ---------------------------------------------------------------------------
// Transport format
// ---------------------------------------------------------------------------

/// Leading bytes of every encoded snapshot.
pub const SNAPSHOT_MAGIC: [u8; 4] = *b"PRSN";
/// Bumped whenever the layout below changes.
pub const SNAPSHOT_FORMAT_VERSION: u8 = 1;

// Layout (all integers little-endian):
//   magic[4] | format u8 | head u8 (0 categorical, 1 gaussian) | reserved u16
//   snapshot version u64
//   policy layout, value layout: input u32 | n_hidden u32 | hidden u32 * n | output u32
//   n_policy u64 | n_value u64 | n_log_std u64
//   f64 * (n_policy + n_value + n_log_std)

fn layout_bytes(l: &MlpLayout) -> usize {
    12 + 4 * l.hidden_dims.len()
}

/// Size of the header that precedes the float payload.
pub fn header_len(snap: &ParameterSnapshot) -> usize {
    4 + 1 + 1 + 2 + 8 + layout_bytes(&snap.policy_layout) + layout_bytes(&snap.value_layout) + 24
}

fn put_layout(buf: &mut Vec<u8>, l: &MlpLayout) {
    buf.extend_from_slice(&(l.input_dim as u32).to_le_bytes());
    buf.extend_from_slice(&(l.hidden_dims.len() as u32).to_le_bytes());
    for h in &l.hidden_dims {
        buf.extend_from_slice(&(*h as u32).to_le_bytes());
    }
    buf.extend_from_slice(&(l.output_dim as u32).to_le_bytes());
}

pub fn encode_snapshot(snap: &ParameterSnapshot) -> Vec<u8> {
    let mut buf = Vec::with_capacity(header_len(snap) + 8 * snap.num_params());
    buf.extend_from_slice(&SNAPSHOT_MAGIC);
    buf.push(SNAPSHOT_FORMAT_VERSION);
    let (head_tag, head_n) = match snap.head {
        PolicyHead::Categorical { n } => (0u8, n),
        PolicyHead::Gaussian { dim } => (1u8, dim),
    };
    debug_assert_eq!(head_n, snap.policy_layout.output_dim);
    buf.push(head_tag);
    buf.extend_from_slice(&0u16.to_le_bytes());
    buf.extend_from_slice(&snap.version.to_le_bytes());
    put_layout(&mut buf, &snap.policy_layout);
    put_layout(&mut buf, &snap.value_layout);
    for n in [snap.policy_params.len(), snap.value_params.len(), snap.log_std.len()] {
        buf.extend_from_slice(&(n as u64).to_le_bytes());
    }
    for x in snap
        .policy_params
        .iter()
        .chain(snap.value_params.iter())
        .chain(snap.log_std.iter())
    {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    buf
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                Error::Decode(format!(
                    "truncated reading {what}: need {n} bytes at offset {}, have {}",
                    self.pos,
                    self.buf.len() - self.pos
                ))
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn layout(&mut self, what: &str) -> Result<MlpLayout> {
        let input = self.u32(what)?;
        let n_hidden = self.u32(what)?;
        if n_hidden > 64 {
            return Err(Error::Decode(format!("{what}: implausible depth {n_hidden}")));
        }
        let hidden = (0..n_hidden)
            .map(|_| self.u32(what))
            .collect::<Result<Vec<_>>>()?;
        let output = self.u32(what)?;
        MlpLayout::new(input, hidden, output).map_err(|e| Error::Decode(format!("{what}: {e}")))
    }

    fn floats(&mut self, n: u64, what: &str) -> Result<Vec<f64>> {
        let bytes = usize::try_from(n)
            .ok()
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::Decode(format!("{what}: length {n} overflows")))?;
        let raw = self.take(bytes, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Inverse of [`encode_snapshot`]. Never panics on malformed input.
pub fn decode_snapshot(bytes: &[u8]) -> Result<ParameterSnapshot> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != SNAPSHOT_MAGIC {
        return Err(Error::Decode("bad magic".into()));
    }
    let format = r.u8("format version")?;
    if format != SNAPSHOT_FORMAT_VERSION {
        return Err(Error::Decode(format!("unsupported format version {format}")));
    }
    let head_tag = r.u8("head")?;
    r.take(2, "reserved")?;
    let version = r.u64("snapshot version")?;
    let policy_layout = r.layout("policy layout")?;
    let value_layout = r.layout("value layout")?;
    let head = match head_tag {
        0 => PolicyHead::Categorical {
            n: policy_layout.output_dim,
        },
        1 => PolicyHead::Gaussian {
            dim: policy_layout.output_dim,
        },
        t => return Err(Error::Decode(format!("unknown head tag {t}"))),
    };
    let n_policy = r.u64("policy count")?;
    let n_value = r.u64("value count")?;
    let n_std = r.u64("log_std count")?;
    let policy_params = ParamVector(r.floats(n_policy, "policy params")?);
    let value_params = ParamVector(r.floats(n_value, "value params")?);
    let log_std = r.floats(n_std, "log_std")?;
    if r.pos != bytes.len() {
        return Err(Error::Decode(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    let snap = ParameterSnapshot {
        version,
        head,
        policy_layout,
        value_layout,
        policy_params,
        value_params,
        log_std,
    };
    snap.validate().map_err(|e| Error::Decode(e.to_string()))?;
    if !snap.all_finite() {
        return Err(Error::Decode("non-finite parameter".into()));
    }
    Ok(snap)
}

pub fn write_checkpoint(path: &std::path::Path, snap: &ParameterSnapshot) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, encode_snapshot(snap)).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &std::path::Path) -> Result<ParameterSnapshot> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_snapshot(&bytes)
}
