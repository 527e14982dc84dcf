//! Line-oriented `key=value` run configuration.
//!
//! ```text
//! # comments start with '#'
//! env=busy
//! busy.step_cost_us=200
//! hyper.lr=0.0003
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::envs::EnvSpec;
use crate::error::{Error, Result};
use crate::learner::PpoHyper;
use crate::orchestrator::RunConfig;

/// Environment variable naming the default output root.
pub const OUT_DIR_ENV: &str = "WALLE_OUT_DIR";

/// Ordered key/value settings; later insertions override earlier ones.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Settings {
    entries: BTreeMap<String, String>,
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Settings::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got {raw:?}", lineno + 1))
            })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            s.set(k, v);
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn merge(&mut self, other: &Settings) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    fn typed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::Config(format!("invalid value {v:?} for {key}")))
            })
            .transpose()
    }

    /// Builds the environment from `env` and `busy.*` keys.
    pub fn env_spec(&self, default: EnvSpec) -> Result<EnvSpec> {
        let mut spec = match self.get("env") {
            Some(name) => name.parse()?,
            None => default,
        };
        let busy_keys = ["busy.step_cost_us", "busy.episode_len", "busy.obs_dim"];
        match &mut spec {
            EnvSpec::Busy(p) => {
                if let Some(v) = self.typed("busy.step_cost_us")? {
                    p.step_cost_us = v;
                }
                if let Some(v) = self.typed("busy.episode_len")? {
                    p.episode_len = v;
                }
                if let Some(v) = self.typed("busy.obs_dim")? {
                    p.obs_dim = v;
                }
            }
            _ => {
                if let Some(k) = busy_keys.iter().find(|k| self.get(k).is_some()) {
                    return Err(Error::Config(format!("{k} given but env is {spec}")));
                }
            }
        }
        Ok(spec)
    }

    /// Overlays `hyper.*` keys on `base`.
    pub fn hyper(&self, base: PpoHyper) -> Result<PpoHyper> {
        let mut h = base;
        macro_rules! field {
            ($key:literal, $f:ident) => {
                if let Some(v) = self.typed($key)? {
                    h.$f = v;
                }
            };
        }
        field!("hyper.gamma", gamma);
        field!("hyper.lambda", lambda);
        field!("hyper.clip_eps", clip_eps);
        field!("hyper.epochs", epochs);
        field!("hyper.minibatch_size", minibatch_size);
        field!("hyper.lr", lr);
        field!("hyper.vf_coef", vf_coef);
        field!("hyper.ent_coef", ent_coef);
        field!("hyper.max_grad_norm", max_grad_norm);
        Ok(h)
    }

    pub fn hidden_dims(&self) -> Result<Option<Vec<usize>>> {
        self.get("hidden")
            .map(|v| parse_list(v).map_err(|_| Error::Config(format!("invalid hidden dims {v:?}"))))
            .transpose()
    }

    /// Rejects keys no consumer understands.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self.entries.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(Error::Config(format!("unknown config key {k:?}"))),
            None => Ok(()),
        }
    }

    /// Applies every training key to a default config for the chosen env.
    pub fn run_config(&self) -> Result<RunConfig> {
        self.check_keys(RUN_KEYS)?;
        let env_spec = self.env_spec(EnvSpec::CartPole)?;
        let mut cfg = RunConfig::for_env(env_spec);
        cfg.hyper = self.hyper(cfg.hyper)?;
        if let Some(v) = self.typed("workers")? {
            cfg.n_workers = v;
        }
        if let Some(v) = self.typed("samples_per_iter")? {
            cfg.samples_per_iter = v;
        }
        if let Some(v) = self.typed("iters")? {
            cfg.n_iters = v;
        }
        if let Some(v) = self.typed("seed")? {
            cfg.base_seed = v;
        }
        if let Some(v) = self.typed("chunk_cap")? {
            cfg.chunk_cap = v;
        }
        if let Some(v) = self.typed("eval_episodes")? {
            cfg.eval_episodes = v;
        }
        if let Some(v) = self.typed("checkpoint_every")? {
            cfg.checkpoint_every = v;
        }
        if let Some(v) = self.typed("queue_capacity")? {
            cfg.queue_capacity = Some(v);
        }
        if let Some(v) = self.hidden_dims()? {
            cfg.hidden_dims = v;
        }
        cfg.out_dir = self.get("out").map(PathBuf::from);
        Ok(cfg)
    }
}

pub const RUN_KEYS: &[&str] = &[
    "env",
    "busy.step_cost_us",
    "busy.episode_len",
    "busy.obs_dim",
    "hyper.gamma",
    "hyper.lambda",
    "hyper.clip_eps",
    "hyper.epochs",
    "hyper.minibatch_size",
    "hyper.lr",
    "hyper.vf_coef",
    "hyper.ent_coef",
    "hyper.max_grad_norm",
    "workers",
    "samples_per_iter",
    "iters",
    "seed",
    "chunk_cap",
    "eval_episodes",
    "checkpoint_every",
    "queue_capacity",
    "hidden",
    "out",
    "trials",
];

pub fn parse_list(v: &str) -> std::result::Result<Vec<usize>, std::num::ParseIntError> {
    v.split(',').map(|s| s.trim().parse::<usize>()).collect()
}

/// `$WALLE_OUT_DIR/<name>` if set, else `runs/<name>`.
pub fn default_out_dir(name: &str) -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
        .join(name)
}
