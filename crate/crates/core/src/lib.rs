//! Parallel on-policy reinforcement learning.
//!
//! N sampler threads each own an environment and generate fixed-size
//! experience chunks under the newest versioned policy snapshot; a single
//! agent thread gathers a fixed number of samples per iteration, runs a PPO
//! update, and broadcasts the next snapshot. Every iteration is timed as a
//! collection phase and a learning phase so the effect of the worker count
//! can be measured directly.
//!
//! Module map:
//!
//! - [`nn`]: flat-parameter MLP, Adam, deterministic generator
//! - [`envs`]: cart-pole, pendulum and a calibrated busy-loop environment
//! - [`policy`]: action distributions and the snapshot wire format
//! - [`learner`]: GAE and the clipped-surrogate update
//! - [`sampler`]: the worker loop and its queue protocol
//! - [`orchestrator`]: worker pool, gather, and the training loop
//! - [`bench`] / [`report`]: worker-count sweeps and CSV/JSON output
//! - [`config`] / [`cli`]: `key=value` config files and the command line
//!
//! See the crate's `examples/` directory for one runnable program per capability.

pub mod bench;
pub mod cli;
pub mod config;
pub mod envs;
pub mod error;
pub mod learner;
pub mod nn;
pub mod orchestrator;
pub mod policy;
pub mod report;
pub mod sampler;

pub use error::{Error, Result};
