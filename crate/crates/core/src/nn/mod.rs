//! Numerical kernel: a flat-parameter MLP with hand-written reverse mode,
//! the Adam optimizer, and a small deterministic generator.
//!
//! Everything here works on `f64` and has no numerical dependencies, so the
//! same code runs unchanged inside every sampler worker and the learner.

mod adam;
mod mlp;
mod rng;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use mlp::{
    finite_diff_grad, finite_diff_grad_scaled, mlp_backward, mlp_backward_trace, mlp_forward,
    mlp_forward_trace, Activation, ForwardTrace, MlpLayout, ParamVector,
};
pub use rng::{derive_worker_rng, splitmix64, Rng};
