//! Desk-scale environments: cart-pole balance, pendulum swing-up, and a
//! synthetic "busy" environment whose per-step CPU cost is calibrated.
//!
//! Every environment is single-owner and fully deterministic given the
//! generator passed to [`Env::reset`].

use std::f64::consts::PI;
use std::fmt;
use std::hint::black_box;
use std::str::FromStr;
use std::sync::OnceLock;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ActionSpace {
    Discrete(usize),
    Continuous { dim: usize, low: f64, high: f64 },
}

/// An action as produced by a policy, before any clamping.
#[derive(Debug, Clone, PartialEq)]
pub enum ActionValue {
    Discrete(usize),
    Continuous(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BusyParams {
    pub step_cost_us: u64,
    pub episode_len: usize,
    pub obs_dim: usize,
}

impl Default for BusyParams {
    fn default() -> Self {
        Self {
            step_cost_us: 200,
            episode_len: 200,
            obs_dim: 16,
        }
    }
}

impl BusyParams {
    pub fn with_step_cost(step_cost_us: u64) -> Self {
        Self {
            step_cost_us,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EnvSpec {
    CartPole,
    Pendulum,
    Busy(BusyParams),
}

impl EnvSpec {
    pub fn name(&self) -> &'static str {
        match self {
            EnvSpec::CartPole => "cartpole",
            EnvSpec::Pendulum => "pendulum",
            EnvSpec::Busy(_) => "busy",
        }
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            EnvSpec::CartPole => 4,
            EnvSpec::Pendulum => 3,
            EnvSpec::Busy(p) => p.obs_dim,
        }
    }

    pub fn action_space(&self) -> ActionSpace {
        match self {
            EnvSpec::CartPole | EnvSpec::Busy(_) => ActionSpace::Discrete(2),
            EnvSpec::Pendulum => ActionSpace::Continuous {
                dim: 1,
                low: -pendulum::MAX_TORQUE,
                high: pendulum::MAX_TORQUE,
            },
        }
    }

    pub fn max_episode_steps(&self) -> usize {
        match self {
            EnvSpec::CartPole => cartpole::HORIZON,
            EnvSpec::Pendulum => pendulum::HORIZON,
            EnvSpec::Busy(p) => p.episode_len,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let EnvSpec::Busy(p) = self {
            if p.obs_dim == 0 || p.episode_len == 0 {
                return Err(Error::Config(format!(
                    "busy env needs obs_dim >= 1 and episode_len >= 1, got {p:?}"
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for EnvSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parses a bare kind name; busy parameters take their defaults.
impl FromStr for EnvSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "cartpole" => Ok(EnvSpec::CartPole),
            "pendulum" => Ok(EnvSpec::Pendulum),
            "busy" => Ok(EnvSpec::Busy(BusyParams::default())),
            other => Err(Error::Config(format!("unknown env kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub obs: Vec<f64>,
    pub reward: f64,
    /// Failure or goal state; the return tail is zero.
    pub terminated: bool,
    /// Horizon reached; the return tail should be bootstrapped.
    pub time_limit: bool,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.time_limit
    }
}

// ---------------------------------------------------------------------------
// Busy-loop calibration
// ---------------------------------------------------------------------------

/// Measured speed of the busy loop on this machine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BusyCalibration {
    pub iters_per_us: f64,
}

impl BusyCalibration {
    /// Times the spin loop directly. Call on an otherwise idle core.
    pub fn measure() -> Self {
        let mut iters: u64 = 1 << 12;
        loop {
            let t0 = Instant::now();
            black_box(spin(iters, 1));
            if t0.elapsed().as_micros() >= 2_000 {
                break;
            }
            iters *= 2;
        }
        let mut rates: Vec<f64> = (0..5)
            .map(|k| {
                let t0 = Instant::now();
                black_box(spin(iters, k + 2));
                iters as f64 / (t0.elapsed().as_secs_f64() * 1e6)
            })
            .collect();
        rates.sort_by(f64::total_cmp);
        Self {
            iters_per_us: rates[rates.len() / 2],
        }
    }

    pub fn iters_for(&self, step_cost_us: u64) -> u64 {
        (self.iters_per_us * step_cost_us as f64).round() as u64
    }
}

/// Process-wide calibration, measured on first use.
///
/// Callers that spawn workers should touch this before spawning so the
/// measurement is taken while the machine is still quiet.
pub fn busy_calibration() -> BusyCalibration {
    static CAL: OnceLock<BusyCalibration> = OnceLock::new();
    *CAL.get_or_init(BusyCalibration::measure)
}

fn spin(iters: u64, seed: u64) -> u64 {
    let mut x = seed | 1;
    for _ in 0..iters {
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        x = black_box(x);
    }
    x
}

// ---------------------------------------------------------------------------
// Dynamics
// ---------------------------------------------------------------------------

mod cartpole {
    pub const GRAVITY: f64 = 9.8;
    pub const MASS_CART: f64 = 1.0;
    pub const MASS_POLE: f64 = 0.1;
    pub const TOTAL_MASS: f64 = MASS_CART + MASS_POLE;
    pub const HALF_LENGTH: f64 = 0.5;
    pub const POLE_MASS_LENGTH: f64 = MASS_POLE * HALF_LENGTH;
    pub const FORCE_MAG: f64 = 10.0;
    pub const TAU: f64 = 0.02;
    pub const X_LIMIT: f64 = 2.4;
    // 12 degrees
    pub const THETA_LIMIT: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;
    pub const HORIZON: usize = 500;

    /// One explicit Euler step of `[x, x_dot, theta, theta_dot]`.
    pub fn euler_step(s: [f64; 4], force: f64) -> [f64; 4] {
        let [x, x_dot, theta, theta_dot] = s;
        let (sin, cos) = theta.sin_cos();
        let temp = (force + POLE_MASS_LENGTH * theta_dot * theta_dot * sin) / TOTAL_MASS;
        let theta_acc = (GRAVITY * sin - cos * temp)
            / (HALF_LENGTH * (4.0 / 3.0 - MASS_POLE * cos * cos / TOTAL_MASS));
        let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos / TOTAL_MASS;
        [
            x + TAU * x_dot,
            x_dot + TAU * x_acc,
            theta + TAU * theta_dot,
            theta_dot + TAU * theta_acc,
        ]
    }

    pub fn failed(s: &[f64; 4]) -> bool {
        s[0].abs() > X_LIMIT || s[2].abs() > THETA_LIMIT
    }
}

mod pendulum {
    pub const G: f64 = 10.0;
    pub const MASS: f64 = 1.0;
    pub const LENGTH: f64 = 1.0;
    pub const DT: f64 = 0.05;
    pub const MAX_TORQUE: f64 = 2.0;
    pub const MAX_SPEED: f64 = 8.0;
    pub const HORIZON: usize = 200;
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut w = theta.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

#[derive(Debug, Clone, PartialEq)]
enum Physics {
    CartPole([f64; 4]),
    Pendulum { theta: f64, theta_dot: f64 },
    Busy { obs: Vec<f64>, rng: Rng, spin_iters: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    PreReset,
    Running,
    Done,
}

/// A single environment instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Env {
    spec: EnvSpec,
    physics: Physics,
    steps_elapsed: usize,
    phase: Phase,
}

/// Builds an environment in its pre-reset state. Busy environments use the
/// process-wide [`busy_calibration`].
pub fn make_env(spec: &EnvSpec) -> Result<Env> {
    let cal = match spec {
        EnvSpec::Busy(_) => Some(busy_calibration()),
        _ => None,
    };
    make_env_calibrated(spec, cal)
}

pub fn make_env_calibrated(spec: &EnvSpec, cal: Option<BusyCalibration>) -> Result<Env> {
    spec.validate()?;
    let physics = match spec {
        EnvSpec::CartPole => Physics::CartPole([0.0; 4]),
        EnvSpec::Pendulum => Physics::Pendulum {
            theta: 0.0,
            theta_dot: 0.0,
        },
        EnvSpec::Busy(p) => Physics::Busy {
            obs: vec![0.0; p.obs_dim],
            rng: Rng::new(0),
            spin_iters: cal.unwrap_or_else(busy_calibration).iters_for(p.step_cost_us),
        },
    };
    Ok(Env {
        spec: *spec,
        physics,
        steps_elapsed: 0,
        phase: Phase::PreReset,
    })
}

impl Env {
    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn steps_elapsed(&self) -> usize {
        self.steps_elapsed
    }

    pub fn needs_reset(&self) -> bool {
        self.phase != Phase::Running
    }

    pub fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        self.steps_elapsed = 0;
        self.phase = Phase::Running;
        match &mut self.physics {
            Physics::CartPole(s) => {
                for v in s.iter_mut() {
                    *v = rng.uniform_range(-0.05, 0.05);
                }
            }
            Physics::Pendulum { theta, theta_dot } => {
                *theta = rng.uniform_range(-PI, PI);
                *theta_dot = rng.uniform_range(-1.0, 1.0);
            }
            Physics::Busy { obs, rng: inner, .. } => {
                for v in obs.iter_mut() {
                    *v = rng.uniform_range(-1.0, 1.0);
                }
                *inner = rng.split();
            }
        }
        self.observation()
    }

    pub fn observation(&self) -> Vec<f64> {
        match &self.physics {
            Physics::CartPole(s) => s.to_vec(),
            Physics::Pendulum { theta, theta_dot } => vec![theta.cos(), theta.sin(), *theta_dot],
            Physics::Busy { obs, .. } => obs.clone(),
        }
    }

    /// Overwrites the cart-pole state `[x, x_dot, theta, theta_dot]` of a running episode.
    pub fn set_cartpole_state(&mut self, state: [f64; 4]) -> Result<()> {
        match &mut self.physics {
            Physics::CartPole(s) => {
                *s = state;
                Ok(())
            }
            _ => Err(Error::EnvUsage(format!("{} has no cart-pole state", self.spec))),
        }
    }

    /// Overwrites the pendulum angle and angular velocity of a running episode.
    pub fn set_pendulum_state(&mut self, theta: f64, theta_dot: f64) -> Result<()> {
        match &mut self.physics {
            Physics::Pendulum {
                theta: t,
                theta_dot: td,
            } => {
                *t = theta;
                *td = theta_dot;
                Ok(())
            }
            _ => Err(Error::EnvUsage(format!("{} has no pendulum state", self.spec))),
        }
    }

    pub fn pendulum_angle(&self) -> Option<f64> {
        match self.physics {
            Physics::Pendulum { theta, .. } => Some(theta),
            _ => None,
        }
    }

    pub fn step(&mut self, action: &ActionValue) -> Result<StepResult> {
        match self.phase {
            Phase::PreReset => return Err(Error::EnvUsage("step before reset".into())),
            Phase::Done => {
                return Err(Error::EnvUsage(
                    "step after episode end without reset".into(),
                ))
            }
            Phase::Running => {}
        }
        let space = self.spec.action_space();
        let (reward, terminated) = match (&mut self.physics, action) {
            (Physics::CartPole(s), ActionValue::Discrete(a)) => {
                check_discrete(*a, &space)?;
                let force = if *a == 1 {
                    cartpole::FORCE_MAG
                } else {
                    -cartpole::FORCE_MAG
                };
                *s = cartpole::euler_step(*s, force);
                (1.0, cartpole::failed(s))
            }
            (Physics::Pendulum { theta, theta_dot }, ActionValue::Continuous(u)) => {
                use pendulum::*;
                if u.len() != 1 {
                    return Err(Error::dim("pendulum action", 1, u.len()));
                }
                let u = u[0].clamp(-MAX_TORQUE, MAX_TORQUE);
                let th = *theta;
                let cost = wrap_angle(th).powi(2) + 0.1 * theta_dot.powi(2) + 0.001 * u * u;
                let acc = 3.0 * G / (2.0 * LENGTH) * th.sin() + 3.0 / (MASS * LENGTH * LENGTH) * u;
                *theta_dot = (*theta_dot + acc * DT).clamp(-MAX_SPEED, MAX_SPEED);
                *theta = th + *theta_dot * DT;
                (-cost, false)
            }
            (
                Physics::Busy {
                    obs,
                    rng,
                    spin_iters,
                },
                ActionValue::Discrete(a),
            ) => {
                check_discrete(*a, &space)?;
                black_box(spin(*spin_iters, rng.state()));
                let pull = if *a == 1 { 0.05 } else { 0.0 };
                for v in obs.iter_mut() {
                    *v += 0.1 * rng.uniform_range(-1.0, 1.0) - pull * *v;
                }
                let sq: f64 = obs.iter().map(|v| v * v).sum();
                (-sq / obs.len() as f64, false)
            }
            (_, other) => {
                return Err(Error::EnvUsage(format!(
                    "action {other:?} incompatible with {}",
                    self.spec
                )))
            }
        };
        self.steps_elapsed += 1;
        let time_limit = self.steps_elapsed >= self.spec.max_episode_steps();
        if terminated || time_limit {
            self.phase = Phase::Done;
        }
        Ok(StepResult {
            obs: self.observation(),
            reward,
            terminated,
            time_limit,
        })
    }
}

fn check_discrete(a: usize, space: &ActionSpace) -> Result<()> {
    match space {
        ActionSpace::Discrete(n) if a < *n => Ok(()),
        _ => Err(Error::EnvUsage(format!("action {a} out of range for {space:?}"))),
    }
}
