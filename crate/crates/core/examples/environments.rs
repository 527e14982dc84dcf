//! Stepping each environment directly with a fixed action.

use std::time::Instant;

use pararl::envs::{busy_calibration, make_env, make_env_calibrated, BusyParams, EnvSpec};
use pararl::nn::Rng;
use pararl::policy::ActionValue;

fn rollout(spec: EnvSpec, action: ActionValue) -> pararl::Result<()> {
    let mut env = make_env_calibrated(&spec, Some(busy_calibration()))?;
    let mut rng = Rng::new(0);
    env.reset(&mut rng);
    let t0 = Instant::now();
    let (mut total, mut steps) = (0.0, 0);
    loop {
        let s = env.step(&action)?;
        total += s.reward;
        steps += 1;
        if s.done() {
            println!(
                "{spec}: {steps} steps, return {total:.2}, terminated {}, {:.1} us/step",
                s.terminated,
                t0.elapsed().as_secs_f64() * 1e6 / steps as f64
            );
            return Ok(());
        }
    }
}

fn main() -> pararl::Result<()> {
    rollout(EnvSpec::CartPole, ActionValue::Discrete(1))?;
    rollout(EnvSpec::Pendulum, ActionValue::Continuous(vec![0.0]))?;
    rollout(EnvSpec::Busy(BusyParams::with_step_cost(200)), ActionValue::Discrete(0))?;

    let mut env = make_env(&EnvSpec::CartPole)?;
    match env.step(&ActionValue::Discrete(0)) {
        Ok(_) => unreachable!(),
        Err(e) => println!("step before reset: {e}"),
    }
    Ok(())
}
