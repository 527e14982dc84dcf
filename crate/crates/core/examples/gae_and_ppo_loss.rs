//! Advantage estimation and the clipped surrogate by hand, without workers.

use pararl::envs::EnvSpec;
use pararl::learner::{compute_gae, normalize_advantages, ppo_loss_and_grad, PpoHyper, PpoSample};
use pararl::nn::Rng;
use pararl::policy::{init_policy, policy_forward, sample_action};

fn main() -> pararl::Result<()> {
    // Three rewards of 1, constant value 0.5, episode terminates at the end.
    let (adv, ret) = compute_gae(&[1.0; 3], &[0.5; 3], &[false, false, true], 0.0, 0.99, 0.95)?;
    println!("advantages {adv:.5?}");
    println!("returns    {ret:.5?}");
    println!("normalized {:.5?}", normalize_advantages(&adv));

    // The surrogate at the sampling point: every ratio is one.
    let spec = EnvSpec::CartPole;
    let snap = init_policy(&spec, &[16], 7)?;
    let mut rng = Rng::new(3);
    let samples: Vec<PpoSample> = (0..8)
        .map(|i| {
            let obs: Vec<f64> = (0..spec.obs_dim()).map(|_| 0.1 * rng.normal()).collect();
            let (action, logprob_old) = sample_action(&policy_forward(&snap, &obs).unwrap(), &mut rng);
            PpoSample {
                obs,
                action,
                logprob_old,
                advantage: if i % 2 == 0 { 1.0 } else { -1.0 },
                value_target: 1.0,
            }
        })
        .collect();
    let (loss, grad, stats) = ppo_loss_and_grad(&snap, &samples, &PpoHyper::default())?;
    println!(
        "loss {loss:.5}  policy {:.5}  value {:.5}  entropy {:.5}  clip_frac {}  |grad| {:.5}",
        stats.policy_loss,
        stats.value_loss,
        stats.entropy,
        stats.clip_frac,
        stats.grad_norm
    );
    println!("{} gradient entries", grad.len());
    Ok(())
}
