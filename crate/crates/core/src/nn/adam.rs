use crate::error::{Error, Result};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("adam lr must be > 0, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("adam {name} must be in [0, 1), got {b}")));
            }
        }
        Ok(())
    }
}

/// First/second moment estimates and step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// In-place bias-corrected update. On error neither `self` nor `params`
    /// is modified.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], cfg: &AdamConfig) -> Result<()> {
        cfg.validate()?;
        if params.len() != self.len() {
            return Err(Error::dim("adam params", self.len(), params.len()));
        }
        if grad.len() != self.len() {
            return Err(Error::dim("adam grad", self.len(), grad.len()));
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient entry {i} is {}", grad[i])));
        }

        self.t += 1;
        let t = self.t as i32;
        let bias1 = 1.0 - cfg.beta1.powi(t);
        let bias2 = 1.0 - cfg.beta2.powi(t);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        Ok(())
    }
}

/// Pure form of [`AdamState::step`].
pub fn adam_step(
    state: &AdamState,
    params: &[f64],
    grad: &[f64],
    cfg: &AdamConfig,
) -> Result<(Vec<f64>, AdamState)> {
    let mut next_state = state.clone();
    let mut next_params = params.to_vec();
    next_state.step(&mut next_params, grad, cfg)?;
    Ok((next_params, next_state))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            ..AdamConfig::default()
        }
    }

    #[test]
    fn zero_grad_leaves_params() {
        let state = AdamState::new(3);
        let (p, s) = adam_step(&state, &[1.0, -2.0, 0.5], &[0.0; 3], &cfg(0.1)).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_closed_form() {
        let c = cfg(0.01);
        for g in [3.0, -0.25, 1e-3] {
            let (p, _) = adam_step(&AdamState::new(1), &[0.0], &[g], &c).unwrap();
            let expected = -c.lr * g / (g.abs() + c.eps);
            assert!((p[0] - expected).abs() < 1e-15, "{} vs {}", p[0], expected);
            assert!((p[0] + c.lr * g.signum()).abs() < 1e-6);
        }
    }

    #[test]
    fn two_steps_match_hand_unrolled() {
        let c = AdamConfig {
            lr: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        };
        let g = 0.5;
        let (p1, s1) = adam_step(&AdamState::new(1), &[1.0], &[g], &c).unwrap();
        let (p2, s2) = adam_step(&s1, &p1, &[g], &c).unwrap();

        // Unrolled: m1 = 0.05, v1 = 0.00025; m2 = 0.095, v2 = 0.00049975.
        let m1 = 0.1 * g;
        let v1 = 0.001 * g * g;
        let x1 = 1.0 - 0.1 * (m1 / 0.1) / ((v1 / 0.001f64).sqrt() + 1e-8);
        let m2 = 0.9 * m1 + 0.1 * g;
        let v2 = 0.999 * v1 + 0.001 * g * g;
        let m2_hat = m2 / (1.0 - 0.81);
        let v2_hat = v2 / (1.0 - 0.999f64 * 0.999);
        let x2 = x1 - 0.1 * m2_hat / (v2_hat.sqrt() + 1e-8);
        assert!((p2[0] - x2).abs() < 1e-14);
        assert_eq!(s2.t, 2);
        // Constant gradient: both corrected moments equal g and g^2.
        assert!((x2 - (1.0 - 0.2)).abs() < 1e-6);
    }

    #[test]
    fn non_finite_grad_rejected_without_mutation() {
        let mut s = AdamState::new(2);
        let mut p = vec![1.0, 2.0];
        let err = s.step(&mut p, &[0.1, f64::NAN], &cfg(0.1)).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert_eq!(p, vec![1.0, 2.0]);
        assert_eq!(s.t, 0);
    }

    #[test]
    fn bad_config_rejected() {
        let s = AdamState::new(1);
        assert!(adam_step(&s, &[0.0], &[1.0], &cfg(0.0)).is_err());
        let c = AdamConfig {
            beta1: 1.0,
            ..AdamConfig::default()
        };
        assert!(adam_step(&s, &[0.0], &[1.0], &c).is_err());
    }

    #[test]
    fn second_moment_nonnegative_and_t_counts() {
        let mut s = AdamState::new(4);
        let mut p = vec![0.0; 4];
        let mut rng = crate::nn::Rng::new(1);
        for step in 1..=50 {
            let g: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
            s.step(&mut p, &g, &cfg(1e-2)).unwrap();
            assert_eq!(s.t, step);
            assert!(s.v.iter().all(|&v| v >= 0.0));
        }
    }
}
