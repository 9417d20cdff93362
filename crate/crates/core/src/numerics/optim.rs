use super::{ParamStore, Parameter};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// The learning rate is multiplied by `decay_factor` every `decay_every`
    /// optimizer steps.
    pub decay_every: u64,
    pub decay_factor: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            decay_every: 300_000,
            decay_factor: 0.5,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("optimizer learning rate must be positive".into()));
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return Err(Error::Config("optimizer betas must lie in (0, 1)".into()));
        }
        if self.decay_every == 0 {
            return Err(Error::Config("optimizer decay_every must be positive".into()));
        }
        Ok(())
    }

    /// Learning rate in effect for the update that brings the step count to
    /// `step` (1-based).
    pub fn rate_at(&self, step: u64) -> f64 {
        let halvings = (step.saturating_sub(1) / self.decay_every) as i32;
        self.learning_rate * self.decay_factor.powi(halvings)
    }
}

/// One bias-corrected Adam update of `p` from its gradient slot, which is
/// cleared afterwards.
///
/// Elements whose gradient is exactly zero are left untouched, moments
/// included, so a zero gradient never moves a parameter.
pub fn adam_step(p: &mut Parameter, config: &OptimizerConfig) -> Result<()> {
    let grad = p
        .tensor
        .take_grad()
        .ok_or_else(|| Error::usage(format!("adam_step: parameter '{}' has no gradient", p.name())))?;
    p.step_count += 1;
    let t = p.step_count as i32;
    let lr = config.rate_at(p.step_count);
    let bc1 = 1.0 - config.beta1.powi(t);
    let bc2 = 1.0 - config.beta2.powi(t);
    let values = p.tensor.data_mut();
    for (i, &g) in grad.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let m = &mut p.first_moment[i];
        let v = &mut p.second_moment[i];
        *m = config.beta1 * *m + (1.0 - config.beta1) * g;
        *v = config.beta2 * *v + (1.0 - config.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        values[i] -= lr * m_hat / (v_hat.sqrt() + config.epsilon);
    }
    Ok(())
}

/// Applies [`adam_step`] to every parameter that carries a gradient.
pub fn adam_step_all(store: &mut ParamStore, config: &OptimizerConfig) -> Result<()> {
    for p in store.iter_mut() {
        if p.tensor.grad().is_some() {
            adam_step(p, config)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    #[test]
    fn zero_gradient_is_noop() {
        let mut p = Parameter::new("p", Tensor::from_rows(&[[1.0, -2.0]]).unwrap());
        let before = p.tensor.data().to_vec();
        p.tensor.set_grad(vec![0.0, 0.0]);
        adam_step(&mut p, &OptimizerConfig::default()).unwrap();
        assert_eq!(p.tensor.data(), &before[..]);
        assert_eq!(p.step_count(), 1);
        assert!(p.tensor.grad().is_none());
    }

    #[test]
    fn zero_gradient_after_momentum_is_still_noop() {
        let mut p = Parameter::new("p", Tensor::scalar(0.5));
        let cfg = OptimizerConfig::default();
        p.tensor.set_grad(vec![1.0]);
        adam_step(&mut p, &cfg).unwrap();
        let after_first = p.tensor.data()[0];
        p.tensor.set_grad(vec![0.0]);
        adam_step(&mut p, &cfg).unwrap();
        assert_eq!(p.tensor.data()[0], after_first);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = g, v̂ = g², so the step is lr · g / (|g| + ε).
        let mut p = Parameter::new("p", Tensor::scalar(0.0));
        let cfg = OptimizerConfig::default();
        p.tensor.set_grad(vec![1.0]);
        adam_step(&mut p, &cfg).unwrap();
        let expected = -cfg.learning_rate * 1.0 / (1.0 + cfg.epsilon);
        assert!((p.tensor.data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn missing_gradient_is_usage_error() {
        let mut p = Parameter::new("p", Tensor::scalar(0.0));
        assert!(matches!(
            adam_step(&mut p, &OptimizerConfig::default()),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn rate_halves_after_decay_every_steps() {
        let cfg = OptimizerConfig {
            decay_every: 3,
            ..Default::default()
        };
        assert_eq!(cfg.rate_at(1), 1e-2);
        assert_eq!(cfg.rate_at(3), 1e-2);
        assert_eq!(cfg.rate_at(4), 5e-3);
        assert_eq!(cfg.rate_at(7), 2.5e-3);

        // The effective step after the boundary is half the size.
        let mut p = Parameter::new("p", Tensor::scalar(0.0));
        for _ in 0..3 {
            p.tensor.set_grad(vec![1.0]);
            adam_step(&mut p, &cfg).unwrap();
        }
        let before = p.tensor.data()[0];
        p.tensor.set_grad(vec![1.0]);
        adam_step(&mut p, &cfg).unwrap();
        let step = before - p.tensor.data()[0];
        // With a constant gradient m̂ = v̂^{1/2} = 1, so the step equals the rate.
        assert!((step - 5e-3).abs() < 1e-9, "step {step}");
    }
}
