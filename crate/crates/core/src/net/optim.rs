use super::model::{Gradients, Network};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Multiplier applied every `lr_step` iterations.
    pub lr_gamma: f64,
    pub lr_step: u64,
    pub batch_size: usize,
    pub max_iterations: u64,
    pub seed: u64,
    /// Iterations between training-log lines.
    pub log_every: u64,
    /// Batches used to re-estimate batch-norm statistics with the final
    /// weights; 0 keeps the running averages from training.
    pub bn_batches: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            momentum: 0.99,
            weight_decay: 0.0005,
            lr_gamma: 0.9,
            lr_step: 8000,
            batch_size: 32,
            max_iterations: 4000,
            seed: 0,
            log_every: 100,
            bn_batches: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let rates = [self.learning_rate, self.weight_decay, self.lr_gamma];
        if rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) || self.learning_rate <= 0.0 || self.lr_gamma <= 0.0 {
            return Err(Error::invalid("learning rate, decay and gamma must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if self.batch_size == 0 || self.lr_step == 0 || self.log_every == 0 {
            return Err(Error::invalid("batch size, lr step and log interval must be positive"));
        }
        Ok(())
    }

    /// Step-decayed learning rate at `iteration`.
    pub fn lr_at(&self, iteration: u64) -> f64 {
        self.learning_rate * self.lr_gamma.powi((iteration / self.lr_step) as i32)
    }
}

/// Momentum velocity per parameter, aligned with `Network::params`.
#[derive(Clone, Debug, PartialEq)]
pub struct Velocity<T> {
    pub buffers: Vec<Vec<T>>,
}

impl<T: Scalar> Velocity<T> {
    pub fn zeros(net: &Network<T>) -> Self {
        Self {
            buffers: net
                .params
                .iter()
                .map(|p| if p.learnable { vec![T::zero(); p.value.len()] } else { Vec::new() })
                .collect(),
        }
    }
}

/// One momentum step: `v <- mu v - lr (g + lambda w)`, `w <- w + v`, then
/// re-projection of learnable base filters.
pub fn sgd_step<T: Scalar>(
    net: &mut Network<T>,
    velocity: &mut Velocity<T>,
    grads: &Gradients<T>,
    config: &TrainConfig,
    iteration: u64,
) -> Result<()> {
    let lr = T::of(config.lr_at(iteration));
    let mu = T::of(config.momentum);
    for (i, p) in net.params.iter_mut().enumerate() {
        if !p.learnable {
            continue;
        }
        let lambda = if p.decay { T::of(config.weight_decay) } else { T::zero() };
        let v = &mut velocity.buffers[i];
        match &grads[i] {
            Some(g) => {
                if g.len() != p.value.len() {
                    return Err(Error::Shape(format!("gradient for {} has {} values", p.name, g.len())));
                }
                for ((w, v), &g) in p.value.iter_mut().zip(v.iter_mut()).zip(g) {
                    *v = mu * *v - lr * (g + lambda * *w);
                    *w += *v;
                }
            }
            None => {
                for (w, v) in p.value.iter_mut().zip(v.iter_mut()) {
                    *v = mu * *v - lr * (lambda * *w);
                    *w += *v;
                }
            }
        }
    }
    net.project_base()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lr_schedule() {
        let c = TrainConfig::default();
        assert_eq!(c.lr_at(0), 0.001);
        assert_eq!(c.lr_at(7999), 0.001);
        assert!((c.lr_at(8000) - 0.0009).abs() < 1e-15);
        assert!((c.lr_at(16000) - 0.00081).abs() < 1e-15);
    }

    #[test]
    fn validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            momentum: 1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
