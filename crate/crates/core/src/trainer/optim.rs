//! Step-decayed learning rate and classical momentum.

use crate::encoder::round_f32;
use crate::error::{Error, Result};
use crate::model::Model;

use super::{Gradients, TrainConfig};

/// `base_lr / drop_factor^⌊epoch / drop_every⌋`
pub fn lr_at(epoch: usize, config: &TrainConfig) -> f64 {
    let drops = (epoch / config.lr_drop_every.max(1)) as i32;
    config.base_lr / config.lr_drop_factor.powi(drops)
}

/// `v ← μv − lr·g; θ ← θ + v`
pub fn sgd_momentum_step(params: &mut [f64], grads: &[f64], velocity: &mut [f64], lr: f64, mu: f64) {
    for ((p, g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = mu * *v - lr * g;
        *p += *v;
    }
}

/// Velocity buffers, one per model tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Momentum {
    velocity: Vec<Vec<f64>>,
}

impl Momentum {
    pub fn new(model: &Model) -> Self {
        Self {
            velocity: model.tensors().iter().map(|(_, t)| vec![0.0; t.len()]).collect(),
        }
    }

    /// One update of every tensor. Gradients are checked for finiteness
    /// first; parameters are kept at 32-bit precision afterwards.
    pub fn step(&mut self, model: &mut Model, grads: &Gradients, lr: f64) -> Result<()> {
        let mu = model.config.momentum;
        let enc_lr = lr * model.config.encoder_lr_scale;
        let grad_tensors = grads.tensors();
        for (name, g) in &grad_tensors {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    tensor: format!("gradient of {name}"),
                });
            }
        }
        let mut params = model.tensors_mut();
        if params.len() != grad_tensors.len() || params.len() != self.velocity.len() {
            return Err(Error::dims("optimizer tensors", params.len(), grad_tensors.len()));
        }
        for (((name, p), (_, g)), v) in params.iter_mut().zip(&grad_tensors).zip(&mut self.velocity) {
            let rate = if name.starts_with("encoder.") { enc_lr } else { lr };
            sgd_momentum_step(p, g, v, rate, mu);
            p.iter_mut().for_each(|x| *x = round_f32(*x));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule() {
        let c = TrainConfig::default();
        assert_eq!(lr_at(0, &c), 0.001);
        assert_eq!(lr_at(9, &c), 0.001);
        assert!((lr_at(10, &c) - 1e-4).abs() < 1e-18);
        assert!((lr_at(25, &c) - 1e-5).abs() < 1e-19);
    }

    #[test]
    fn zero_momentum_is_plain_descent() {
        let mut p = vec![1.0, -2.0, 0.5];
        let g = vec![0.3, 0.1, -0.7];
        let mut v = vec![0.0; 3];
        let expected: Vec<f64> = p.iter().zip(&g).map(|(a, b)| a - 0.05 * b).collect();
        sgd_momentum_step(&mut p, &g, &mut v, 0.05, 0.0);
        assert_eq!(p, expected);
    }

    #[test]
    fn velocity_decays_without_gradient() {
        let mut p = vec![0.0];
        let mut v = vec![1.0];
        for k in 1..=5 {
            sgd_momentum_step(&mut p, &[0.0], &mut v, 0.1, 0.9);
            assert!((v[0] - 0.9f64.powi(k)).abs() < 1e-15);
        }
    }

    #[test]
    fn two_constant_steps() {
        let g = [2.0, -1.0];
        let mut p = vec![0.0, 0.0];
        let mut v = vec![0.0, 0.0];
        sgd_momentum_step(&mut p, &g, &mut v, 1.0, 0.9);
        sgd_momentum_step(&mut p, &g, &mut v, 1.0, 0.9);
        assert!((p[0] + 2.9 * 2.0).abs() < 1e-12);
        assert!((p[1] - 2.9).abs() < 1e-12);
    }
}
