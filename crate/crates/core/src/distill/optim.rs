use ndarray::{ArrayD, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{DepthNet, Scalar};

/// Step-decayed learning rate: `lr0 · drop_to^⌊epoch / every⌋`.
pub fn lr_schedule_with(epoch: usize, lr0: f64, every: usize, drop_to: f64) -> f64 {
    lr0 * drop_to.powi((epoch / every.max(1)) as i32)
}

/// `lr0 · 0.1^⌊epoch / 5⌋`.
pub fn lr_schedule(epoch: usize, lr0: f64) -> f64 {
    lr_schedule_with(epoch, lr0, 5, 0.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub betas: (f64, f64),
    pub eps: f64,
    /// Coupled L2 decay added to the gradient.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            betas: (0.9, 0.999),
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let (b1, b2) = self.betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return Err(Error::Config(format!("Adam betas {:?} must lie in [0, 1)", self.betas)));
        }
        if !(self.eps > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config(
                "Adam eps must be positive and weight decay non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Adam with bias correction; moments live in `f64`.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    step: i32,
    m: Vec<ArrayD<f64>>,
    v: Vec<ArrayD<f64>>,
}

impl Adam {
    pub fn new<T: Scalar>(cfg: AdamConfig, net: &DepthNet<T>) -> Self {
        let zeros: Vec<ArrayD<f64>> = net.parameters().map(|(_, p)| ArrayD::zeros(p.raw_dim())).collect();
        Adam {
            cfg,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }

    pub fn step<T: Scalar>(&mut self, net: &mut DepthNet<T>, grads: &[ArrayD<T>], lr: f64) {
        self.step += 1;
        let AdamConfig {
            betas: (b1, b2),
            eps,
            weight_decay,
        } = self.cfg;
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        for (((_, p), g), (m, v)) in net
            .parameters_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                let g = g.f64() + weight_decay * p.f64();
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let update = lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                *p = T::of(p.f64() - update);
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ModelConfig;

    #[test]
    fn schedule_drops_every_five_epochs() {
        assert_eq!(lr_schedule(0, 1e-4), 1e-4);
        assert_eq!(lr_schedule(4, 1e-4), 1e-4);
        assert!((lr_schedule(5, 1e-4) - 1e-5).abs() < 1e-20);
        assert!((lr_schedule(19, 1e-4) - 1e-7).abs() < 1e-20);
        let drops = (0..20)
            .collect::<Vec<_>>()
            .windows(2)
            .filter(|w| lr_schedule(w[0], 1.0) != lr_schedule(w[1], 1.0))
            .count();
        assert_eq!(drops, 3);
    }

    #[test]
    fn first_step_moves_each_weight_by_lr() {
        let mut net = DepthNet::<f64>::new(ModelConfig::toy_student(), 0).unwrap();
        let before = net.clone();
        let grads: Vec<_> = net.parameters().map(|(_, p)| p.mapv(|_| 0.5)).collect();
        let cfg = AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        };
        let mut adam = Adam::new(cfg, &net);
        adam.step(&mut net, &grads, 1e-3);
        for ((_, a), (_, b)) in net.parameters().zip(before.parameters()) {
            for (&x, &y) in a.iter().zip(b.iter()) {
                assert!((y - x - 1e-3).abs() < 1e-9);
            }
        }
    }
}
