//! First-order optimizers over a flat list of parameter tensors.

use crate::error::{Error, Result};
use crate::pipeline::config::{OptimizerKind, TrainConfig};
use crate::tensor::Tensor;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub enum Optimizer {
    Adam {
        lr: f64,
        step: i32,
        m: Vec<Tensor<f64>>,
        v: Vec<Tensor<f64>>,
    },
    Momentum {
        lr: f64,
        momentum: f64,
        velocity: Vec<Tensor<f64>>,
    },
}

impl Optimizer {
    pub fn new(config: &TrainConfig, params: &[&Tensor<f64>]) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.shape())).collect::<Vec<_>>();
        match config.optimizer {
            OptimizerKind::Adam => Optimizer::Adam {
                lr: config.learning_rate,
                step: 0,
                m: zeros(),
                v: zeros(),
            },
            OptimizerKind::Momentum => Optimizer::Momentum {
                lr: config.learning_rate,
                momentum: config.momentum,
                velocity: zeros(),
            },
        }
    }

    /// Applies one update in place. `grads` must align with `params`.
    pub fn step(&mut self, params: &mut [&mut Tensor<f64>], grads: &[Tensor<f64>]) -> Result<()> {
        let n = match self {
            Optimizer::Adam { m, .. } => m.len(),
            Optimizer::Momentum { velocity, .. } => velocity.len(),
        };
        if params.len() != n || grads.len() != n {
            return Err(Error::Dimension(format!(
                "optimizer tracks {n} tensors, got {} parameters and {} gradients",
                params.len(),
                grads.len()
            )));
        }
        match self {
            Optimizer::Adam { lr, step, m, v } => {
                *step += 1;
                let c1 = 1.0 - ADAM_BETA1.powi(*step);
                let c2 = 1.0 - ADAM_BETA2.powi(*step);
                for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(m.iter_mut().zip(v.iter_mut())) {
                    for (((p, &g), m), v) in p
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(m.data_mut().iter_mut())
                        .zip(v.data_mut().iter_mut())
                    {
                        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                        *p -= *lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                    }
                }
            }
            Optimizer::Momentum { lr, momentum, velocity } => {
                for ((p, g), vel) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
                    for ((p, &g), u) in p.data_mut().iter_mut().zip(g.data()).zip(vel.data_mut().iter_mut()) {
                        *u = *momentum * *u + g;
                        *p -= *lr * *u;
                    }
                }
            }
        }
        Ok(())
    }
}
