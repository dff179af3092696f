//! First-order optimizers over a [`ModelParams`] set.

use alloc::vec::Vec;

use crate::config::OptimizerKind;
use crate::params::ModelParams;
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone)]
pub struct Optimizer<F> {
    kind: OptimizerKind,
    lr: F,
    beta1: F,
    beta2: F,
    eps: F,
    steps: i32,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
}

impl<F: Real> Optimizer<F> {
    /// Adam uses `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Self {
            kind,
            lr: F::of(lr),
            beta1: F::of(0.9),
            beta2: F::of(0.999),
            eps: F::of(1e-8),
            steps: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.steps
    }

    pub fn step(&mut self, params: &mut ModelParams<Tensor<F>>, grads: &ModelParams<Tensor<F>>) {
        self.steps += 1;
        let grads = grads.named();
        let mut params = params.named_mut();
        if self.m.is_empty() {
            self.m = grads.iter().map(|(_, g)| alloc::vec![F::zero(); g.len()]).collect();
            self.v = self.m.clone();
        }
        match self.kind {
            OptimizerKind::Sgd => {
                for ((_, p), (_, g)) in params.iter_mut().zip(&grads) {
                    for (w, &d) in p.data_mut().iter_mut().zip(g.data()) {
                        *w = *w - self.lr * d;
                    }
                }
            }
            OptimizerKind::Adam => {
                let one = F::one();
                let bc1 = one - self.beta1.powi(self.steps);
                let bc2 = one - self.beta2.powi(self.steps);
                for (i, ((_, p), (_, g))) in params.iter_mut().zip(&grads).enumerate() {
                    let (m, v) = (&mut self.m[i], &mut self.v[i]);
                    for (j, (w, &d)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                        m[j] = self.beta1 * m[j] + (one - self.beta1) * d;
                        v[j] = self.beta2 * v[j] + (one - self.beta2) * d * d;
                        let mh = m[j] / bc1;
                        let vh = v[j] / bc2;
                        *w = *w - self.lr * mh / (vh.sqrt() + self.eps);
                    }
                }
            }
        }
    }
}
