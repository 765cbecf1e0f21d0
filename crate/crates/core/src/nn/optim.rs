use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Adam with decoupled weight decay.
    AdamW {
        beta1: f64,
        beta2: f64,
        eps: f64,
        weight_decay: f64,
    },
    /// SGD with heavy-ball momentum and L2 weight decay.
    Sgd { momentum: f64, weight_decay: f64 },
}

impl OptimizerKind {
    pub fn adamw(weight_decay: f64) -> Self {
        OptimizerKind::AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }

    pub fn sgd(momentum: f64, weight_decay: f64) -> Self {
        OptimizerKind::Sgd {
            momentum,
            weight_decay,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::AdamW { .. } => "adamw",
            OptimizerKind::Sgd { .. } => "sgd",
        }
    }
}

#[derive(Clone, Debug)]
pub struct OptimizerState<T = f32> {
    kind: OptimizerKind,
    step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Real> OptimizerState<T> {
    /// State for parameters with the given flat lengths.
    pub fn new(kind: OptimizerKind, lengths: &[usize]) -> Self {
        let zeros = || lengths.iter().map(|&n| vec![T::zero(); n]).collect();
        let second = match kind {
            OptimizerKind::AdamW { .. } => zeros(),
            OptimizerKind::Sgd { .. } => Vec::new(),
        };
        Self {
            kind,
            step: 0,
            first: zeros(),
            second,
        }
    }

    pub fn for_params(kind: OptimizerKind, params: &[&[T]]) -> Self {
        let lengths: Vec<usize> = params.iter().map(|p| p.len()).collect();
        Self::new(kind, &lengths)
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [&mut [T]], grads: &[&[T]], lr: f64) -> Result<()> {
        if params.len() != self.first.len()
            || grads.len() != params.len()
            || params
                .iter()
                .zip(grads)
                .zip(&self.first)
                .any(|((p, g), m)| p.len() != g.len() || p.len() != m.len())
        {
            return Err(Error::shape(
                "parameters, gradients and moments of equal shape",
                "mismatched buffers",
            ));
        }
        self.step += 1;
        match self.kind {
            OptimizerKind::AdamW {
                beta1,
                beta2,
                eps,
                weight_decay,
            } => {
                let t = self.step as i32;
                let bc1 = 1.0 - beta1.powi(t);
                let bc2 = 1.0 - beta2.powi(t);
                for ((p, g), (m, v)) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(self.first.iter_mut().zip(self.second.iter_mut()))
                {
                    for i in 0..p.len() {
                        let gi = g[i].widen();
                        let mi = beta1 * m[i].widen() + (1.0 - beta1) * gi;
                        let vi = beta2 * v[i].widen() + (1.0 - beta2) * gi * gi;
                        m[i] = T::lift(mi);
                        v[i] = T::lift(vi);
                        let mut pi = p[i].widen();
                        pi -= lr * weight_decay * pi;
                        pi -= lr * (mi / bc1) / ((vi / bc2).sqrt() + eps);
                        p[i] = T::lift(pi);
                    }
                }
            }
            OptimizerKind::Sgd {
                momentum,
                weight_decay,
            } => {
                for ((p, g), buf) in params.iter_mut().zip(grads).zip(self.first.iter_mut()) {
                    for i in 0..p.len() {
                        let pi = p[i].widen();
                        let gi = g[i].widen() + weight_decay * pi;
                        let bi = momentum * buf[i].widen() + gi;
                        buf[i] = T::lift(bi);
                        p[i] = T::lift(pi - lr * bi);
                    }
                }
            }
        }
        Ok(())
    }
}
