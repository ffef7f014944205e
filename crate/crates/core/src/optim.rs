//! Parameter update rules for outer-loop and supervised training.

use serde::{Deserialize, Serialize};

use crate::net::Params;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum OptimizerKind {
    /// `p ← p − lr·g`.
    #[default]
    Sgd,
    Adam {
        #[serde(default = "beta1")]
        beta1: f64,
        #[serde(default = "beta2")]
        beta2: f64,
        #[serde(default = "eps")]
        eps: f64,
    },
}

fn beta1() -> f64 {
    0.9
}

fn beta2() -> f64 {
    0.999
}

fn eps() -> f64 {
    1e-8
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: beta1(),
            beta2: beta2(),
            eps: eps(),
        }
    }
}

/// Optimizer with its (serializable) state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Optimizer {
            kind,
            lr,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    pub fn apply<P: Params>(&mut self, params: &mut P, grads: &P) {
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => params.add_scaled(-self.lr, grads),
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let g = grads.to_flat();
                if self.m.len() != g.len() {
                    self.m = vec![0.0; g.len()];
                    self.v = vec![0.0; g.len()];
                }
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                let mut p = params.to_flat();
                for i in 0..g.len() {
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g[i];
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g[i] * g[i];
                    let mhat = self.m[i] / c1;
                    let vhat = self.v[i] / c2;
                    p[i] -= self.lr * mhat / (vhat.sqrt() + eps);
                }
                params.set_flat(&p);
            }
        }
    }
}
