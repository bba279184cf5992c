use serde::{Deserialize, Serialize};

use super::NetParams;
use crate::error::{Error, Result};

/// Plain gradient descent, `θ' = θ − lr · g`.
pub fn sgd_step(params: &NetParams, grads: &NetParams, learning_rate: f64) -> Result<NetParams> {
    if !(learning_rate >= 0.0) {
        return Err(Error::invalid("learning rate must be non-negative"));
    }
    params.check_same_shape(grads)?;
    let mut out = params.clone();
    if learning_rate == 0.0 {
        return Ok(out);
    }
    for (t, g) in out.tensors.iter_mut().zip(&grads.tensors) {
        for (w, d) in t.data.iter_mut().zip(&g.data) {
            *w -= learning_rate * d;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Momentum { beta: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Stateful optimizer over one parameter set.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    first: Option<NetParams>,
    second: Option<NetParams>,
    t: i32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        Self { kind, first: None, second: None, t: 0 }
    }

    pub fn step(&mut self, params: &mut NetParams, grads: &NetParams, lr: f64) -> Result<()> {
        if !(lr >= 0.0) {
            return Err(Error::invalid("learning rate must be non-negative"));
        }
        params.check_same_shape(grads)?;
        if lr == 0.0 {
            return Ok(());
        }
        match self.kind {
            OptimizerKind::Sgd => *params = sgd_step(params, grads, lr)?,
            OptimizerKind::Momentum { beta } => {
                let vel = self.first.get_or_insert_with(|| grads.zeros_like());
                for ((p, v), g) in params.tensors.iter_mut().zip(&mut vel.tensors).zip(&grads.tensors) {
                    for ((w, m), d) in p.data.iter_mut().zip(&mut v.data).zip(&g.data) {
                        *m = beta * *m + d;
                        *w -= lr * *m;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                self.t += 1;
                let m1 = self.first.get_or_insert_with(|| grads.zeros_like());
                let m2 = self.second.get_or_insert_with(|| grads.zeros_like());
                let c1 = 1.0 - beta1.powi(self.t);
                let c2 = 1.0 - beta2.powi(self.t);
                for (((p, a), b), g) in
                    params.tensors.iter_mut().zip(&mut m1.tensors).zip(&mut m2.tensors).zip(&grads.tensors)
                {
                    for (((w, ma), mb), d) in p.data.iter_mut().zip(&mut a.data).zip(&mut b.data).zip(&g.data) {
                        *ma = beta1 * *ma + (1.0 - beta1) * d;
                        *mb = beta2 * *mb + (1.0 - beta2) * d * d;
                        *w -= lr * (*ma / c1) / ((*mb / c2).sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
