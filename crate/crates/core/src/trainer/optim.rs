use super::config::Optimizer;
use crate::error::{Error, Result};
use crate::models::ModelParams;

/// Moment estimates for every parameter, in canonical parameter order.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(optimizer: Optimizer, learning_rate: f64, params: &ModelParams) -> Self {
        let mut m = Vec::new();
        params.visit(&mut |_, t| m.push(vec![0.0; t.len()]));
        let v = if matches!(optimizer, Optimizer::Adam { .. }) {
            m.clone()
        } else {
            Vec::new()
        };
        Self {
            optimizer,
            learning_rate,
            step: 0,
            m,
            v,
        }
    }

    /// Applies one update; `grads` follows the canonical parameter order.
    pub fn apply(&mut self, params: &mut ModelParams, grads: &[Vec<f64>]) -> Result<()> {
        if grads.len() != self.m.len() {
            return Err(Error::invalid(format!(
                "{} gradients for {} parameters",
                grads.len(),
                self.m.len()
            )));
        }
        self.step += 1;
        let lr = self.learning_rate;
        let mut i = 0;
        let mut bad = None;
        match self.optimizer {
            Optimizer::Sgd => params.visit_mut(&mut |name, t| {
                let g = &grads[i];
                i += 1;
                if g.len() != t.len() {
                    bad.get_or_insert(name);
                    return;
                }
                for (w, g) in t.data_mut().iter_mut().zip(g) {
                    *w -= lr * g;
                }
            }),
            Optimizer::Adam { beta1, beta2, epsilon } => {
                let c1 = 1.0 - beta1.powi(self.step as i32);
                let c2 = 1.0 - beta2.powi(self.step as i32);
                let (ms, vs) = (&mut self.m, &mut self.v);
                params.visit_mut(&mut |name, t| {
                    let (g, m, v) = (&grads[i], &mut ms[i], &mut vs[i]);
                    i += 1;
                    if g.len() != t.len() {
                        bad.get_or_insert(name);
                        return;
                    }
                    for (((w, g), m), v) in t.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                        *w -= lr * (*m / c1) / ((*v / c2).sqrt() + epsilon);
                    }
                });
            }
        }
        match bad {
            Some(name) => Err(Error::invalid(format!("gradient length mismatch for {name}"))),
            None => Ok(()),
        }
    }
}
