//! Adam with bias correction and optional global-norm gradient clipping,
//! operating on a fixed set of parameters inside a [`ParameterStore`].

use diffcore::{Gradients, ParamId, ParameterStore, Result};
use std::collections::HashMap;

pub struct Adam {
    ids: Vec<ParamId>,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    max_norm: Option<f64>,
    t: u64,
    moments: HashMap<ParamId, (Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(ids: Vec<ParamId>, lr: f64) -> Self {
        Self {
            ids,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_norm: None,
            t: 0,
            moments: HashMap::new(),
        }
    }

    pub fn with_max_norm(mut self, max_norm: Option<f64>) -> Self {
        self.max_norm = max_norm;
        self
    }

    pub fn ids(&self) -> &[ParamId] {
        &self.ids
    }

    /// One optimizer step. Parameters without a gradient entry are treated
    /// as having a zero gradient (their moments still decay).
    pub fn step(&mut self, store: &mut ParameterStore, grads: &Gradients) -> Result<()> {
        self.t += 1;
        let scale = match self.max_norm {
            Some(max) => {
                let mut sq = 0.0;
                for id in &self.ids {
                    if let Some(g) = grads.get(*id) {
                        sq += g.iter().map(|v| v * v).sum::<f64>();
                    }
                }
                let norm = sq.sqrt();
                if norm > max {
                    max / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for id in &self.ids {
            let n = store.values(*id).len();
            let (m, v) = self
                .moments
                .entry(*id)
                .or_insert_with(|| (vec![0.0; n], vec![0.0; n]));
            let zero;
            let g: &[f64] = match grads.get(*id) {
                Some(g) => g,
                None => {
                    zero = vec![0.0; n];
                    &zero
                }
            };
            let mut new = store.values(*id).to_vec();
            for i in 0..n {
                let gi = g[i] * scale;
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                new[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            store.set_values(*id, &new)?;
        }
        Ok(())
    }
}
