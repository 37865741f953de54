use serde::{Deserialize, Serialize};

use super::tensor::Param;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// First-order optimizer over a fixed, ordered parameter list.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    /// Global gradient-norm cap; `None` disables clipping.
    pub clip: Option<f64>,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, clip: Option<f64>) -> Self {
        Self {
            kind,
            learning_rate,
            clip,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Applies the accumulated gradients, scaled by `scale`, then clears them.
    pub fn step(&mut self, mut params: Vec<&mut Param>, scale: f64) {
        if self.m.len() != params.len() {
            self.m = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
            self.v = self.m.clone();
        }
        let norm = params
            .iter()
            .flat_map(|p| p.grad.iter())
            .map(|g| (g * scale).powi(2))
            .sum::<f64>()
            .sqrt();
        let factor = match self.clip {
            Some(c) if norm > c => scale * c / norm,
            _ => scale,
        };
        self.step += 1;
        let t = self.step as i32;
        for (k, p) in params.iter_mut().enumerate() {
            match self.kind {
                OptimizerKind::Sgd => {
                    for (w, g) in p.value.iter_mut().zip(&p.grad) {
                        *w -= self.learning_rate * g * factor;
                    }
                }
                OptimizerKind::Adam => {
                    let (m, v) = (&mut self.m[k], &mut self.v[k]);
                    let c1 = 1.0 - BETA1.powi(t);
                    let c2 = 1.0 - BETA2.powi(t);
                    for i in 0..p.value.len() {
                        let g = p.grad[i] * factor;
                        m[i] = BETA1 * m[i] + (1.0 - BETA1) * g;
                        v[i] = BETA2 * v[i] + (1.0 - BETA2) * g * g;
                        p.value[i] -= self.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
                    }
                }
            }
            p.zero_grad();
        }
    }
}
