use serde::{Deserialize, Serialize};

/// Which update rule drives the latent codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    GradientDescent,
    #[default]
    Adam,
}

/// Per-parameter first/second moment descent.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub step: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize, step: f64) -> Self {
        Adam {
            step,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        let lr = self.step;
        self.step_with(params, grad, lr);
    }

    pub fn step_with(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / b1t;
            let vh = self.v[i] / b2t;
            params[i] -= lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Optimizer state for one latent vector.
#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerState {
    GradientDescent,
    Adam(Adam),
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, n: usize, step: f64) -> Self {
        match kind {
            OptimizerKind::GradientDescent => OptimizerState::GradientDescent,
            OptimizerKind::Adam => OptimizerState::Adam(Adam::new(n, step)),
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        match self {
            OptimizerState::GradientDescent => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptimizerState::Adam(a) => a.step_with(params, grad, lr),
        }
    }
}
