//! AdamW with decoupled weight decay and a cosine learning-rate schedule.

use numcore::Tensor;

use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// `peak * (1 + cos(pi * t / total)) / 2`, annealed to zero without restarts.
pub fn cosine_schedule(t: usize, total: usize, peak: f64) -> f64 {
    if total == 0 {
        return peak;
    }
    let frac = t.min(total) as f64 / total as f64;
    peak * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
}

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamW {
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
    pub t: u64,
}

impl AdamW {
    pub fn new(params: &[Tensor<f32>]) -> Self {
        Self {
            m: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            t: 0,
        }
    }

    /// One update with per-tensor learning rate `lr[i]` and decay `wd[i]`:
    /// `theta -= lr * m_hat / (sqrt(v_hat) + eps) + wd * theta`.
    pub fn step(
        &mut self,
        params: &mut [Tensor<f32>],
        grads: &[Tensor<f32>],
        lr: &[f64],
        wd: &[f64],
    ) -> Result<()> {
        let n = params.len();
        if grads.len() != n || lr.len() != n || wd.len() != n || self.m.len() != n {
            return Err(Error::InvalidInput(format!(
                "optimizer got {} params, {} grads, {} rates, {} decays for {} moments",
                n,
                grads.len(),
                lr.len(),
                wd.len(),
                self.m.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::Numeric(numcore::Error::ShapeMismatch {
                    op: "adamw",
                    detail: format!("param {:?} vs grad {:?}", p.shape(), g.shape()),
                }));
            }
        }
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t as i32);
        let bc2 = 1.0 - BETA2.powi(self.t as i32);
        for i in 0..n {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (((th, &g), mi), vi) in params[i]
                .data_mut()
                .iter_mut()
                .zip(grads[i].data())
                .zip(m)
                .zip(v)
            {
                let g = g as f64;
                let mn = BETA1 * *mi as f64 + (1.0 - BETA1) * g;
                let vn = BETA2 * *vi as f64 + (1.0 - BETA2) * g * g;
                *mi = mn as f32;
                *vi = vn as f32;
                let step = lr[i] * (mn / bc1) / ((vn / bc2).sqrt() + EPS);
                let x = *th as f64;
                *th = (x - step - wd[i] * x) as f32;
            }
        }
        Ok(())
    }
}

/// Learning rate of each layer group for discriminative fine-tuning: group
/// `i` of `n` gets `base * gamma^(n - 1 - i)`, so the output group trains at
/// `base` and lower groups progressively slower.
pub fn group_learning_rates(n_groups: usize, base: f64, gamma: Option<f64>) -> Vec<f64> {
    let g = gamma.unwrap_or(1.0);
    (0..n_groups)
        .map(|i| base * g.powi((n_groups - 1 - i) as i32))
        .collect()
}
