use std::fmt;
use std::str::FromStr;

use crate::diffcalc::Parameter;
use crate::{Error, Result};

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &[Parameter]) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.tensor.len()]).collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Applies one update from the accumulated gradients. Parameters without a
    /// gradient are treated as having a zero gradient.
    pub fn update(&mut self, params: &[Parameter], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step.min(i32::MAX as u64) as i32);
        let c2 = 1.0 - self.beta2.powi(self.step.min(i32::MAX as u64) as i32);
        for ((p, m), v) in params.iter().zip(&mut self.m).zip(&mut self.v) {
            let g = p.tensor.grad_or_zeros();
            let mut w = p.tensor.data_mut();
            for i in 0..g.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                w[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
    }
}

/// Euclidean norm over all gradients.
pub fn grad_norm(params: &[Parameter]) -> f64 {
    params
        .iter()
        .filter_map(|p| p.tensor.grad())
        .map(|g| g.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

/// Rescales all gradients so their joint norm is at most `max_norm`. Returns the norm
/// before clipping.
pub fn clip_grad_norm(params: &[Parameter], max_norm: f64) -> f64 {
    let norm = grad_norm(params);
    if norm > max_norm && norm.is_finite() {
        let s = max_norm / norm;
        for p in params {
            if let Some(mut g) = p.tensor.grad() {
                g.iter_mut().for_each(|v| *v *= s);
                p.tensor.set_grad(Some(g));
            }
        }
    }
    norm
}

/// Learning-rate schedule over epochs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrSchedule {
    Constant,
    /// Half-cosine from the base rate, reaching `min_lr` one step past the last epoch.
    Cosine { min_lr: f64 },
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule::Cosine { min_lr: 0.0 }
    }
}

impl LrSchedule {
    pub fn rate(&self, base: f64, epoch: usize, max_epochs: usize) -> f64 {
        match *self {
            LrSchedule::Constant => base,
            LrSchedule::Cosine { min_lr } => {
                let frac = if max_epochs == 0 { 0.0 } else { epoch as f64 / max_epochs as f64 };
                min_lr + 0.5 * (base - min_lr) * (1.0 + (std::f64::consts::PI * frac.min(1.0)).cos())
            }
        }
    }
}

impl fmt::Display for LrSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LrSchedule::Constant => f.write_str("constant"),
            LrSchedule::Cosine { min_lr } => write!(f, "cosine:{min_lr}"),
        }
    }
}

impl FromStr for LrSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid("lr_schedule", format!("expected `constant`, `cosine` or `cosine:<min_lr>`, got `{s}`"));
        match s.trim() {
            "constant" => Ok(LrSchedule::Constant),
            "cosine" => Ok(LrSchedule::default()),
            other => {
                let min = other.strip_prefix("cosine:").ok_or_else(bad)?;
                let min_lr: f64 = min.parse().map_err(|_| bad())?;
                if !(min_lr.is_finite() && min_lr >= 0.0) {
                    return Err(bad());
                }
                Ok(LrSchedule::Cosine { min_lr })
            }
        }
    }
}
