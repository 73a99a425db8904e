//! Time-domain and Fourier-domain map losses.
//!
//! Tensors follow the model layout `[batch, n_t, n_tau]`; the `_g2` variants take
//! physical `[n_tau, n_t]` g² maps.

use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;

use crate::diffcalc::Tensor;
use crate::{Error, Result};

/// Which τ rows enter the Fourier loss.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum FourierRows {
    /// First, middle and last row.
    #[default]
    Default,
    All,
    Explicit(Vec<usize>),
}

impl FourierRows {
    pub fn resolve(&self, n_tau: usize) -> Result<Vec<usize>> {
        let rows = match self {
            FourierRows::Default => {
                let mut r = vec![0, n_tau / 2, n_tau.saturating_sub(1)];
                r.dedup();
                r
            }
            FourierRows::All => (0..n_tau).collect(),
            FourierRows::Explicit(r) => r.clone(),
        };
        if rows.is_empty() || n_tau == 0 {
            return Err(Error::invalid("fourier_rows", "no τ rows selected"));
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= n_tau) {
            return Err(Error::invalid("fourier_rows", format!("row {bad} out of range for n_tau = {n_tau}")));
        }
        Ok(rows)
    }
}

impl fmt::Display for FourierRows {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FourierRows::Default => f.write_str("default"),
            FourierRows::All => f.write_str("all"),
            FourierRows::Explicit(r) => {
                let s: Vec<String> = r.iter().map(usize::to_string).collect();
                f.write_str(&s.join(","))
            }
        }
    }
}

impl FromStr for FourierRows {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "default" => Ok(FourierRows::Default),
            "all" => Ok(FourierRows::All),
            list => list
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse()
                        .map_err(|_| Error::invalid("fourier_rows", format!("expected `default`, `all` or a list of indices, got `{s}`")))
                })
                .collect::<Result<Vec<_>>>()
                .map(FourierRows::Explicit),
        }
    }
}

/// `C[k, n] = cos(2π k n / n_t)`, row-major. Symmetric.
pub fn cosine_matrix(n_t: usize) -> Vec<f64> {
    let mut c = vec![0.0; n_t * n_t];
    for k in 0..n_t {
        for n in 0..n_t {
            // Reduce the phase first so large k·n keep full accuracy.
            c[k * n_t + n] = (std::f64::consts::TAU * ((k * n) % n_t) as f64 / n_t as f64).cos();
        }
    }
    c
}

/// Mean squared elementwise difference.
pub fn time_mse(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    pred.mse(target)
}

/// Fourier loss with a precomputed cosine matrix for one map size.
#[derive(Debug, Clone)]
pub struct FourierLoss {
    n_t: usize,
    n_tau: usize,
    rows: Vec<usize>,
    cos: Tensor,
}

impl FourierLoss {
    pub fn new(n_t: usize, n_tau: usize, rows: &FourierRows) -> Result<Self> {
        if n_t == 0 {
            return Err(Error::invalid("n_t", "must be positive"));
        }
        Ok(Self {
            n_t,
            n_tau,
            rows: rows.resolve(n_tau)?,
            cos: Tensor::new(cosine_matrix(n_t), &[n_t, n_t])?,
        })
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    /// Mean over batch, selected rows and frequencies of the squared difference of
    /// the cosine transforms along t.
    pub fn apply(&self, pred: &Tensor, target: &Tensor) -> Result<Tensor> {
        let s = pred.shape();
        if s != target.shape() || s.len() != 3 || s[1] != self.n_t || s[2] != self.n_tau {
            return Err(Error::Shape {
                op: "fourier_loss",
                lhs: s.to_vec(),
                rhs: target.shape().to_vec(),
            });
        }
        let b = s[0];
        // The transform is linear, so transform the difference once.
        let diff = pred.sub(target)?;
        let rows = self
            .rows
            .iter()
            .map(|&r| diff.select(2, r))
            .collect::<Result<Vec<_>>>()?;
        let picked = Tensor::stack(&rows, 1)?.reshape(&[b * self.rows.len(), self.n_t])?;
        Ok(picked.matmul(&self.cos)?.square().mean())
    }
}

/// One-shot Fourier loss on `[batch, n_t, n_tau]` tensors.
pub fn fourier_loss(pred: &Tensor, target: &Tensor, rows: &FourierRows) -> Result<Tensor> {
    let s = pred.shape();
    if s.len() != 3 {
        return Err(Error::Shape {
            op: "fourier_loss",
            lhs: s.to_vec(),
            rhs: target.shape().to_vec(),
        });
    }
    FourierLoss::new(s[1], s[2], rows)?.apply(pred, target)
}

fn check_maps(op: &'static str, pred: &ArrayView2<f64>, target: &ArrayView2<f64>) -> Result<()> {
    if pred.dim() != target.dim() || pred.is_empty() {
        return Err(Error::Shape {
            op,
            lhs: pred.shape().to_vec(),
            rhs: target.shape().to_vec(),
        });
    }
    Ok(())
}

/// Time-domain MSE between physical `[n_tau, n_t]` maps.
pub fn time_mse_g2(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<f64> {
    check_maps("time_mse", &pred, &target)?;
    Ok(pred.iter().zip(target.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / pred.len() as f64)
}

/// Fourier loss between physical `[n_tau, n_t]` maps: each selected row is turned
/// into `1 - g²` and cosine-transformed along t.
pub fn fourier_loss_g2(pred: ArrayView2<f64>, target: ArrayView2<f64>, rows: &[usize], cos: &[f64]) -> Result<f64> {
    check_maps("fourier_loss", &pred, &target)?;
    let (n_tau, n_t) = pred.dim();
    if cos.len() != n_t * n_t {
        return Err(Error::invalid("cosine matrix", format!("need {n_t}², got {} entries", cos.len())));
    }
    if rows.is_empty() || rows.iter().any(|&r| r >= n_tau) {
        return Err(Error::invalid("fourier_rows", format!("{rows:?} for n_tau = {n_tau}")));
    }
    let mut acc = 0.0;
    for &r in rows {
        let (p, t) = (pred.row(r), target.row(r));
        for k in 0..n_t {
            let c = &cos[k * n_t..(k + 1) * n_t];
            let fp: f64 = p.iter().zip(c).map(|(v, c)| (1.0 - v) * c).sum();
            let ft: f64 = t.iter().zip(c).map(|(v, c)| (1.0 - v) * c).sum();
            acc += (fp - ft) * (fp - ft);
        }
    }
    Ok(acc / (rows.len() * n_t) as f64)
}
