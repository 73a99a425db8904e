use ndarray::Array2;

use super::data::TrainData;
use super::loss::{cosine_matrix, fourier_loss_g2, time_mse_g2, FourierRows};
use crate::diffcalc::{no_grad, Tensor};
use crate::models::Model;
use crate::{Error, Result};

/// Anything that maps standardised input curves to a standardised map.
pub trait Predictor {
    /// `inputs: [b, n_inputs, n_tau]` → `[b, n_t, n_tau]`.
    fn predict(&self, inputs: &Tensor, t_norm: &[f64]) -> Result<Tensor>;
}

impl Predictor for Model {
    fn predict(&self, inputs: &Tensor, t_norm: &[f64]) -> Result<Tensor> {
        no_grad(|| self.forward(inputs, t_norm))
    }
}

/// Repeats the input curve taken at the largest delay for every output delay.
pub fn persistence_baseline(inputs: &Tensor, t_norm: &[f64], n_t: usize) -> Result<Tensor> {
    let s = inputs.shape();
    if s.len() != 3 || s[1] == 0 || t_norm.len() != s[1] {
        return Err(Error::invalid(
            "persistence inputs",
            format!("need at least one curve with a delay each, got shape {s:?} and {} delays", t_norm.len()),
        ));
    }
    let last = (0..s[1]).fold(0, |best, i| if t_norm[i] >= t_norm[best] { i } else { best });
    let (b, n_tau) = (s[0], s[2]);
    let x = inputs.data();
    let mut out = Vec::with_capacity(b * n_t * n_tau);
    for e in 0..b {
        let curve = &x[(e * s[1] + last) * n_tau..(e * s[1] + last + 1) * n_tau];
        for _ in 0..n_t {
            out.extend_from_slice(curve);
        }
    }
    Tensor::new(out, &[b, n_t, n_tau])
}

#[derive(Debug, Clone, Copy)]
pub struct Persistence {
    pub n_t: usize,
}

impl Predictor for Persistence {
    fn predict(&self, inputs: &Tensor, t_norm: &[f64]) -> Result<Tensor> {
        persistence_baseline(inputs, t_norm, self.n_t)
    }
}

/// Per-example errors in physical g² units.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mse: Vec<f64>,
    pub fourier: Vec<f64>,
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub mean_fourier: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl EvalReport {
    pub fn from_errors(mse: Vec<f64>, fourier: Vec<f64>) -> Result<Self> {
        if mse.is_empty() {
            return Err(Error::invalid("test set", "contains no examples"));
        }
        let mut sorted = mse.clone();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            mean: mse.iter().sum::<f64>() / mse.len() as f64,
            median: quantile(&sorted, 0.5),
            p95: quantile(&sorted, 0.95),
            mean_fourier: fourier.iter().sum::<f64>() / fourier.len().max(1) as f64,
            mse,
            fourier,
        })
    }
}

/// Physical-unit predictions for the examples in `indices`.
pub fn predict_g2(p: &dyn Predictor, data: &TrainData, indices: &[usize]) -> Result<Vec<Array2<f64>>> {
    let (x, _) = data.batch(indices)?;
    let y = p.predict(&x, &data.t_norm)?;
    let expect = [indices.len(), data.n_t, data.n_tau];
    if y.shape() != expect {
        return Err(Error::Shape {
            op: "predict",
            lhs: y.shape().to_vec(),
            rhs: expect.to_vec(),
        });
    }
    let block = data.n_t * data.n_tau;
    let values = y.data();
    Ok((0..indices.len()).map(|e| data.to_g2(&values[e * block..(e + 1) * block])).collect())
}

/// Scores `p` on every example of `data`, `batch` examples at a time.
pub fn evaluate(p: &dyn Predictor, data: &TrainData, rows: &FourierRows, batch: usize) -> Result<EvalReport> {
    let rows = rows.resolve(data.n_tau)?;
    let cos = cosine_matrix(data.n_t);
    let (mut mse, mut fourier) = (Vec::with_capacity(data.len()), Vec::with_capacity(data.len()));
    let all: Vec<usize> = (0..data.len()).collect();
    for chunk in all.chunks(batch.max(1)) {
        for (pred, &i) in predict_g2(p, data, chunk)?.iter().zip(chunk) {
            let truth = data.target_g2(i);
            mse.push(time_mse_g2(pred.view(), truth.view())?);
            fourier.push(fourier_loss_g2(pred.view(), truth.view(), &rows, &cos)?);
        }
    }
    EvalReport::from_errors(mse, fourier)
}
