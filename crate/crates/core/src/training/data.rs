use ndarray::Array2;

use crate::dataset::{Normalization, Record};
use crate::diffcalc::Tensor;
use crate::{Error, Result};

/// One split held in memory in standardised units, laid out the way the models
/// consume it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainData {
    pub n_inputs: usize,
    pub n_tau: usize,
    pub n_t: usize,
    /// ps, shared by every example.
    pub input_t: Vec<f64>,
    /// `input_t / t_max`
    pub t_norm: Vec<f64>,
    pub normalization: Normalization,
    /// `[n, n_inputs, n_tau]`
    inputs: Vec<f64>,
    /// `[n, n_t, n_tau]`
    targets: Vec<f64>,
}

impl TrainData {
    pub fn from_records(records: &[Record], normalization: Normalization, t_max: f64) -> Result<Self> {
        let first = records.first().ok_or_else(|| Error::invalid("split", "contains no records"))?;
        if !(t_max.is_finite() && t_max > 0.0) {
            return Err(Error::invalid("t_max", format!("must be positive, got {t_max}")));
        }
        let (n_inputs, n_tau, n_t) = (first.n_inputs(), first.n_tau, first.n_t);
        let mut inputs = Vec::with_capacity(records.len() * n_inputs * n_tau);
        let mut targets = Vec::with_capacity(records.len() * n_t * n_tau);
        for (i, r) in records.iter().enumerate() {
            if (r.n_inputs(), r.n_tau, r.n_t) != (n_inputs, n_tau, n_t) || r.t_values != first.t_values {
                return Err(Error::format(format!("record {i}"), "shape or input delays differ from record 0"));
            }
            inputs.extend(r.inputs.iter().map(|&v| normalization.standardize(v as f64)));
            for j in 0..n_t {
                targets.extend((0..n_tau).map(|k| normalization.standardize(r.target_at(k, j) as f64)));
            }
        }
        let input_t: Vec<f64> = first.t_values.iter().map(|&t| t as f64).collect();
        Ok(Self {
            n_inputs,
            n_tau,
            n_t,
            t_norm: input_t.iter().map(|t| t / t_max).collect(),
            input_t,
            normalization,
            inputs,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len() / (self.n_t * self.n_tau)
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Standardised `(inputs [b, n_inputs, n_tau], targets [b, n_t, n_tau])`.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Tensor)> {
        let (a, b) = (self.n_inputs * self.n_tau, self.n_t * self.n_tau);
        let mut x = Vec::with_capacity(indices.len() * a);
        let mut y = Vec::with_capacity(indices.len() * b);
        for &i in indices {
            x.extend_from_slice(&self.inputs[i * a..(i + 1) * a]);
            y.extend_from_slice(&self.targets[i * b..(i + 1) * b]);
        }
        Ok((
            Tensor::new(x, &[indices.len(), self.n_inputs, self.n_tau])?,
            Tensor::new(y, &[indices.len(), self.n_t, self.n_tau])?,
        ))
    }

    /// Physical `[n_tau, n_t]` g² map of example `i`.
    pub fn target_g2(&self, i: usize) -> Array2<f64> {
        let b = self.n_t * self.n_tau;
        self.to_g2(&self.targets[i * b..(i + 1) * b])
    }

    /// Converts one standardised `[n_t, n_tau]` block to a physical `[n_tau, n_t]` map.
    pub fn to_g2(&self, block: &[f64]) -> Array2<f64> {
        Array2::from_shape_fn((self.n_tau, self.n_t), |(k, j)| self.normalization.to_g2(block[j * self.n_tau + k]))
    }
}
