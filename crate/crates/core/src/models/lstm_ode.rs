//! Latent ODE forecaster: LSTM encoder + attention → h(0) → RK4 through an MLP
//! vector field → LSTM decoder → per-step projection to a τ curve.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{check_positive, LstmOdeConfig};
use super::layers::{Activation, AttentionPool, Init, Linear, Lstm, Mlp};
use crate::diffcalc::{ode_trajectory, Parameter, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct LstmOde {
    pub config: LstmOdeConfig,
    pub encoder: Lstm,
    pub attention: AttentionPool,
    pub field: Mlp,
    pub decoder: Lstm,
    pub projection: Linear,
    params: Vec<Parameter>,
}

impl LstmOdeConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_tau", self.n_tau),
            ("n_inputs", self.n_inputs),
            ("n_t", self.n_t),
            ("enc_layers", self.enc_layers),
            ("enc_hidden", self.enc_hidden),
            ("latent", self.latent),
            ("field_depth", self.field_depth),
            ("field_width", self.field_width),
            ("dec_layers", self.dec_layers),
            ("dec_hidden", self.dec_hidden),
            ("substeps", self.substeps),
        ] {
            check_positive(name, v)?;
        }
        if self.n_t < 2 {
            return Err(Error::invalid("n_t", "need at least 2 output steps"));
        }
        if self.dec_hidden != self.enc_hidden || self.dec_layers != self.enc_layers {
            return Err(Error::invalid(
                "decoder",
                format!(
                    "decoder ({} x {}) must match encoder ({} x {}) to take over its states",
                    self.dec_layers, self.dec_hidden, self.enc_layers, self.enc_hidden
                ),
            ));
        }
        Ok(())
    }
}

impl LstmOde {
    pub fn new(config: LstmOdeConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut init = Init {
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let encoder = Lstm::new(&mut init, config.n_tau + 1, config.enc_hidden, config.enc_layers);
        let attention = AttentionPool::new(&mut init, config.enc_hidden, config.latent);
        let field_in = config.latent + usize::from(config.time_dependent);
        let mut dims = vec![field_in];
        dims.extend(std::iter::repeat(config.field_width).take(config.field_depth - 1));
        dims.push(config.latent);
        let field = Mlp::new(&mut init, &dims, config.field_activation);
        let decoder = Lstm::new(&mut init, config.latent, config.dec_hidden, config.dec_layers);
        let projection = Linear::new(&mut init, config.dec_hidden, config.n_tau);
        let mut params = Vec::new();
        encoder.collect("encoder", &mut params);
        attention.collect("attention", &mut params);
        field.collect("field", &mut params);
        decoder.collect("decoder", &mut params);
        projection.collect("projection", &mut params);
        Ok(Self {
            config,
            encoder,
            attention,
            field,
            decoder,
            projection,
            params,
        })
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    /// Normalised integration grid `s_j = j / (n_t - 1)`.
    pub fn s_grid(&self) -> Vec<f64> {
        let n = self.config.n_t;
        (0..n).map(|j| j as f64 / (n - 1) as f64).collect()
    }

    fn check_inputs(&self, inputs: &Tensor, t_norm: &[f64]) -> Result<usize> {
        let s = inputs.shape();
        let c = &self.config;
        if s.len() != 3 || s[1] != c.n_inputs || s[2] != c.n_tau {
            return Err(Error::Shape {
                op: "lstm_ode",
                lhs: s.to_vec(),
                rhs: vec![s.first().copied().unwrap_or(0), c.n_inputs, c.n_tau],
            });
        }
        if t_norm.len() != c.n_inputs {
            return Err(Error::invalid(
                "input_t",
                format!("expected {} delays, got {}", c.n_inputs, t_norm.len()),
            ));
        }
        if t_norm.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("input_t", "input delays must be strictly increasing"));
        }
        Ok(s[0])
    }

    /// Latent initial state `[batch, z]` and the encoder's final states.
    pub fn encode(&self, inputs: &Tensor, t_norm: &[f64]) -> Result<(Tensor, Vec<super::LstmState>)> {
        let batch = self.check_inputs(inputs, t_norm)?;
        let seq = t_norm
            .iter()
            .enumerate()
            .map(|(i, &t)| Tensor::concat(&[inputs.select(1, i)?, Tensor::full(&[batch, 1], t)], 1))
            .collect::<Result<Vec<_>>>()?;
        let (outputs, states) = self.encoder.forward(&seq, None)?;
        Ok((self.attention.forward(&outputs)?, states))
    }

    /// Latent trajectory over the normalised delay grid, one `[batch, z]` state per point.
    pub fn trajectory(&self, h0: &Tensor) -> Result<Vec<Tensor>> {
        let batch = h0.shape()[0];
        let field = |h: &Tensor, s: f64| {
            if self.config.time_dependent {
                self.field.forward(&Tensor::concat(&[h.clone(), Tensor::full(&[batch, 1], s)], 1)?)
            } else {
                self.field.forward(h)
            }
        };
        ode_trajectory(field, h0, &self.s_grid(), self.config.substeps)
    }

    /// `inputs: [batch, n_inputs, n_tau]` at normalised delays `t_norm`; returns
    /// `[batch, n_t, n_tau]`.
    pub fn forward(&self, inputs: &Tensor, t_norm: &[f64]) -> Result<Tensor> {
        let (h0, states) = self.encode(inputs, t_norm)?;
        let traj = self.trajectory(&h0)?;
        let (decoded, _) = self.decoder.forward(&traj, Some(&states))?;
        let rows = decoded
            .iter()
            .map(|d| self.projection.forward(d))
            .collect::<Result<Vec<_>>>()?;
        Tensor::stack(&rows, 1)
    }
}

impl Default for LstmOdeConfig {
    fn default() -> Self {
        Self::new(128, 200)
    }
}

impl LstmOdeConfig {
    /// Default architecture for the given map size.
    pub fn new(n_tau: usize, n_t: usize) -> Self {
        Self {
            n_tau,
            n_inputs: 10,
            n_t,
            enc_layers: 3,
            enc_hidden: 128,
            latent: 128,
            field_depth: 3,
            field_width: 256,
            field_activation: Activation::Tanh,
            time_dependent: false,
            dec_layers: 3,
            dec_hidden: 128,
            substeps: 1,
        }
    }

    /// Small configuration for gradient checks and smoke runs.
    pub fn tiny() -> Self {
        Self {
            enc_hidden: 8,
            latent: 8,
            field_width: 16,
            dec_hidden: 8,
            ..Self::new(16, 10)
        }
    }
}
