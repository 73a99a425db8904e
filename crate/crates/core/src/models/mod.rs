//! The LSTM-ODE forecaster, the 1D ResNet baseline, and their checkpoints.
//!
//! Both models map `[batch, n_inputs, n_tau]` input curves to a `[batch, n_t, n_tau]`
//! map in the standardised units the training loop works in.

mod checkpoint;
mod config;
mod layers;
mod lstm_ode;
mod resnet;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_expecting, save_checkpoint, CheckpointMeta, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use config::{LstmOdeConfig, ModelConfig, ResNet1dConfig};
pub use layers::{Activation, AttentionPool, Linear, Lstm, LstmLayer, LstmState, Mlp};
pub use lstm_ode::LstmOde;
pub use resnet::{ResBlock, ResNet1d};

use crate::diffcalc::{Parameter, Tensor};
use crate::Result;

/// Either architecture. Cloning shares the parameter tensors.
#[derive(Debug, Clone)]
pub enum Model {
    LstmOde(LstmOde),
    ResNet1d(ResNet1d),
}

impl Model {
    /// Freshly initialised model; identical seeds give identical weights.
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        Ok(match config {
            ModelConfig::LstmOde(c) => Model::LstmOde(LstmOde::new(c.clone(), seed)?),
            ModelConfig::ResNet1d(c) => Model::ResNet1d(ResNet1d::new(c.clone(), seed)?),
        })
    }

    pub fn config(&self) -> ModelConfig {
        match self {
            Model::LstmOde(m) => ModelConfig::LstmOde(m.config.clone()),
            Model::ResNet1d(m) => ModelConfig::ResNet1d(m.config.clone()),
        }
    }

    pub fn params(&self) -> &[Parameter] {
        match self {
            Model::LstmOde(m) => m.params(),
            Model::ResNet1d(m) => m.params(),
        }
    }

    pub fn n_params(&self) -> usize {
        self.params().iter().map(|p| p.tensor.len()).sum()
    }

    /// `inputs: [batch, n_inputs, n_tau]`, `t_norm`: input delays divided by the
    /// forecast horizon `t_max`. Returns `[batch, n_t, n_tau]`.
    pub fn forward(&self, inputs: &Tensor, t_norm: &[f64]) -> Result<Tensor> {
        match self {
            Model::LstmOde(m) => m.forward(inputs, t_norm),
            Model::ResNet1d(m) => m.forward(inputs),
        }
    }

    /// Rounds every parameter to the nearest f32, the precision checkpoints store.
    pub fn round_params_to_f32(&self) {
        for p in self.params() {
            p.tensor.data_mut().iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }

    /// Copies parameter values from `other`, which must have the same architecture.
    pub fn copy_params_from(&self, other: &Model) {
        for (a, b) in self.params().iter().zip(other.params()) {
            a.tensor.data_mut().copy_from_slice(&b.tensor.data());
        }
    }
}
