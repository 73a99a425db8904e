//! Architecture hyperparameters and their key/value text form.

use std::collections::BTreeMap;
use std::str::FromStr;

use super::layers::Activation;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LstmOdeConfig {
    pub n_tau: usize,
    pub n_inputs: usize,
    pub n_t: usize,
    pub enc_layers: usize,
    pub enc_hidden: usize,
    pub latent: usize,
    /// Number of linear layers in the vector field.
    pub field_depth: usize,
    pub field_width: usize,
    pub field_activation: Activation,
    /// Feed the integration variable s to the field as an extra input.
    pub time_dependent: bool,
    pub dec_layers: usize,
    pub dec_hidden: usize,
    /// RK4 steps between consecutive output delays.
    pub substeps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResNet1dConfig {
    pub n_tau: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub blocks: usize,
    pub kernel: usize,
    /// Inner width of each residual branch relative to its output channels.
    pub expansion: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelConfig {
    LstmOde(LstmOdeConfig),
    ResNet1d(ResNet1dConfig),
}

pub(crate) fn check_positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::invalid(name, "must be positive"));
    }
    Ok(())
}

impl ModelConfig {
    /// Name used on the command line and in checkpoints.
    pub fn kind(&self) -> &'static str {
        match self {
            ModelConfig::LstmOde(_) => "lstm-ode",
            ModelConfig::ResNet1d(_) => "resnet1d",
        }
    }

    pub fn n_tau(&self) -> usize {
        match self {
            ModelConfig::LstmOde(c) => c.n_tau,
            ModelConfig::ResNet1d(c) => c.n_tau,
        }
    }

    pub fn n_t(&self) -> usize {
        match self {
            ModelConfig::LstmOde(c) => c.n_t,
            ModelConfig::ResNet1d(c) => c.out_channels,
        }
    }

    pub fn n_inputs(&self) -> usize {
        match self {
            ModelConfig::LstmOde(c) => c.n_inputs,
            ModelConfig::ResNet1d(c) => c.in_channels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelConfig::LstmOde(c) => c.validate(),
            ModelConfig::ResNet1d(c) => c.validate(),
        }
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut out = vec![("model".to_string(), self.kind().to_string())];
        let mut put = |k: &str, v: String| out.push((k.to_string(), v));
        match self {
            ModelConfig::LstmOde(c) => {
                put("n_tau", c.n_tau.to_string());
                put("n_inputs", c.n_inputs.to_string());
                put("n_t", c.n_t.to_string());
                put("enc_layers", c.enc_layers.to_string());
                put("enc_hidden", c.enc_hidden.to_string());
                put("latent", c.latent.to_string());
                put("field_depth", c.field_depth.to_string());
                put("field_width", c.field_width.to_string());
                put("field_activation", c.field_activation.name().to_string());
                put("time_dependent", c.time_dependent.to_string());
                put("dec_layers", c.dec_layers.to_string());
                put("dec_hidden", c.dec_hidden.to_string());
                put("substeps", c.substeps.to_string());
            }
            ModelConfig::ResNet1d(c) => {
                put("n_tau", c.n_tau.to_string());
                put("in_channels", c.in_channels.to_string());
                put("out_channels", c.out_channels.to_string());
                put("blocks", c.blocks.to_string());
                put("kernel", c.kernel.to_string());
                put("expansion", c.expansion.to_string());
            }
        }
        out
    }

    pub fn from_pairs(map: &BTreeMap<String, String>) -> Result<Self> {
        fn get<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T> {
            let raw = map
                .get(key)
                .ok_or_else(|| Error::format("model config", format!("missing `{key}`")))?;
            raw.parse()
                .map_err(|_| Error::format("model config", format!("bad value `{raw}` for `{key}`")))
        }
        let kind: String = get(map, "model")?;
        let config = match kind.as_str() {
            "lstm-ode" => ModelConfig::LstmOde(LstmOdeConfig {
                n_tau: get(map, "n_tau")?,
                n_inputs: get(map, "n_inputs")?,
                n_t: get(map, "n_t")?,
                enc_layers: get(map, "enc_layers")?,
                enc_hidden: get(map, "enc_hidden")?,
                latent: get(map, "latent")?,
                field_depth: get(map, "field_depth")?,
                field_width: get(map, "field_width")?,
                field_activation: Activation::parse(&get::<String>(map, "field_activation")?)?,
                time_dependent: get(map, "time_dependent")?,
                dec_layers: get(map, "dec_layers")?,
                dec_hidden: get(map, "dec_hidden")?,
                substeps: get(map, "substeps")?,
            }),
            "resnet1d" => ModelConfig::ResNet1d(ResNet1dConfig {
                n_tau: get(map, "n_tau")?,
                in_channels: get(map, "in_channels")?,
                out_channels: get(map, "out_channels")?,
                blocks: get(map, "blocks")?,
                kernel: get(map, "kernel")?,
                expansion: get(map, "expansion")?,
            }),
            other => return Err(Error::format("model config", format!("unknown model `{other}`"))),
        };
        config.validate()?;
        Ok(config)
    }
}
