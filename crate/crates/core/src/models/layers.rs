//! Building blocks shared by the models.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::diffcalc::{Parameter, Tensor};
use crate::{Error, Result};

/// Seeded parameter initialiser.
pub(crate) struct Init {
    pub rng: ChaCha8Rng,
}

impl Init {
    /// `U(-1/√fan_in, 1/√fan_in)`.
    pub fn fan_in(&mut self, shape: &[usize], fan_in: usize) -> Tensor {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.rng.gen_range(-bound..bound)).collect();
        Tensor::param(data, shape).expect("shape matches data")
    }

    pub fn zeros(&mut self, shape: &[usize]) -> Tensor {
        Tensor::param(vec![0.0; shape.iter().product()], shape).expect("shape matches data")
    }
}

pub(crate) fn register(out: &mut Vec<Parameter>, name: String, tensor: &Tensor) {
    out.push(Parameter {
        name,
        tensor: tensor.clone(),
    });
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    pub fn apply(self, x: &Tensor) -> Tensor {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.relu(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            _ => Err(Error::invalid("activation", format!("unknown activation `{s}`"))),
        }
    }
}

/// `y = x·W + b`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Tensor,
    pub b: Tensor,
}

impl Linear {
    pub(crate) fn new(init: &mut Init, d_in: usize, d_out: usize) -> Self {
        Self {
            w: init.fan_in(&[d_in, d_out], d_in),
            b: init.zeros(&[d_out]),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.affine(&self.w, &self.b)
    }

    pub(crate) fn collect(&self, prefix: &str, out: &mut Vec<Parameter>) {
        register(out, format!("{prefix}.w"), &self.w);
        register(out, format!("{prefix}.b"), &self.b);
    }
}

/// Plain multilayer perceptron; the activation sits between layers, not after the last.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

impl Mlp {
    /// `dims = [d_in, hidden..., d_out]`.
    pub(crate) fn new(init: &mut Init, dims: &[usize], activation: Activation) -> Self {
        let layers = dims.windows(2).map(|w| Linear::new(init, w[0], w[1])).collect();
        Self { layers, activation }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h)?;
            if i + 1 < self.layers.len() {
                h = self.activation.apply(&h);
            }
        }
        Ok(h)
    }

    pub(crate) fn collect(&self, prefix: &str, out: &mut Vec<Parameter>) {
        for (i, l) in self.layers.iter().enumerate() {
            l.collect(&format!("{prefix}.layer{i}"), out);
        }
    }
}

/// One LSTM layer. Gates are packed as input, forget, candidate, output.
#[derive(Debug, Clone)]
pub struct LstmLayer {
    /// `[d_in, 4H]`
    pub w_ih: Tensor,
    /// `[H, 4H]`
    pub w_hh: Tensor,
    /// `[4H]`
    pub b: Tensor,
}

/// Hidden and cell state of one layer, each `[batch, H]`.
#[derive(Debug, Clone)]
pub struct LstmState {
    pub h: Tensor,
    pub c: Tensor,
}

#[derive(Debug, Clone)]
pub struct Lstm {
    pub layers: Vec<LstmLayer>,
    pub hidden: usize,
}

impl Lstm {
    pub(crate) fn new(init: &mut Init, d_in: usize, hidden: usize, n_layers: usize) -> Self {
        let layers = (0..n_layers)
            .map(|l| {
                let d = if l == 0 { d_in } else { hidden };
                let b = init.zeros(&[4 * hidden]);
                // Forget-gate bias starts at +1.
                b.data_mut()[hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
                LstmLayer {
                    w_ih: init.fan_in(&[d, 4 * hidden], d),
                    w_hh: init.fan_in(&[hidden, 4 * hidden], hidden),
                    b,
                }
            })
            .collect();
        Self { layers, hidden }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].w_ih.shape()[0]
    }

    /// Runs the stack over `seq` (each step `[batch, d_in]`), optionally starting from
    /// `init` states (one per layer). Returns the top-layer outputs and the final
    /// state of every layer.
    pub fn forward(&self, seq: &[Tensor], init: Option<&[LstmState]>) -> Result<(Vec<Tensor>, Vec<LstmState>)> {
        let first = seq.first().ok_or_else(|| Error::invalid("lstm", "empty input sequence"))?;
        let batch = first.shape()[0];
        let h = self.hidden;
        if let Some(states) = init {
            if states.len() != self.layers.len() {
                return Err(Error::invalid(
                    "lstm",
                    format!("{} initial states for {} layers", states.len(), self.layers.len()),
                ));
            }
        }
        let mut current: Vec<Tensor> = seq.to_vec();
        let mut finals = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let (mut hs, mut cs) = match init {
                Some(states) => (states[l].h.clone(), states[l].c.clone()),
                None => (Tensor::zeros(&[batch, h]), Tensor::zeros(&[batch, h])),
            };
            let mut outputs = Vec::with_capacity(current.len());
            for x in &current {
                let gates = x.affine(&layer.w_ih, &layer.b)?.add(&hs.matmul(&layer.w_hh)?)?;
                let hc = gates.lstm_cell(&cs)?;
                hs = hc.slice(1, 0, h)?;
                cs = hc.slice(1, h, 2 * h)?;
                outputs.push(hs.clone());
            }
            finals.push(LstmState { h: hs, c: cs });
            current = outputs;
        }
        Ok((current, finals))
    }

    /// Convenience wrapper for `[batch, n_seq, d_in]` input; returns `[batch, n_seq, H]`.
    pub fn forward_tensor(&self, x: &Tensor, init: Option<&[LstmState]>) -> Result<(Tensor, Vec<LstmState>)> {
        let s = x.shape();
        if s.len() != 3 || s[2] != self.input_width() {
            return Err(Error::Shape {
                op: "lstm",
                lhs: s.to_vec(),
                rhs: vec![0, 0, self.input_width()],
            });
        }
        let seq = (0..s[1]).map(|i| x.select(1, i)).collect::<Result<Vec<_>>>()?;
        let (out, states) = self.forward(&seq, init)?;
        Ok((Tensor::stack(&out, 1)?, states))
    }

    pub(crate) fn collect(&self, prefix: &str, out: &mut Vec<Parameter>) {
        for (i, l) in self.layers.iter().enumerate() {
            register(out, format!("{prefix}.layer{i}.w_ih"), &l.w_ih);
            register(out, format!("{prefix}.layer{i}.w_hh"), &l.w_hh);
            register(out, format!("{prefix}.layer{i}.b"), &l.b);
        }
    }
}

/// Additive attention with a learned global query, followed by a linear map.
#[derive(Debug, Clone)]
pub struct AttentionPool {
    pub w: Tensor,
    pub b: Tensor,
    /// `[A, 1]`
    pub v: Tensor,
    pub out: Linear,
}

impl AttentionPool {
    pub(crate) fn new(init: &mut Init, hidden: usize, latent: usize) -> Self {
        Self {
            w: init.fan_in(&[hidden, hidden], hidden),
            b: init.zeros(&[hidden]),
            v: init.fan_in(&[hidden, 1], hidden),
            out: Linear::new(init, hidden, latent),
        }
    }

    /// Attention weights `[batch, n]` over the sequence.
    pub fn weights(&self, seq: &[Tensor]) -> Result<Tensor> {
        if seq.is_empty() {
            return Err(Error::invalid("attention", "empty sequence"));
        }
        let scores = seq
            .iter()
            .map(|o| o.affine(&self.w, &self.b)?.tanh().matmul(&self.v))
            .collect::<Result<Vec<_>>>()?;
        Tensor::concat(&scores, 1)?.softmax(1)
    }

    /// Pools `seq` (each `[batch, H]`) into `[batch, z]`.
    pub fn forward(&self, seq: &[Tensor]) -> Result<Tensor> {
        let w = self.weights(seq)?;
        let mut pooled: Option<Tensor> = None;
        for (i, o) in seq.iter().enumerate() {
            let term = w.slice(1, i, i + 1)?.mul(o)?;
            pooled = Some(match pooled {
                None => term,
                Some(p) => p.add(&term)?,
            });
        }
        self.out.forward(&pooled.expect("non-empty sequence"))
    }

    pub(crate) fn collect(&self, prefix: &str, out: &mut Vec<Parameter>) {
        register(out, format!("{prefix}.w"), &self.w);
        register(out, format!("{prefix}.b"), &self.b);
        register(out, format!("{prefix}.v"), &self.v);
        self.out.collect(&format!("{prefix}.out"), out);
    }
}
