//! 1D ResNet baseline: input delays are channels, τ is the convolution axis.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{check_positive, ResNet1dConfig};
use super::layers::{register, Init};
use crate::diffcalc::{Parameter, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct ResBlock {
    pub conv1_w: Tensor,
    pub conv1_b: Tensor,
    pub conv2_w: Tensor,
    pub conv2_b: Tensor,
    /// 1×1 projection when the channel count changes.
    pub skip: Option<(Tensor, Tensor)>,
}

impl ResBlock {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let branch = x
            .conv1d(&self.conv1_w, Some(&self.conv1_b))?
            .relu()
            .conv1d(&self.conv2_w, Some(&self.conv2_b))?;
        let skip = match &self.skip {
            Some((w, b)) => x.conv1d(w, Some(b))?,
            None => x.clone(),
        };
        skip.add(&branch)
    }
}

#[derive(Debug, Clone)]
pub struct ResNet1d {
    pub config: ResNet1dConfig,
    pub blocks: Vec<ResBlock>,
    params: Vec<Parameter>,
}

impl ResNet1dConfig {
    pub fn new(n_inputs: usize, n_t: usize, n_tau: usize) -> Self {
        Self {
            n_tau,
            in_channels: n_inputs,
            out_channels: n_t,
            blocks: 6,
            kernel: 3,
            expansion: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_tau", self.n_tau),
            ("in_channels", self.in_channels),
            ("out_channels", self.out_channels),
        ] {
            check_positive(name, v)?;
        }
        check_positive("blocks", self.blocks)?;
        if self.kernel % 2 == 0 {
            return Err(Error::invalid("kernel", format!("must be odd, got {}", self.kernel)));
        }
        if !(self.expansion.is_finite() && self.expansion > 0.0) {
            return Err(Error::invalid("expansion", format!("must be positive, got {}", self.expansion)));
        }
        Ok(())
    }

    /// Channel count after each block boundary, from `in_channels` to `out_channels`.
    pub fn channels(&self) -> Vec<usize> {
        let (a, b) = (self.in_channels as f64, self.out_channels as f64);
        (0..=self.blocks)
            .map(|i| (a + (b - a) * i as f64 / self.blocks as f64).round() as usize)
            .collect()
    }

    fn inner(&self, c_out: usize) -> usize {
        ((self.expansion * c_out as f64).round() as usize).max(1)
    }

    pub fn param_count(&self) -> usize {
        let k = self.kernel;
        self.channels()
            .windows(2)
            .map(|w| {
                let (ci, co) = (w[0], w[1]);
                let mid = self.inner(co);
                let skip = if ci != co { ci * co + co } else { 0 };
                ci * mid * k + mid + mid * co * k + co + skip
            })
            .sum()
    }

    /// Chooses `expansion` so the parameter count is as close as possible to `target`.
    pub fn matched(mut self, target: usize) -> Self {
        let (mut lo, mut hi) = (0.01, 64.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            self.expansion = mid;
            if self.param_count() < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        self.expansion = lo;
        let below = self.param_count();
        self.expansion = hi;
        if below.abs_diff(target) < self.param_count().abs_diff(target) {
            self.expansion = lo;
        }
        self
    }
}

impl ResNet1d {
    pub fn new(config: ResNet1dConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut init = Init {
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let k = config.kernel;
        let mut params = Vec::new();
        let blocks = config
            .channels()
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (ci, co) = (w[0], w[1]);
                let mid = config.inner(co);
                let block = ResBlock {
                    conv1_w: init.fan_in(&[mid, ci, k], ci * k),
                    conv1_b: init.zeros(&[mid]),
                    conv2_w: init.fan_in(&[co, mid, k], mid * k),
                    conv2_b: init.zeros(&[co]),
                    skip: (ci != co).then(|| (init.fan_in(&[co, ci, 1], ci), init.zeros(&[co]))),
                };
                let p = format!("block{i}");
                register(&mut params, format!("{p}.conv1.w"), &block.conv1_w);
                register(&mut params, format!("{p}.conv1.b"), &block.conv1_b);
                register(&mut params, format!("{p}.conv2.w"), &block.conv2_w);
                register(&mut params, format!("{p}.conv2.b"), &block.conv2_b);
                if let Some((w, b)) = &block.skip {
                    register(&mut params, format!("{p}.skip.w"), w);
                    register(&mut params, format!("{p}.skip.b"), b);
                }
                block
            })
            .collect();
        Ok(Self { config, blocks, params })
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    /// `inputs: [batch, in_channels, n_tau]` → `[batch, out_channels, n_tau]`.
    pub fn forward(&self, inputs: &Tensor) -> Result<Tensor> {
        let s = inputs.shape();
        if s.len() != 3 || s[1] != self.config.in_channels {
            return Err(Error::Shape {
                op: "resnet1d",
                lhs: s.to_vec(),
                rhs: vec![s.first().copied().unwrap_or(0), self.config.in_channels, self.config.n_tau],
            });
        }
        let mut x = inputs.clone();
        for b in &self.blocks {
            x = b.forward(&x)?;
        }
        Ok(x)
    }
}
