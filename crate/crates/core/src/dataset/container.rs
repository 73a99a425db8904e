//! On-disk layout of a dataset: `manifest.txt`, `records/<split>_%06d.bin` and
//! `params_<split>.tsv`.
//!
//! Record layout (little-endian): magic `G2E1`, u32 n_tau, u32 n_t, u32 n_inputs,
//! f32 t[n_inputs], f32 inputs[n_inputs × n_tau], f32 target[n_tau × n_t],
//! u64 FNV-1a of all preceding bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::checksum::fnv1a;
use crate::{Error, Result};

use super::{Example, GridSpec, ParamRanges, Range};

pub const RECORD_MAGIC: &[u8; 4] = b"G2E1";
pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub(crate) fn tag(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Val => 2,
            Split::Test => 3,
        }
    }

    pub fn record_path(self, root: &Path, index: usize) -> PathBuf {
        root.join("records").join(format!("{}_{index:06}.bin", self.name()))
    }

    pub fn params_path(self, root: &Path) -> PathBuf {
        root.join(format!("params_{}.tsv", self.name()))
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::invalid("split", format!("unknown split `{s}`"))),
        }
    }
}

/// One stored (inputs, target) pair at f32 precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub n_tau: usize,
    pub n_t: usize,
    /// ps, one per input curve
    pub t_values: Vec<f32>,
    /// `[n_inputs, n_tau]` noisy g² curves
    pub inputs: Vec<f32>,
    /// `[n_tau, n_t]` clean g² map
    pub target: Vec<f32>,
}

impl Record {
    pub fn from_example(example: &Example) -> Self {
        let target = &example.target;
        Self {
            n_tau: target.n_tau(),
            n_t: target.n_t(),
            t_values: example.inputs.iter().map(|c| c.t as f32).collect(),
            inputs: example
                .inputs
                .iter()
                .flat_map(|c| c.values.iter().map(|&v| v as f32))
                .collect(),
            target: target.values.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.t_values.len()
    }

    pub fn input(&self, k: usize) -> &[f32] {
        &self.inputs[k * self.n_tau..(k + 1) * self.n_tau]
    }

    pub fn target_at(&self, i: usize, j: usize) -> f32 {
        self.target[i * self.n_t + j]
    }

    pub fn encoded_len(n_tau: usize, n_t: usize, n_inputs: usize) -> usize {
        4 + 12 + 4 * (n_inputs + n_inputs * n_tau + n_tau * n_t) + 8
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::encoded_len(self.n_tau, self.n_t, self.n_inputs()));
        out.extend_from_slice(RECORD_MAGIC);
        for d in [self.n_tau, self.n_t, self.n_inputs()] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in self.t_values.iter().chain(&self.inputs).chain(&self.target) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let sum = fnv1a(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    /// Parses and verifies one record; `what` names it in error messages.
    pub fn decode(bytes: &[u8], what: &str) -> Result<Self> {
        if bytes.len() < 24 {
            return Err(Error::format(what, format!("truncated record ({} bytes)", bytes.len())));
        }
        if &bytes[..4] != RECORD_MAGIC {
            return Err(Error::format(what, "bad magic"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let (n_tau, n_t, n_inputs) = (u32_at(4), u32_at(8), u32_at(12));
        let expected = Self::encoded_len(n_tau, n_t, n_inputs);
        if bytes.len() != expected {
            return Err(Error::format(
                what,
                format!("truncated record: {} bytes, header implies {expected}", bytes.len()),
            ));
        }
        let body = &bytes[..expected - 8];
        let stored = u64::from_le_bytes(bytes[expected - 8..].try_into().unwrap());
        if fnv1a(body) != stored {
            return Err(Error::Checksum { what: what.to_string() });
        }
        let floats: Vec<f32> = body[16..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let (t_values, rest) = floats.split_at(n_inputs);
        let (inputs, target) = rest.split_at(n_inputs * n_tau);
        Ok(Self {
            n_tau,
            n_t,
            t_values: t_values.to_vec(),
            inputs: inputs.to_vec(),
            target: target.to_vec(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }
}

/// Standardisation of `1 - g²` applied to model inputs and targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub mean: f64,
    pub scale: f64,
}

impl Normalization {
    pub const IDENTITY: Normalization = Normalization { mean: 0.0, scale: 1.0 };

    pub fn standardize(&self, g2: f64) -> f64 {
        ((1.0 - g2) - self.mean) / self.scale
    }

    pub fn to_g2(&self, y: f64) -> f64 {
        1.0 - (y * self.scale + self.mean)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub version: u32,
    pub counts: SplitCounts,
    pub train_fraction: f64,
    pub grid: GridSpec,
    pub input_indices: Vec<usize>,
    pub input_t: Vec<f64>,
    /// ps
    pub input_window: f64,
    pub train_ranges: ParamRanges,
    pub test_ranges: ParamRanges,
    pub global_seed: u64,
    pub intensity_scale: f64,
    /// Width of the widest τ bin; bin amplitudes are relative to it.
    pub width_norm: f64,
    pub normalization: Normalization,
    pub contrast: f64,
    pub created: String,
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

impl DatasetManifest {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let g = &self.grid;
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k}: {v}");
        };
        line("version", self.version.to_string());
        line("created", self.created.clone());
        line("global_seed", self.global_seed.to_string());
        line("count.train", self.counts.train.to_string());
        line("count.val", self.counts.val.to_string());
        line("count.test", self.counts.test.to_string());
        line("train_fraction", self.train_fraction.to_string());
        line("grid.n_zeta", g.n_zeta.to_string());
        line("grid.zeta_step_uev", g.zeta_step.to_string());
        line("grid.n_tau", g.n_tau.to_string());
        line("grid.tau_min_s", g.tau_min.to_string());
        line("grid.tau_max_s", g.tau_max.to_string());
        line("grid.n_t", g.n_t.to_string());
        line("grid.t_max_ps", g.t_max.to_string());
        line("inputs.indices", join(&self.input_indices));
        line("inputs.t_ps", join(&self.input_t));
        line("inputs.window_ps", self.input_window.to_string());
        line("contrast", self.contrast.to_string());
        line("noise.intensity_scale", self.intensity_scale.to_string());
        line("noise.width_norm_s", self.width_norm.to_string());
        line("norm.mean", self.normalization.mean.to_string());
        line("norm.scale", self.normalization.scale.to_string());
        for (prefix, r) in [("train", &self.train_ranges), ("test", &self.test_ranges)] {
            for (name, range) in r.ranges() {
                line(&format!("{prefix}.{name}"), format!("{} {}", range.min, range.max));
            }
            line(&format!("{prefix}.sideband_probability"), r.sideband_probability.to_string());
            line(&format!("{prefix}.poisson_probability"), r.poisson_probability.to_string());
            line(&format!("{prefix}.mix_probability"), r.mix_probability.to_string());
            line(&format!("{prefix}.max_jumps"), r.max_jumps.to_string());
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let l = raw.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            let (k, v) = l
                .split_once(':')
                .ok_or_else(|| Error::format("manifest", format!("line {}: expected `key: value`", n + 1)))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| -> Result<&str> {
            map.get(k)
                .map(String::as_str)
                .ok_or_else(|| Error::format("manifest", format!("missing key `{k}`")))
        };
        fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::format("manifest", format!("bad value for `{k}`: {v}")))
        }
        let f = |k: &str| -> Result<f64> { num(k, get(k)?) };
        let u = |k: &str| -> Result<usize> { num(k, get(k)?) };
        let list = |k: &str| -> Result<Vec<f64>> { get(k)?.split_whitespace().map(|x| num(k, x)).collect() };

        let version: u32 = num("version", get("version")?)?;
        if version != MANIFEST_VERSION {
            return Err(Error::Version {
                what: "dataset manifest",
                found: version,
                expected: MANIFEST_VERSION,
            });
        }
        let ranges = |prefix: &str| -> Result<ParamRanges> {
            let mut r = ParamRanges::default();
            let names: Vec<&str> = r.ranges().iter().map(|(n, _)| *n).collect();
            for name in names {
                let key = format!("{prefix}.{name}");
                let v = list(&key)?;
                if v.len() != 2 {
                    return Err(Error::format("manifest", format!("`{key}` needs two values")));
                }
                *r.range_mut(name).unwrap() = Range::new(v[0], v[1]);
            }
            r.sideband_probability = f(&format!("{prefix}.sideband_probability"))?;
            r.poisson_probability = f(&format!("{prefix}.poisson_probability"))?;
            r.mix_probability = f(&format!("{prefix}.mix_probability"))?;
            r.max_jumps = u(&format!("{prefix}.max_jumps"))?;
            Ok(r)
        };
        Ok(Self {
            version,
            counts: SplitCounts {
                train: u("count.train")?,
                val: u("count.val")?,
                test: u("count.test")?,
            },
            train_fraction: f("train_fraction")?,
            grid: GridSpec {
                n_zeta: u("grid.n_zeta")?,
                zeta_step: f("grid.zeta_step_uev")?,
                n_tau: u("grid.n_tau")?,
                tau_min: f("grid.tau_min_s")?,
                tau_max: f("grid.tau_max_s")?,
                n_t: u("grid.n_t")?,
                t_max: f("grid.t_max_ps")?,
            },
            input_indices: get("inputs.indices")?
                .split_whitespace()
                .map(|x| num("inputs.indices", x))
                .collect::<Result<_>>()?,
            input_t: list("inputs.t_ps")?,
            input_window: f("inputs.window_ps")?,
            train_ranges: ranges("train")?,
            test_ranges: ranges("test")?,
            global_seed: num("global_seed", get("global_seed")?)?,
            intensity_scale: f("noise.intensity_scale")?,
            width_norm: f("noise.width_norm_s")?,
            normalization: Normalization {
                mean: f("norm.mean")?,
                scale: f("norm.scale")?,
            },
            contrast: f("contrast")?,
            created: get("created")?.to_string(),
        })
    }

    pub fn read(root: &Path) -> Result<(Self, u64)> {
        let path = root.join(MANIFEST_FILE);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let text = String::from_utf8(bytes.clone()).map_err(|_| Error::format("manifest", "not UTF-8"))?;
        Ok((Self::parse(&text)?, fnv1a(&bytes)))
    }
}
