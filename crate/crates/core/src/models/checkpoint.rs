//! Checkpoint container: magic, version, key/value text (architecture and training
//! metadata), named f32 parameter blobs, trailing FNV-1a checksum.

use std::collections::BTreeMap;
use std::path::Path;

use super::{Model, ModelConfig};
use crate::checksum::fnv1a;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"G2CK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Training metadata stored next to the weights.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckpointMeta {
    pub epoch: usize,
    /// Optimizer steps taken.
    pub step: u64,
    pub best_val: f64,
    pub manifest_hash: u64,
    /// Standardisation of `1 - g²`.
    pub norm_mean: f64,
    pub norm_scale: f64,
    pub contrast: f64,
    /// ps; delays are divided by this before entering the model.
    pub t_max: f64,
    /// ps
    pub input_t: Vec<f64>,
    /// ps
    pub input_window: f64,
}

impl CheckpointMeta {
    fn to_pairs(&self) -> Vec<(String, String)> {
        let t: Vec<String> = self.input_t.iter().map(f64::to_string).collect();
        vec![
            ("meta.epoch".into(), self.epoch.to_string()),
            ("meta.step".into(), self.step.to_string()),
            ("meta.best_val".into(), self.best_val.to_string()),
            ("meta.manifest_hash".into(), format!("{:016x}", self.manifest_hash)),
            ("meta.norm_mean".into(), self.norm_mean.to_string()),
            ("meta.norm_scale".into(), self.norm_scale.to_string()),
            ("meta.contrast".into(), self.contrast.to_string()),
            ("meta.t_max".into(), self.t_max.to_string()),
            ("meta.input_t".into(), t.join(" ")),
            ("meta.input_window".into(), self.input_window.to_string()),
        ]
    }

    fn from_pairs(map: &BTreeMap<String, String>) -> Result<Self> {
        let raw = |k: &str| {
            map.get(&format!("meta.{k}"))
                .ok_or_else(|| Error::format("checkpoint", format!("missing `meta.{k}`")))
        };
        let bad = |k: &str| Error::format("checkpoint", format!("bad value for `meta.{k}`"));
        let f = |k: &str| raw(k)?.parse::<f64>().map_err(|_| bad(k));
        Ok(Self {
            epoch: raw("epoch")?.parse().map_err(|_| bad("epoch"))?,
            step: raw("step")?.parse().map_err(|_| bad("step"))?,
            best_val: f("best_val")?,
            manifest_hash: u64::from_str_radix(raw("manifest_hash")?, 16).map_err(|_| bad("manifest_hash"))?,
            norm_mean: f("norm_mean")?,
            norm_scale: f("norm_scale")?,
            contrast: f("contrast")?,
            t_max: f("t_max")?,
            input_t: raw("input_t")?
                .split_whitespace()
                .map(|v| v.parse().map_err(|_| bad("input_t")))
                .collect::<Result<_>>()?,
            input_window: f("input_window")?,
        })
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

/// Serialises the model at f32 precision.
pub fn encode_checkpoint(model: &Model, meta: &CheckpointMeta) -> Vec<u8> {
    let mut text = String::new();
    for (k, v) in model.config().to_pairs().into_iter().chain(meta.to_pairs()) {
        text.push_str(&k);
        text.push('=');
        text.push_str(&v);
        text.push('\n');
    }
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    put_u32(&mut out, text.len());
    out.extend_from_slice(text.as_bytes());
    put_u32(&mut out, model.params().len());
    for p in model.params() {
        put_u32(&mut out, p.name.len());
        out.extend_from_slice(p.name.as_bytes());
        let shape = p.tensor.shape();
        put_u32(&mut out, shape.len());
        for &d in shape {
            put_u32(&mut out, d);
        }
        for &v in p.tensor.data().iter() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let sum = fnv1a(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'a str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(self.what, "truncated file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

/// Parses and validates a checkpoint, rebuilding the model it describes.
pub fn decode_checkpoint(bytes: &[u8], what: &str) -> Result<(Model, CheckpointMeta)> {
    if bytes.len() < 16 {
        return Err(Error::format(what, "truncated file"));
    }
    if &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::format(what, "not a checkpoint (bad magic)"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            what: "checkpoint",
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    if fnv1a(body) != u64::from_le_bytes(tail.try_into().unwrap()) {
        return Err(Error::Checksum { what: what.to_string() });
    }
    let mut r = Reader { bytes: body, pos: 8, what };
    let text_len = r.u32()?;
    let text = std::str::from_utf8(r.take(text_len)?).map_err(|_| Error::format(what, "header is not UTF-8"))?;
    let mut map = BTreeMap::new();
    for line in text.lines() {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format(what, format!("malformed header line `{line}`")))?;
        map.insert(k.to_string(), v.to_string());
    }
    let config = ModelConfig::from_pairs(&map)?;
    let meta = CheckpointMeta::from_pairs(&map)?;
    let model = Model::new(&config, 0)?;

    let count = r.u32()?;
    let params = model.params();
    if count != params.len() {
        return Err(Error::format(
            what,
            format!("{count} parameters stored, architecture has {}", params.len()),
        ));
    }
    for p in params {
        let name_len = r.u32()?;
        let name = String::from_utf8_lossy(r.take(name_len)?).into_owned();
        if name != p.name {
            return Err(Error::format(what, format!("expected parameter `{}`, found `{name}`", p.name)));
        }
        let ndim = r.u32()?;
        let shape = (0..ndim).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        if shape != p.tensor.shape() {
            return Err(Error::format(
                what,
                format!("parameter `{name}` has shape {shape:?}, architecture expects {:?}", p.tensor.shape()),
            ));
        }
        let raw = r.take(4 * p.tensor.len())?;
        let mut data = p.tensor.data_mut();
        for (dst, c) in data.iter_mut().zip(raw.chunks_exact(4)) {
            *dst = f32::from_le_bytes(c.try_into().unwrap()) as f64;
        }
    }
    if r.pos != body.len() {
        return Err(Error::format(what, "trailing bytes after parameters"));
    }
    Ok((model, meta))
}

pub fn save_checkpoint(path: &Path, model: &Model, meta: &CheckpointMeta) -> Result<()> {
    std::fs::write(path, encode_checkpoint(model, meta)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(Model, CheckpointMeta)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, &path.display().to_string())
}

/// Loads a checkpoint that must have been written for `expected`; a mismatch names
/// the first differing setting.
pub fn load_checkpoint_expecting(path: &Path, expected: &ModelConfig) -> Result<(Model, CheckpointMeta)> {
    let (model, meta) = load_checkpoint(path)?;
    let found = model.config();
    if &found != expected {
        let want = expected.to_pairs();
        let got = found.to_pairs();
        let key = want
            .iter()
            .zip(&got)
            .find(|(a, b)| a != b)
            .map(|((k, w), (_, g))| format!("`{k}` is {g} in the checkpoint, expected {w}"))
            .unwrap_or_else(|| format!("model is {}, expected {}", found.kind(), expected.kind()));
        return Err(Error::format(path.display().to_string(), format!("config mismatch: {key}")));
    }
    Ok((model, meta))
}
