//! Resumable optimiser state: the current f64 weights and Adam moments.

use std::path::Path;

use super::optim::Adam;
use crate::checksum::fnv1a;
use crate::diffcalc::Parameter;
use crate::{Error, Result};

const STATE_MAGIC: &[u8; 4] = b"G2TS";
const STATE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    /// First epoch still to run.
    pub next_epoch: usize,
    pub best_val: f64,
    pub best_epoch: usize,
    pub bad_epochs: usize,
    pub params: Vec<Vec<f64>>,
    pub adam: Adam,
}

impl TrainState {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(STATE_MAGIC);
        out.extend_from_slice(&STATE_VERSION.to_le_bytes());
        for v in [self.next_epoch, self.best_epoch, self.bad_epochs, self.params.len()] {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        out.extend_from_slice(&self.adam.step.to_le_bytes());
        out.extend_from_slice(&self.best_val.to_le_bytes());
        for ((p, m), v) in self.params.iter().zip(&self.adam.m).zip(&self.adam.v) {
            out.extend_from_slice(&(p.len() as u64).to_le_bytes());
            for x in p.iter().chain(m).chain(v) {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        let sum = fnv1a(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8], params: &[Parameter]) -> Result<Self> {
        let what = "training state";
        if bytes.len() < 56 || &bytes[..4] != STATE_MAGIC {
            return Err(Error::format(what, "not a training state file"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != STATE_VERSION {
            return Err(Error::Version {
                what: "training state",
                found: version,
                expected: STATE_VERSION,
            });
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        if fnv1a(body) != u64::from_le_bytes(tail.try_into().unwrap()) {
            return Err(Error::Checksum { what: what.into() });
        }
        let mut pos = 8;
        let mut word = || -> Result<[u8; 8]> {
            let w = body
                .get(pos..pos + 8)
                .ok_or_else(|| Error::format(what, "truncated"))?
                .try_into()
                .unwrap();
            pos += 8;
            Ok(w)
        };
        let next_epoch = u64::from_le_bytes(word()?) as usize;
        let best_epoch = u64::from_le_bytes(word()?) as usize;
        let bad_epochs = u64::from_le_bytes(word()?) as usize;
        let count = u64::from_le_bytes(word()?) as usize;
        let step = u64::from_le_bytes(word()?);
        let best_val = f64::from_le_bytes(word()?);
        if count != params.len() {
            return Err(Error::format(what, format!("{count} parameters stored, model has {}", params.len())));
        }
        let mut adam = Adam::new(params);
        adam.step = step;
        let mut values = Vec::with_capacity(count);
        for (i, p) in params.iter().enumerate() {
            let len = u64::from_le_bytes(word()?) as usize;
            if len != p.tensor.len() {
                return Err(Error::format(what, format!("`{}` has {len} values, model expects {}", p.name, p.tensor.len())));
            }
            let mut read = |n| (0..n).map(|_| word().map(f64::from_le_bytes)).collect::<Result<Vec<f64>>>();
            values.push(read(len)?);
            adam.m[i] = read(len)?;
            adam.v[i] = read(len)?;
        }
        Ok(Self {
            next_epoch,
            best_val,
            best_epoch,
            bad_epochs,
            params: values,
            adam,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.encode()).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, params: &[Parameter]) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes, params)
    }
}
