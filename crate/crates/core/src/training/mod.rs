//! Losses, the optimisation loop, evaluation and the persistence baseline.

mod data;
mod eval;
mod loss;
mod optim;
mod state;

pub use data::TrainData;
pub use eval::{evaluate, persistence_baseline, predict_g2, EvalReport, Persistence, Predictor};
pub use loss::{cosine_matrix, fourier_loss, fourier_loss_g2, time_mse, time_mse_g2, FourierLoss, FourierRows};
pub use optim::{clip_grad_norm, grad_norm, Adam, LrSchedule};
pub use state::TrainState;

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{derive_seed, Dataset, Split};
use crate::diffcalc::{no_grad, Tensor};
use crate::models::{save_checkpoint, CheckpointMeta, Model};
use crate::{Error, Result};

pub const METRICS_FILE: &str = "metrics.tsv";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const STATE_FILE: &str = "state.bin";
pub const METRICS_HEADER: &str = "epoch\ttrain_total\ttrain_time\ttrain_fourier\tval_total\tval_time\tval_fourier\tlr\twall_seconds";

const SHUFFLE_TAG: u64 = 0x7368_7566;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub lr: f64,
    pub schedule: LrSchedule,
    /// Weight of the Fourier term; 0 disables it in the optimised total.
    pub fourier_weight: f64,
    pub fourier_rows: FourierRows,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Write the resumable state every this many epochs.
    pub checkpoint_every: usize,
    pub clip_norm: Option<f64>,
    /// Stop after the epoch during which this much wall time has passed.
    pub max_wall_seconds: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            max_epochs: 200,
            lr: 3e-4,
            schedule: LrSchedule::default(),
            fourier_weight: 1.0,
            fourier_rows: FourierRows::Default,
            patience: 20,
            seed: 0,
            checkpoint_every: 1,
            clip_norm: Some(1.0),
            max_wall_seconds: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, v: usize| {
            if v == 0 {
                Err(Error::invalid(field, "must be positive"))
            } else {
                Ok(())
            }
        };
        positive("batch_size", self.batch_size)?;
        positive("max_epochs", self.max_epochs)?;
        positive("patience", self.patience)?;
        positive("checkpoint_every", self.checkpoint_every)?;
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::invalid("lr", format!("must be positive, got {}", self.lr)));
        }
        if !(self.fourier_weight.is_finite() && self.fourier_weight >= 0.0) {
            return Err(Error::invalid("fourier_weight", format!("must be >= 0, got {}", self.fourier_weight)));
        }
        if let Some(c) = self.clip_norm {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::invalid("clip_norm", format!("must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

/// Loss components of one pass, averaged over examples.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub total: f64,
    pub time: f64,
    pub fourier: f64,
}

impl LossParts {
    fn add_weighted(&mut self, other: LossParts, w: f64) {
        self.total += w * other.total;
        self.time += w * other.time;
        self.fourier += w * other.fourier;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train: LossParts,
    pub val: LossParts,
    pub lr: f64,
    pub wall_seconds: f64,
}

impl EpochMetrics {
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.3}",
            self.epoch,
            self.train.total,
            self.train.time,
            self.train.fourier,
            self.val.total,
            self.val.time,
            self.val.fourier,
            self.lr,
            self.wall_seconds
        )
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let bad = || Error::format("metrics line", line.to_string());
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 9 {
            return Err(bad());
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad());
        Ok(Self {
            epoch: f[0].parse().map_err(|_| bad())?,
            train: LossParts {
                total: num(1)?,
                time: num(2)?,
                fourier: num(3)?,
            },
            val: LossParts {
                total: num(4)?,
                time: num(5)?,
                fourier: num(6)?,
            },
            lr: num(7)?,
            wall_seconds: num(8)?,
        })
    }
}

/// Reads a metrics log written by [`train`].
pub fn read_metrics(path: &Path) -> Result<Vec<EpochMetrics>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines().skip(1).filter(|l| !l.is_empty()).map(EpochMetrics::parse_line).collect()
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// The model with its best-validation weights (rounded to f32) loaded.
    pub model: Model,
    pub meta: CheckpointMeta,
    pub metrics: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Where a run writes its files and whether it picks up an earlier run there.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunDir<'a> {
    pub path: Option<&'a Path>,
    pub resume: bool,
    /// Leave the loop before this epoch, as an interrupted run would.
    pub stop_at: Option<usize>,
}

/// Standardised forward pass and losses for one batch.
struct Objective {
    fourier: FourierLoss,
    weight: f64,
}

impl Objective {
    fn eval(&self, model: &Model, x: &Tensor, y: &Tensor, t_norm: &[f64]) -> Result<(Tensor, LossParts)> {
        let pred = model.forward(x, t_norm)?;
        let time = time_mse(&pred, y)?;
        let (total, fourier) = if self.weight > 0.0 {
            let f = self.fourier.apply(&pred, y)?;
            let v = f.item();
            (Tensor::lincomb(&[(&time, 1.0), (&f, self.weight)])?, v)
        } else {
            (time.clone(), no_grad(|| self.fourier.apply(&pred.detach(), y))?.item())
        };
        let parts = LossParts {
            total: total.item(),
            time: time.item(),
            fourier,
        };
        Ok((total, parts))
    }
}

fn check_data(model: &Model, data: &TrainData, name: &str) -> Result<()> {
    let c = model.config();
    if (c.n_inputs(), c.n_tau(), c.n_t()) != (data.n_inputs, data.n_tau, data.n_t) {
        return Err(Error::invalid(
            name,
            format!(
                "data shape (inputs {}, n_tau {}, n_t {}) does not fit the model (inputs {}, n_tau {}, n_t {})",
                data.n_inputs,
                data.n_tau,
                data.n_t,
                c.n_inputs(),
                c.n_tau(),
                c.n_t()
            ),
        ));
    }
    if data.is_empty() {
        return Err(Error::invalid(name, "contains no examples"));
    }
    Ok(())
}

fn param_norms(model: &Model) -> String {
    model
        .params()
        .iter()
        .map(|p| format!("{}={:.3e}", p.name, p.tensor.data().iter().map(|v| v * v).sum::<f64>().sqrt()))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Loss components over a whole split without building gradients.
pub fn validation_loss(model: &Model, data: &TrainData, config: &TrainConfig) -> Result<LossParts> {
    let objective = Objective {
        fourier: FourierLoss::new(data.n_t, data.n_tau, &config.fourier_rows)?,
        weight: config.fourier_weight,
    };
    split_loss(model, data, &objective, config.batch_size)
}

fn split_loss(model: &Model, data: &TrainData, objective: &Objective, batch: usize) -> Result<LossParts> {
    let all: Vec<usize> = (0..data.len()).collect();
    let mut acc = LossParts::default();
    no_grad(|| {
        for chunk in all.chunks(batch) {
            let (x, y) = data.batch(chunk)?;
            let (_, parts) = objective.eval(model, &x, &y, &data.t_norm)?;
            acc.add_weighted(parts, chunk.len() as f64 / all.len() as f64);
        }
        Ok(acc)
    })
}

fn write_metrics(path: &Path, metrics: &[EpochMetrics]) -> Result<()> {
    let mut text = String::from(METRICS_HEADER);
    text.push('\n');
    for m in metrics {
        text.push_str(&m.to_line());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn append_metrics(path: &Path, m: &EpochMetrics) -> Result<()> {
    let mut f = fs::OpenOptions::new().append(true).open(path).map_err(|e| Error::io(path, e))?;
    writeln!(f, "{}", m.to_line()).map_err(|e| Error::io(path, e))
}

fn snapshot(model: &Model) -> Vec<Vec<f64>> {
    model
        .params()
        .iter()
        .map(|p| p.tensor.data().iter().map(|&v| v as f32 as f64).collect())
        .collect()
}

fn restore(model: &Model, values: &[Vec<f64>]) {
    for (p, v) in model.params().iter().zip(values) {
        p.tensor.data_mut().copy_from_slice(v);
    }
}

/// Minimises `time_mse + w_F · fourier_loss` on `train`, validating after each epoch.
///
/// `base` supplies the dataset metadata stored in checkpoints. With a run directory,
/// the metrics log, best checkpoint and resumable state are written there.
pub fn train(
    model: &Model,
    train: &TrainData,
    val: &TrainData,
    base: &CheckpointMeta,
    config: &TrainConfig,
    run: RunDir<'_>,
) -> Result<TrainOutcome> {
    config.validate()?;
    check_data(model, train, "train split")?;
    check_data(model, val, "val split")?;
    let objective = Objective {
        fourier: FourierLoss::new(train.n_t, train.n_tau, &config.fourier_rows)?,
        weight: config.fourier_weight,
    };
    let params = model.params();
    let mut adam = Adam::new(params);
    let (mut start, mut best_val, mut best_epoch, mut bad_epochs) = (0, f64::INFINITY, 0, 0);
    let mut best = snapshot(model);
    let mut metrics = Vec::new();

    if let Some(dir) = run.path {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let state_path = dir.join(STATE_FILE);
        if run.resume && state_path.exists() {
            let state = TrainState::load(&state_path, params)?;
            restore(model, &state.params);
            adam = state.adam;
            (start, best_val, best_epoch, bad_epochs) = (state.next_epoch, state.best_val, state.best_epoch, state.bad_epochs);
            if best_val.is_finite() {
                let (saved, _) = crate::models::load_checkpoint_expecting(&dir.join(BEST_CHECKPOINT), &model.config())?;
                best = saved.params().iter().map(|p| p.tensor.to_vec()).collect();
            }
            metrics = read_metrics(&dir.join(METRICS_FILE))?;
            metrics.retain(|m| m.epoch < start);
            log::info!("resuming at epoch {start} (best val {best_val:.4e} at epoch {best_epoch})");
        }
        write_metrics(&dir.join(METRICS_FILE), &metrics)?;
    }

    let clock = Instant::now();
    let elapsed_before = metrics.last().map_or(0.0, |m| m.wall_seconds);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stopped_early = false;
    for epoch in start..config.max_epochs {
        if bad_epochs >= config.patience {
            stopped_early = true;
            break;
        }
        if run.stop_at == Some(epoch) {
            break;
        }
        let lr = config.schedule.rate(config.lr, epoch, config.max_epochs);
        order.sort_unstable();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(config.seed, SHUFFLE_TAG, epoch as u64)));
        let mut train_parts = LossParts::default();
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let (x, y) = train.batch(chunk)?;
            let (loss, parts) = objective.eval(model, &x, &y, &train.t_norm)?;
            if !parts.total.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite loss at epoch {epoch}, batch {b} (time {}, fourier {}); parameter norms: {}",
                    parts.time,
                    parts.fourier,
                    param_norms(model)
                )));
            }
            loss.backward()?;
            drop(loss);
            let norm = match config.clip_norm {
                Some(c) => clip_grad_norm(params, c),
                None => grad_norm(params),
            };
            if !norm.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite gradient at epoch {epoch}, batch {b}; parameter norms: {}",
                    param_norms(model)
                )));
            }
            adam.update(params, lr);
            params.iter().for_each(|p| p.tensor.zero_grad());
            train_parts.add_weighted(parts, chunk.len() as f64 / train.len() as f64);
        }
        let val_parts = split_loss(model, val, &objective, config.batch_size)?;
        let m = EpochMetrics {
            epoch,
            train: train_parts,
            val: val_parts,
            lr,
            wall_seconds: elapsed_before + clock.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: train {:.4e} (time {:.4e}, fourier {:.4e}), val {:.4e}, lr {lr:.2e}",
            m.train.total,
            m.train.time,
            m.train.fourier,
            m.val.total
        );
        let improved = val_parts.total < best_val;
        if improved {
            best_val = val_parts.total;
            best_epoch = epoch;
            bad_epochs = 0;
            best = snapshot(model);
        } else {
            bad_epochs += 1;
        }
        if let Some(dir) = run.path {
            append_metrics(&dir.join(METRICS_FILE), &m)?;
            if improved {
                let meta = CheckpointMeta {
                    epoch,
                    step: adam.step,
                    best_val,
                    ..base.clone()
                };
                save_checkpoint(&dir.join(BEST_CHECKPOINT), model, &meta)?;
            }
            if (epoch + 1) % config.checkpoint_every == 0 || epoch + 1 == config.max_epochs {
                let state = TrainState {
                    next_epoch: epoch + 1,
                    best_val,
                    best_epoch,
                    bad_epochs,
                    params: params.iter().map(|p| p.tensor.to_vec()).collect(),
                    adam: adam.clone(),
                };
                state.save(&dir.join(STATE_FILE))?;
            }
        }
        let wall = m.wall_seconds;
        metrics.push(m);
        if config.max_wall_seconds.is_some_and(|limit| wall >= limit) {
            log::info!("wall-time budget reached after epoch {epoch}");
            stopped_early = true;
            break;
        }
    }
    restore(model, &best);
    Ok(TrainOutcome {
        model: model.clone(),
        meta: CheckpointMeta {
            epoch: best_epoch,
            step: adam.step,
            best_val,
            ..base.clone()
        },
        metrics,
        best_epoch,
        stopped_early,
    })
}

/// Checkpoint metadata describing a dataset.
pub fn dataset_meta(dataset: &Dataset) -> CheckpointMeta {
    let m = &dataset.manifest;
    CheckpointMeta {
        manifest_hash: dataset.manifest_hash,
        norm_mean: m.normalization.mean,
        norm_scale: m.normalization.scale,
        contrast: m.contrast,
        t_max: m.grid.t_max,
        input_t: m.input_t.clone(),
        input_window: m.input_window,
        ..CheckpointMeta::default()
    }
}

/// Loads one split of a dataset into memory.
pub fn load_split(dataset: &Dataset, split: Split) -> Result<TrainData> {
    let m = &dataset.manifest;
    TrainData::from_records(&dataset.load_split(split)?, m.normalization, m.grid.t_max)
}

/// [`train`] on the train and val splits of an on-disk dataset.
pub fn train_dataset(model: &Model, dataset: &Dataset, config: &TrainConfig, run: RunDir<'_>) -> Result<TrainOutcome> {
    let train_data = load_split(dataset, Split::Train)?;
    let val_data = load_split(dataset, Split::Val)?;
    train(model, &train_data, &val_data, &dataset_meta(dataset), config, run)
}
