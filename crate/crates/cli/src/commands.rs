use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use ndarray::Array2;

use g2node::dataset::{build_dataset, describe, Dataset, PARAMS_HEADER, Normalization, Split};
use g2node::diffcalc::Tensor;
use g2node::models::load_checkpoint;
use g2node::noise::add_shot_noise;
use g2node::physics::{self, DelayGrid};
use g2node::recover::recover_rows;
use g2node::training::{self, evaluate, train_dataset, Persistence, Predictor, RunDir, BEST_CHECKPOINT, METRICS_FILE};

use crate::config::{parse_rows, Config};
use crate::curves::CurveFile;
use crate::matrix::{Axis, Matrix};
use crate::{Command, Common, DataError, EvalArgs, ForecastArgs, RunConfig, TrainArgs};

/// Note stored with every correlation matrix.
pub const CORRELATION_NOTE: &str = "rows normalised to unit peak";

pub fn run(args: &RunConfig) -> Result<()> {
    let config = match &args.common.config {
        Some(path) => Config::load(path)?,
        None => Config::defaults(),
    };
    match &args.command {
        Command::Simulate => simulate(&config, &args.common).map(|_| ()),
        Command::Dataset => dataset(&config, &args.common).map(|_| ()),
        Command::Train(a) => train(&config, &args.common, a).map(|_| ()),
        Command::Forecast(a) => forecast(&config, &args.common, a).map(|_| ()),
        Command::Eval(a) => eval(&config, &args.common, a).map(|_| ()),
    }
}

fn out_dir(common: &Common, config: &Config, configured: &Path) -> Result<PathBuf> {
    let dir = common.out.clone().unwrap_or_else(|| config.resolve(configured));
    fs::create_dir_all(&dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    Ok(dir)
}

fn arg_or(config: &Config, arg: &Option<PathBuf>, configured: &Path) -> PathBuf {
    arg.clone().unwrap_or_else(|| config.resolve(configured))
}

/// Divides each row by its largest value; all-zero rows stay zero.
pub fn unit_peak_rows(mut m: Array2<f64>) -> Array2<f64> {
    for mut row in m.rows_mut() {
        let peak = row.iter().cloned().fold(0.0, f64::max);
        if peak > 0.0 {
            row.mapv_inplace(|v| v / peak);
        }
    }
    m
}

fn write_matrices(dir: &Path, matrices: &[Matrix], pgm: bool) -> Result<String> {
    let mut manifest = String::new();
    for m in matrices {
        let file = format!("{}.g2mat", m.name);
        m.write(&dir.join(&file))?;
        if pgm {
            m.write_pgm(&dir.join(format!("{}.pgm", m.name)))?;
        }
        let (rows, cols) = m.values.dim();
        writeln!(manifest, "{file} {rows} {cols} {} {}", m.row_axis.name, m.col_axis.name)?;
    }
    Ok(manifest)
}

pub fn simulate(config: &Config, common: &Common) -> Result<PathBuf> {
    let mut section = config.simulate.clone();
    if let Some(seed) = common.seed {
        section.seed = seed;
    }
    let params = section.params()?;
    let sim = physics::simulate(&params)?;
    let noisy = add_shot_noise(&sim.clean, &params.noise)?;
    let dir = out_dir(common, config, &section.out)?;

    let tau = Axis::new("tau", "s", sim.clean.tau.values(), "log");
    let t = Axis::new("t", "ps", sim.clean.t.values(), "linear");
    let zeta = Axis::new("zeta", "ueV", sim.correlation.zeta.values(), "linear");
    let matrices = [
        Matrix::new("clean", tau.clone(), t.clone(), "g2", &sim.clean.values),
        Matrix::new("noisy", tau.clone(), t.clone(), "g2", &noisy.values),
        Matrix::new("correlation", tau.clone(), zeta, "arb", &unit_peak_rows(sim.correlation.values.clone()))
            .with_note(CORRELATION_NOTE),
        Matrix::new("interferogram", tau, t, "contrast", &sim.interferogram),
    ];
    let mut manifest = write_matrices(&dir, &matrices, section.pgm)?;
    writeln!(manifest, "# {}", PARAMS_HEADER)?;
    writeln!(manifest, "# {}", describe(0, &params))?;
    writeln!(manifest, "# seed {} intensity_scale {}", params.seed, params.noise.intensity_scale)?;
    fs::write(dir.join("manifest.txt"), manifest)?;
    info!("wrote {} matrices to {}", matrices.len(), dir.display());
    Ok(dir)
}

pub fn dataset(config: &Config, common: &Common) -> Result<PathBuf> {
    let mut section = config.dataset.clone();
    if let Some(seed) = common.seed {
        section.seed = seed;
    }
    let ds = section.build()?;
    let dir = common.out.clone().unwrap_or_else(|| config.resolve(&section.out));
    let manifest = build_dataset(&ds, &dir)?;
    let c = manifest.counts;
    println!("{}: {} train, {} val, {} test", dir.display(), c.train, c.val, c.test);
    Ok(dir)
}

pub fn train(config: &Config, common: &Common, args: &TrainArgs) -> Result<PathBuf> {
    let section = &config.train;
    let mut tc = section.train_config()?;
    if let Some(seed) = common.seed {
        tc.seed = seed;
    }
    if let Some(n) = args.max_epochs {
        tc.max_epochs = n;
    }
    if args.no_fourier_loss {
        tc.fourier_weight = 0.0;
    }
    let data_dir = arg_or(config, &args.dataset, &section.dataset);
    let data = Dataset::open(&data_dir)?;
    let m = &data.manifest;
    let mc = section.model_config(args.model.as_deref(), m.grid.n_tau, m.input_indices.len(), m.grid.n_t)?;
    let model = g2node::models::Model::new(&mc, tc.seed)?;
    info!("{} with {} parameters on {}", mc.kind(), model.n_params(), data_dir.display());

    let dir = out_dir(common, config, &section.out)?;
    let run = RunDir {
        path: Some(&dir),
        resume: args.resume,
        stop_at: None,
    };
    let outcome = train_dataset(&model, &data, &tc, run)?;
    let last = outcome.metrics.last().context("training ran no epochs")?;
    println!(
        "{}: {} epochs, best val {:.4e} at epoch {}{}",
        dir.display(),
        last.epoch + 1,
        outcome.meta.best_val,
        outcome.best_epoch,
        if outcome.stopped_early { " (stopped early)" } else { "" }
    );
    info!("metrics in {}, checkpoint {}", dir.join(METRICS_FILE).display(), dir.join(BEST_CHECKPOINT).display());
    Ok(dir)
}

pub fn forecast(config: &Config, common: &Common, args: &ForecastArgs) -> Result<PathBuf> {
    let section = &config.forecast;
    let ckpt = arg_or(config, &args.checkpoint, &section.checkpoint);
    let (model, meta) = load_checkpoint(&ckpt)?;
    let mc = model.config();
    let curves = CurveFile::read(&arg_or(config, &args.input, &section.input))?;

    if curves.t.len() != mc.n_inputs() {
        bail!(DataError(format!(
            "the model expects {} input curves, the input file has {}",
            mc.n_inputs(),
            curves.t.len()
        )));
    }
    if curves.tau.len() != mc.n_tau() {
        bail!(DataError(format!(
            "the model expects {} tau points, the input file has {}",
            mc.n_tau(),
            curves.tau.len()
        )));
    }
    let outside: Vec<f64> = curves
        .t
        .iter()
        .copied()
        .filter(|&t| !(0.0..=meta.input_window * (1.0 + 1e-9)).contains(&t))
        .collect();
    if !outside.is_empty() {
        let msg = format!("input delays {outside:?} ps lie outside the training window [0, {}] ps", meta.input_window);
        if !(args.allow_outside_window || section.allow_outside_window) {
            bail!(DataError(format!("{msg}; pass --allow-outside-window to proceed")));
        }
        warn!("{msg}");
    }
    if curves.t.iter().zip(&meta.input_t).any(|(a, b)| (a - b).abs() > 1e-6 * b.abs().max(1.0)) {
        warn!("input delays {:?} differ from the training delays {:?}", curves.t, meta.input_t);
    }

    let norm = Normalization {
        mean: meta.norm_mean,
        scale: meta.norm_scale,
    };
    let (n_in, n_tau, n_t) = (mc.n_inputs(), mc.n_tau(), mc.n_t());
    let x: Vec<f64> = curves.values.iter().flat_map(|c| c.iter().map(|&g| norm.standardize(g))).collect();
    let t_norm: Vec<f64> = curves.t.iter().map(|t| t / meta.t_max).collect();
    let y = model.predict(&Tensor::new(x, &[1, n_in, n_tau])?, &t_norm)?;
    let y = y.data();
    let g2 = Array2::from_shape_fn((n_tau, n_t), |(i, j)| norm.to_g2(y[j * n_tau + i]));

    let contrast = args.contrast.or(section.contrast).unwrap_or(meta.contrast);
    let delays = DelayGrid::uniform(n_t, meta.t_max)?;
    let (zeta, p) = recover_rows(&g2, delays.values(), contrast)?;

    let dir = out_dir(common, config, &section.out)?;
    let tau_axis = Axis::new("tau", "s", &curves.tau, "log");
    let matrices = [
        Matrix::new("predicted", tau_axis.clone(), Axis::new("t", "ps", delays.values(), "linear"), "g2", &g2),
        Matrix::new(
            "correlation",
            tau_axis,
            Axis::new("zeta", "ueV", zeta.values(), "linear"),
            "arb",
            &unit_peak_rows(p),
        )
        .with_note(&format!("{CORRELATION_NOTE}; contrast {contrast}")),
    ];
    let manifest = write_matrices(&dir, &matrices, section.pgm)?;
    fs::write(dir.join("manifest.txt"), manifest)?;
    println!("{}: predicted {n_tau} x {n_t} map from {}", dir.display(), ckpt.display());
    Ok(dir)
}

/// Model and persistence scores on one split.
#[derive(Debug, Clone)]
pub struct EvalSummary {
    pub model: training::EvalReport,
    pub persistence: training::EvalReport,
    /// Model mean MSE over persistence mean MSE.
    pub ratio: f64,
    pub hash_matches: bool,
}

impl EvalSummary {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (name, r) in [("model", &self.model), ("persistence", &self.persistence)] {
            let _ = writeln!(
                s,
                "{name:<12} mse_mean {:.4e} mse_median {:.4e} mse_p95 {:.4e} fourier_mean {:.4e}",
                r.mean, r.median, r.p95, r.mean_fourier
            );
        }
        let _ = writeln!(s, "ratio {:.4}", self.ratio);
        let _ = writeln!(s, "examples {}", self.model.mse.len());
        s
    }
}

pub fn eval(config: &Config, common: &Common, args: &EvalArgs) -> Result<EvalSummary> {
    let section = &config.eval;
    let ckpt = arg_or(config, &args.checkpoint, &section.checkpoint);
    let (model, meta) = load_checkpoint(&ckpt)?;
    let data_dir = arg_or(config, &args.dataset, &section.dataset);
    let ds = Dataset::open(&data_dir)?;
    let split_name = args.split.as_deref().unwrap_or(&section.split);
    let split: Split = split_name
        .parse()
        .map_err(|e| crate::ConfigError(format!("invalid value for `split`: {e}")))?;
    let hash_matches = ds.manifest_hash == meta.manifest_hash;
    if !hash_matches {
        warn!(
            "checkpoint was trained on dataset {:016x}, evaluating on {:016x}",
            meta.manifest_hash, ds.manifest_hash
        );
    }
    if ds.manifest.counts.get(split) == 0 {
        bail!(DataError(format!("the {split_name} split of {} is empty", data_dir.display())));
    }
    let data = training::load_split(&ds, split)?;
    let rows = parse_rows(&section.fourier_rows)?;
    let model_report = evaluate(&model, &data, &rows, section.batch_size)?;
    let persistence = evaluate(&Persistence { n_t: data.n_t }, &data, &rows, section.batch_size)?;
    let summary = EvalSummary {
        ratio: model_report.mean / persistence.mean,
        model: model_report,
        persistence,
        hash_matches,
    };
    let text = summary.to_text();
    print!("{text}");
    if let Some(path) = common.out.clone().or_else(|| section.out.as_ref().map(|p| config.resolve(p))) {
        fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(summary)
}
