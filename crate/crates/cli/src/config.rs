//! TOML run configuration. Every section is optional and falls back to the
//! library defaults; relative paths are resolved against the config file's directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use g2node::dataset::{DatasetConfig, GridSpec, ParamRanges, Range, SimParams};
use g2node::models::{LstmOdeConfig, ModelConfig, ResNet1dConfig};
use g2node::noise::NoiseSpec;
use g2node::physics::{DiffusionSpec, Peak, TauGrid, DEFAULT_CONTRAST};
use g2node::training::{FourierRows, LrSchedule, TrainConfig};

use crate::ConfigError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub simulate: SimulateSection,
    pub dataset: DatasetSection,
    pub train: TrainSection,
    pub forecast: ForecastSection,
    pub eval: EvalSection,
    /// Directory relative paths are resolved against; set by [`Config::load`].
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Config {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut config: Config = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        config.base_dir = base_dir.to_path_buf();
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("reading config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base).with_context(|| format!("in config {}", path.display()))
    }

    /// No file: every default, paths relative to the working directory.
    pub fn defaults() -> Self {
        Self::default()
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    /// `reference`, `desk` or `full_nyquist`; individual fields override it.
    pub preset: Option<String>,
    pub n_zeta: Option<usize>,
    pub zeta_step: Option<f64>,
    pub n_tau: Option<usize>,
    pub tau_min: Option<f64>,
    pub tau_max: Option<f64>,
    pub n_t: Option<usize>,
    pub t_max: Option<f64>,
}

impl GridSection {
    pub fn build(&self, default_preset: &str) -> Result<GridSpec> {
        let preset = self.preset.as_deref().unwrap_or(default_preset);
        let mut g = match preset {
            "reference" => GridSpec::reference(),
            "desk" => GridSpec::desk(),
            "full_nyquist" => {
                let r = GridSpec::reference();
                GridSpec::full_nyquist(
                    self.n_zeta.unwrap_or(r.n_zeta),
                    self.zeta_step.unwrap_or(r.zeta_step),
                    self.n_tau.unwrap_or(r.n_tau),
                )
            }
            other => bail!(ConfigError(format!(
                "invalid value for `grid.preset`: `{other}` (expected reference, desk or full_nyquist)"
            ))),
        };
        macro_rules! over {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { g.$f = v; } )* };
        }
        over!(n_zeta, zeta_step, n_tau, tau_min, tau_max, n_t, t_max);
        g.build()?;
        Ok(g)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeakSection {
    /// µeV
    #[serde(default)]
    pub center: f64,
    /// µeV
    pub fwhm: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
    pub sideband_weight: Option<f64>,
    /// µeV
    pub sideband_cutoff: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl PeakSection {
    fn build(&self, index: usize) -> Result<Peak> {
        Ok(match (self.sideband_weight, self.sideband_cutoff) {
            (None, None) => Peak::lorentzian(self.center, self.fwhm, self.amplitude),
            (Some(w), Some(c)) => Peak::with_sideband(self.center, self.fwhm, self.amplitude, w, c),
            _ => bail!(ConfigError(format!(
                "invalid value for `peaks[{index}]`: sideband_weight and sideband_cutoff go together"
            ))),
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DiffusionSection {
    /// µeV²/s
    Wiener { diffusivity: f64 },
    /// `rate` in 1/s, `jump_width` in µeV
    Poisson {
        rate: f64,
        jump_width: f64,
        #[serde(default = "default_max_jumps")]
        max_jumps: usize,
    },
}

fn default_max_jumps() -> usize {
    DiffusionSpec::DEFAULT_MAX_JUMPS
}

impl Default for DiffusionSection {
    fn default() -> Self {
        DiffusionSection::Wiener { diffusivity: 1e4 }
    }
}

impl DiffusionSection {
    fn build(&self) -> DiffusionSpec {
        match *self {
            DiffusionSection::Wiener { diffusivity } => DiffusionSpec::Wiener { diffusivity },
            DiffusionSection::Poisson {
                rate,
                jump_width,
                max_jumps,
            } => DiffusionSpec::Poisson {
                rate,
                jump_width,
                max_jumps,
            },
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub grid: GridSection,
    pub peaks: Vec<PeakSection>,
    pub diffusion: DiffusionSection,
    pub contrast: f64,
    /// Fixed noise intensity; otherwise calibrated from `noise_counts`.
    pub intensity_scale: Option<f64>,
    pub noise_counts: f64,
    pub seed: u64,
    pub pgm: bool,
    pub out: PathBuf,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            grid: GridSection::default(),
            peaks: vec![PeakSection {
                center: 0.0,
                fwhm: 10.0,
                amplitude: 1.0,
                sideband_weight: None,
                sideband_cutoff: None,
            }],
            diffusion: DiffusionSection::default(),
            contrast: DEFAULT_CONTRAST,
            intensity_scale: None,
            noise_counts: 20.0,
            seed: 0,
            pgm: false,
            out: PathBuf::from("simulation"),
        }
    }
}

impl SimulateSection {
    pub fn params(&self) -> Result<SimParams> {
        let grid = self.grid.build("reference")?;
        let peaks = self.peaks.iter().enumerate().map(|(i, p)| p.build(i)).collect::<Result<Vec<_>>>()?;
        let intensity_scale = match self.intensity_scale {
            Some(s) => s,
            None => {
                if !(self.noise_counts > 0.0) {
                    bail!(ConfigError(format!("invalid value for `noise_counts`: must be positive, got {}", self.noise_counts)));
                }
                NoiseSpec::calibrated_scale(&TauGrid::log(grid.n_tau, grid.tau_min, grid.tau_max)?, self.noise_counts)
            }
        };
        let params = SimParams {
            peaks,
            diffusion: self.diffusion.build(),
            contrast: self.contrast,
            grid,
            noise: NoiseSpec {
                intensity_scale,
                seed: self.seed,
            },
            mix_weight: 0.0,
            partner: None,
            seed: self.seed,
        };
        params.validate()?;
        Ok(params)
    }
}

/// Overrides for the sampling distribution; each range is `[min, max]`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RangesSection {
    pub fwhm: Option<[f64; 2]>,
    pub splitting: Option<[f64; 2]>,
    pub amplitude: Option<[f64; 2]>,
    pub sideband_weight: Option<[f64; 2]>,
    pub sideband_cutoff: Option<[f64; 2]>,
    pub diffusivity: Option<[f64; 2]>,
    pub jump_rate: Option<[f64; 2]>,
    pub jump_width: Option<[f64; 2]>,
    pub mix_weight: Option<[f64; 2]>,
    pub contrast: Option<[f64; 2]>,
    pub sideband_probability: Option<f64>,
    pub poisson_probability: Option<f64>,
    pub mix_probability: Option<f64>,
    pub max_jumps: Option<usize>,
}

impl RangesSection {
    fn apply(&self, mut r: ParamRanges) -> ParamRanges {
        let pairs = [
            ("fwhm", self.fwhm),
            ("splitting", self.splitting),
            ("amplitude", self.amplitude),
            ("sideband_weight", self.sideband_weight),
            ("sideband_cutoff", self.sideband_cutoff),
            ("diffusivity", self.diffusivity),
            ("jump_rate", self.jump_rate),
            ("jump_width", self.jump_width),
            ("mix_weight", self.mix_weight),
            ("contrast", self.contrast),
        ];
        for (name, v) in pairs {
            if let (Some([min, max]), Some(slot)) = (v, r.range_mut(name)) {
                *slot = Range::new(min, max);
            }
        }
        if let Some(p) = self.sideband_probability {
            r.sideband_probability = p;
        }
        if let Some(p) = self.poisson_probability {
            r.poisson_probability = p;
        }
        if let Some(p) = self.mix_probability {
            r.mix_probability = p;
        }
        if let Some(m) = self.max_jumps {
            r.max_jumps = m;
        }
        r
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub n_examples: usize,
    pub n_test: usize,
    pub train_fraction: f64,
    pub grid: GridSection,
    pub n_inputs: usize,
    /// ps
    pub input_window: f64,
    pub input_indices: Option<Vec<usize>>,
    pub ranges: RangesSection,
    pub test_ranges: RangesSection,
    pub intensity_scale: Option<f64>,
    pub noise_counts: f64,
    pub seed: u64,
    pub workers: Option<usize>,
    pub created: String,
    pub out: PathBuf,
}

impl Default for DatasetSection {
    fn default() -> Self {
        let d = DatasetConfig::default();
        Self {
            n_examples: d.n_examples,
            n_test: d.n_test,
            train_fraction: d.train_fraction,
            grid: GridSection::default(),
            n_inputs: d.n_inputs,
            input_window: d.input_window,
            input_indices: None,
            ranges: RangesSection::default(),
            test_ranges: RangesSection::default(),
            intensity_scale: None,
            noise_counts: d.noise_counts,
            seed: d.seed,
            workers: None,
            created: d.created,
            out: PathBuf::from("dataset"),
        }
    }
}

impl DatasetSection {
    pub fn build(&self) -> Result<DatasetConfig> {
        let config = DatasetConfig {
            n_examples: self.n_examples,
            n_test: self.n_test,
            train_fraction: self.train_fraction,
            grid: self.grid.build("desk")?,
            n_inputs: self.n_inputs,
            input_window: self.input_window,
            input_indices: self.input_indices.clone(),
            ranges: self.ranges.apply(ParamRanges::default()),
            test_ranges: self.test_ranges.apply(ParamRanges::shifted_test()),
            intensity_scale: self.intensity_scale,
            noise_counts: self.noise_counts,
            seed: self.seed,
            workers: self.workers,
            created: self.created.clone(),
        };
        config.validate()?;
        Ok(config)
    }
}

/// Architecture overrides; unset fields keep the preset's values.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LstmOdeSection {
    /// `default` or `tiny`
    pub preset: Option<String>,
    pub enc_layers: Option<usize>,
    pub enc_hidden: Option<usize>,
    pub latent: Option<usize>,
    pub field_depth: Option<usize>,
    pub field_width: Option<usize>,
    pub field_activation: Option<String>,
    pub time_dependent: Option<bool>,
    pub dec_layers: Option<usize>,
    pub dec_hidden: Option<usize>,
    pub substeps: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResNetSection {
    pub blocks: Option<usize>,
    pub kernel: Option<usize>,
    /// Unset: chosen to match the LSTM-ODE parameter count.
    pub expansion: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub dataset: PathBuf,
    /// `lstm-ode` or `resnet1d`
    pub model: String,
    pub lstm_ode: LstmOdeSection,
    pub resnet1d: ResNetSection,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub lr: f64,
    /// `constant`, `cosine` or `cosine:<min_lr>`
    pub schedule: String,
    pub fourier_weight: f64,
    /// `default`, `all` or a comma-separated list of τ rows
    pub fourier_rows: String,
    pub patience: usize,
    pub seed: u64,
    pub checkpoint_every: usize,
    /// 0 disables clipping.
    pub clip_norm: f64,
    pub max_wall_seconds: Option<f64>,
    pub out: PathBuf,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            dataset: PathBuf::from("dataset"),
            model: "lstm-ode".into(),
            lstm_ode: LstmOdeSection::default(),
            resnet1d: ResNetSection::default(),
            batch_size: d.batch_size,
            max_epochs: d.max_epochs,
            lr: d.lr,
            schedule: d.schedule.to_string(),
            fourier_weight: d.fourier_weight,
            fourier_rows: d.fourier_rows.to_string(),
            patience: d.patience,
            seed: d.seed,
            checkpoint_every: d.checkpoint_every,
            clip_norm: d.clip_norm.unwrap_or(0.0),
            max_wall_seconds: None,
            out: PathBuf::from("run"),
        }
    }
}

impl TrainSection {
    pub fn train_config(&self) -> Result<TrainConfig> {
        let schedule: LrSchedule = self
            .schedule
            .parse()
            .map_err(|e| ConfigError(format!("invalid value for `schedule`: {e}")))?;
        let config = TrainConfig {
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            lr: self.lr,
            schedule,
            fourier_weight: self.fourier_weight,
            fourier_rows: parse_rows(&self.fourier_rows)?,
            patience: self.patience,
            seed: self.seed,
            checkpoint_every: self.checkpoint_every,
            clip_norm: (self.clip_norm > 0.0).then_some(self.clip_norm),
            max_wall_seconds: self.max_wall_seconds,
        };
        config.validate()?;
        Ok(config)
    }

    fn lstm_config(&self, n_tau: usize, n_inputs: usize, n_t: usize) -> Result<LstmOdeConfig> {
        let s = &self.lstm_ode;
        let mut c = match s.preset.as_deref().unwrap_or("default") {
            "default" => LstmOdeConfig::new(n_tau, n_t),
            "tiny" => LstmOdeConfig::tiny(),
            other => bail!(ConfigError(format!("invalid value for `lstm_ode.preset`: `{other}` (expected default or tiny)"))),
        };
        (c.n_tau, c.n_inputs, c.n_t) = (n_tau, n_inputs, n_t);
        macro_rules! over {
            ($($f:ident),*) => { $( if let Some(v) = s.$f { c.$f = v; } )* };
        }
        over!(enc_layers, enc_hidden, latent, field_depth, field_width, time_dependent, dec_layers, dec_hidden, substeps);
        if let Some(a) = &s.field_activation {
            c.field_activation = g2node::models::Activation::parse(a)?;
        }
        Ok(c)
    }

    /// Architecture for a dataset with the given shape. `model` overrides the
    /// configured kind.
    pub fn model_config(&self, model: Option<&str>, n_tau: usize, n_inputs: usize, n_t: usize) -> Result<ModelConfig> {
        let lstm = self.lstm_config(n_tau, n_inputs, n_t)?;
        let config = match model.unwrap_or(&self.model) {
            "lstm-ode" => ModelConfig::LstmOde(lstm),
            "resnet1d" => {
                let s = &self.resnet1d;
                let mut c = ResNet1dConfig::new(n_inputs, n_t, n_tau);
                if let Some(b) = s.blocks {
                    c.blocks = b;
                }
                if let Some(k) = s.kernel {
                    c.kernel = k;
                }
                match s.expansion {
                    Some(e) => c.expansion = e,
                    None => {
                        let target = g2node::models::Model::new(&ModelConfig::LstmOde(lstm), 0)?.n_params();
                        c = c.matched(target);
                    }
                }
                ModelConfig::ResNet1d(c)
            }
            other => bail!(ConfigError(format!("invalid value for `model`: `{other}` (expected lstm-ode or resnet1d)"))),
        };
        config.validate()?;
        Ok(config)
    }
}

pub fn parse_rows(s: &str) -> Result<FourierRows> {
    s.parse::<FourierRows>()
        .map_err(|e| ConfigError(format!("invalid value for `fourier_rows`: {e}")).into())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastSection {
    pub checkpoint: PathBuf,
    pub input: PathBuf,
    /// Contrast used for spectral recovery; defaults to the training value.
    pub contrast: Option<f64>,
    pub allow_outside_window: bool,
    pub pgm: bool,
    pub out: PathBuf,
}

impl Default for ForecastSection {
    fn default() -> Self {
        Self {
            checkpoint: PathBuf::from("run/best.ckpt"),
            input: PathBuf::from("curves.txt"),
            contrast: None,
            allow_outside_window: false,
            pgm: false,
            out: PathBuf::from("forecast"),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub checkpoint: PathBuf,
    pub dataset: PathBuf,
    /// `train`, `val` or `test`
    pub split: String,
    pub batch_size: usize,
    pub fourier_rows: String,
    /// Report file; printed to stdout either way.
    pub out: Option<PathBuf>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            checkpoint: PathBuf::from("run/best.ckpt"),
            dataset: PathBuf::from("dataset"),
            split: "test".into(),
            batch_size: 32,
            fourier_rows: FourierRows::Default.to_string(),
            out: None,
        }
    }
}
