//! Training data: parameter sampling, example generation with mixing and shot noise,
//! and a streaming, checksummed on-disk container.

mod container;
mod params;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use container::{
    DatasetManifest, Normalization, Record, Split, SplitCounts, MANIFEST_FILE, MANIFEST_VERSION, RECORD_MAGIC,
};
pub use params::{derive_seed, mix64, sample_params, GridSpec, Grids, ParamRanges, Range, SimParams};

use crate::noise::{self, bin_widths, default_input_indices, draw_input_slices, InputCurve, NoiseSpec};
use crate::physics::{self, DiffusionSpec, G2Map};
use crate::{Error, Result};

/// Which delays are handed to the model as inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct InputPlan {
    pub indices: Vec<usize>,
    /// Largest allowed input delay, ps.
    pub window: Option<f64>,
}

/// One training pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub inputs: Vec<InputCurve>,
    pub target: G2Map,
    pub params: SimParams,
}

/// Convex combination `alpha·a + (1 - alpha)·b` of two clean maps on the same grid.
pub fn mix(a: &G2Map, b: &G2Map, alpha: f64) -> Result<G2Map> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid("mix_weight", format!("must lie in [0, 1], got {alpha}")));
    }
    if a.tau != b.tau || a.t != b.t || a.values.dim() != b.values.dim() {
        return Err(Error::Shape {
            op: "mix",
            lhs: a.values.shape().to_vec(),
            rhs: b.values.shape().to_vec(),
        });
    }
    if a.is_noisy || b.is_noisy {
        return Err(Error::invalid("map", "only clean maps can be mixed"));
    }
    let values = if alpha == 1.0 {
        a.values.clone()
    } else if alpha == 0.0 {
        b.values.clone()
    } else {
        ndarray::Zip::from(&a.values)
            .and(&b.values)
            .map_collect(|&x, &y| alpha * x + (1.0 - alpha) * y)
    };
    Ok(G2Map {
        values,
        contrast: a.contrast.max(b.contrast),
        ..a.clone()
    })
}

/// Clean target (mixed with the partner when one is set) plus noisy input curves.
pub fn make_example(params: &SimParams, plan: &InputPlan) -> Result<Example> {
    let own = physics::simulate(params)?.clean;
    let target = match &params.partner {
        Some(partner) if params.mix_weight > 0.0 => {
            let other = physics::simulate(partner)?.clean;
            mix(&other, &own, params.mix_weight)?
        }
        _ => own,
    };
    let noisy = noise::add_shot_noise(&target, &params.noise)?;
    let inputs = draw_input_slices(&noisy, &plan.indices, plan.window)?;
    Ok(Example {
        inputs,
        target,
        params: params.clone(),
    })
}

/// Everything `build_dataset` needs.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    /// Train + validation examples.
    pub n_examples: usize,
    pub n_test: usize,
    pub train_fraction: f64,
    pub grid: GridSpec,
    pub n_inputs: usize,
    /// ps
    pub input_window: f64,
    /// Overrides the default log-spaced placement.
    pub input_indices: Option<Vec<usize>>,
    pub ranges: ParamRanges,
    pub test_ranges: ParamRanges,
    /// Fixed intensity scale; when unset the scale is calibrated so the narrowest
    /// τ bin expects `noise_counts` counts at g² = 1.
    pub intensity_scale: Option<f64>,
    pub noise_counts: f64,
    pub seed: u64,
    /// Worker threads; `None` uses the rayon default.
    pub workers: Option<usize>,
    pub created: String,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_examples: 2000,
            n_test: 200,
            train_fraction: 0.9,
            grid: GridSpec::desk(),
            n_inputs: 10,
            input_window: 10.0,
            input_indices: None,
            ranges: ParamRanges::default(),
            test_ranges: ParamRanges::shifted_test(),
            intensity_scale: None,
            noise_counts: 20.0,
            seed: 0,
            workers: None,
            created: "unspecified".into(),
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        self.ranges.validate()?;
        self.test_ranges.validate()?;
        self.ranges.check_shifted(&self.test_ranges)?;
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::invalid(
                "train_fraction",
                format!("must lie in (0, 1], got {}", self.train_fraction),
            ));
        }
        if !(self.noise_counts > 0.0) {
            return Err(Error::invalid("noise_counts", "must be positive"));
        }
        if let Some(s) = self.intensity_scale {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::invalid("intensity_scale", format!("must be positive, got {s}")));
            }
        }
        if self.workers == Some(0) {
            return Err(Error::invalid("workers", "must be at least 1"));
        }
        self.grid.build()?;
        self.input_plan()?;
        Ok(())
    }

    pub fn input_plan(&self) -> Result<InputPlan> {
        let grids = self.grid.build()?;
        let indices = match &self.input_indices {
            Some(ix) => ix.clone(),
            None => default_input_indices(&grids.delay, self.n_inputs, self.input_window)?,
        };
        if indices.len() != self.n_inputs {
            return Err(Error::invalid(
                "input_indices",
                format!("expected {} indices, got {}", self.n_inputs, indices.len()),
            ));
        }
        let plan = InputPlan {
            indices,
            window: Some(self.input_window),
        };
        // Check indices against the grid once, up front.
        let probe = G2Map {
            values: ndarray::Array2::ones((1, grids.delay.len())),
            tau: grids.tau.clone(),
            t: grids.delay.clone(),
            is_noisy: false,
            contrast: 0.5,
        };
        draw_input_slices(&probe, &plan.indices, plan.window)?;
        Ok(plan)
    }

    pub fn counts(&self) -> SplitCounts {
        let train = (self.n_examples as f64 * self.train_fraction).round() as usize;
        SplitCounts {
            train,
            val: self.n_examples - train,
            test: self.n_test,
        }
    }
}

/// Seed of example `index` in `split`.
pub fn example_seed(global_seed: u64, split: Split, index: usize) -> u64 {
    derive_seed(global_seed, split.tag(), index as u64)
}

/// Short per-example description written to `params_<split>.tsv`.
pub fn describe(index: usize, p: &SimParams) -> String {
    let shape = if p.is_sideband() { "sideband" } else { "lorentzian" };
    let mechanism = match p.diffusion {
        DiffusionSpec::Wiener { .. } => "wiener",
        DiffusionSpec::Poisson { .. } => "poisson",
    };
    let splitting = p
        .peaks
        .windows(2)
        .map(|w| w[1].center - w[0].center)
        .fold(0.0, f64::max);
    let min_fwhm = p.peaks.iter().map(|x| x.fwhm).fold(f64::INFINITY, f64::min);
    let partner_peaks = p.partner.as_ref().map_or(0, |q| q.peaks.len());
    format!(
        "{index}\t{}\t{shape}\t{}\t{mechanism}\t{}\t{partner_peaks}\t{min_fwhm}\t{splitting}",
        p.seed,
        p.peaks.len(),
        p.mix_weight
    )
}

pub const PARAMS_HEADER: &str =
    "index\tseed\tshape\tn_peaks\tmechanism\tmix_weight\tpartner_peaks\tmin_fwhm_uev\tmax_splitting_uev";

/// Parsed row of `params_<split>.tsv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleSummary {
    pub index: usize,
    pub seed: u64,
    pub sideband: bool,
    pub n_peaks: usize,
    pub poisson: bool,
    pub mix_weight: f64,
}

impl ExampleSummary {
    /// Unmixed Lorentzian spectrum with exactly two lines.
    pub fn is_two_peak(&self) -> bool {
        !self.sideband && self.n_peaks == 2 && self.mix_weight == 0.0
    }
}

const CHUNK: usize = 64;

/// Generates and writes a full dataset under `root`.
///
/// Examples are generated in parallel and written in index order, so the output is
/// byte-identical for any worker count.
pub fn build_dataset(config: &DatasetConfig, root: &Path) -> Result<DatasetManifest> {
    config.validate()?;
    let grids = config.grid.build()?;
    let plan = config.input_plan()?;
    let intensity_scale = config
        .intensity_scale
        .unwrap_or_else(|| NoiseSpec::calibrated_scale(&grids.tau, config.noise_counts));
    let widths = bin_widths(&grids.tau);
    let width_norm = widths.iter().cloned().fold(0.0, f64::max);
    let counts = config.counts();

    let records_dir = root.join("records");
    fs::create_dir_all(&records_dir).map_err(|e| Error::io(&records_dir, e))?;

    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(w) = config.workers {
            b = b.num_threads(w);
        }
        b.build().map_err(|e| Error::Numerical(format!("thread pool: {e}")))?
    };

    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    let mut n_values = 0usize;
    let mut contrast = None;

    for split in Split::ALL {
        let n = counts.get(split);
        let ranges = if split == Split::Test { &config.test_ranges } else { &config.ranges };
        let params_path = split.params_path(root);
        let mut table = String::from(PARAMS_HEADER);
        table.push('\n');
        for start in (0..n).step_by(CHUNK) {
            let end = (start + CHUNK).min(n);
            let batch: Vec<Result<(Record, String, f64)>> = pool.install(|| {
                (start..end)
                    .into_par_iter()
                    .map(|i| {
                        let seed = example_seed(config.seed, split, i);
                        let params = sample_params(seed, ranges, &config.grid, intensity_scale)?;
                        let ex = make_example(&params, &plan)?;
                        Ok((Record::from_example(&ex), describe(i, &params), ex.target.contrast))
                    })
                    .collect()
            });
            for (offset, item) in batch.into_iter().enumerate() {
                let i = start + offset;
                let (record, line, kappa) = item?;
                let path = split.record_path(root, i);
                fs::write(&path, record.encode()).map_err(|e| Error::io(&path, e))?;
                table.push_str(&line);
                table.push('\n');
                contrast.get_or_insert(kappa);
                if split == Split::Train {
                    for &g in &record.target {
                        let y = 1.0 - g as f64;
                        sum += y;
                        sum_sq += y * y;
                    }
                    n_values += record.target.len();
                }
            }
        }
        fs::write(&params_path, table).map_err(|e| Error::io(&params_path, e))?;
    }

    let normalization = if n_values > 1 {
        let mean = sum / n_values as f64;
        let var = (sum_sq / n_values as f64 - mean * mean).max(0.0);
        let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        Normalization { mean, scale }
    } else {
        Normalization::IDENTITY
    };

    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        counts,
        train_fraction: config.train_fraction,
        grid: config.grid,
        input_t: plan.indices.iter().map(|&j| grids.delay.values()[j]).collect(),
        input_indices: plan.indices,
        input_window: config.input_window,
        train_ranges: config.ranges.clone(),
        test_ranges: config.test_ranges.clone(),
        global_seed: config.seed,
        intensity_scale,
        width_norm,
        normalization,
        contrast: contrast.unwrap_or(config.ranges.contrast.min),
        created: config.created.clone(),
    };
    let path = root.join(MANIFEST_FILE);
    let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    f.write_all(manifest.to_text().as_bytes())
        .map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// An opened dataset directory.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
    /// FNV-1a of the manifest file.
    pub manifest_hash: u64,
}

impl Dataset {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let (manifest, manifest_hash) = DatasetManifest::read(&root)?;
        Ok(Self {
            root,
            manifest,
            manifest_hash,
        })
    }

    /// Streams the records of one split, validating each as it is read.
    pub fn records(&self, split: Split) -> RecordIter<'_> {
        RecordIter {
            dataset: self,
            split,
            next: 0,
            len: self.manifest.counts.get(split),
        }
    }

    pub fn load_split(&self, split: Split) -> Result<Vec<Record>> {
        self.records(split).collect()
    }

    pub fn summaries(&self, split: Split) -> Result<Vec<ExampleSummary>> {
        let path = split.params_path(&self.root);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let bad = |n: usize| Error::format(path.display().to_string(), format!("row {n}"));
        text.lines()
            .enumerate()
            .skip(1)
            .map(|(n, line)| {
                let f: Vec<&str> = line.split('\t').collect();
                if f.len() < 6 {
                    return Err(bad(n + 1));
                }
                Ok(ExampleSummary {
                    index: f[0].parse().map_err(|_| bad(n + 1))?,
                    seed: f[1].parse().map_err(|_| bad(n + 1))?,
                    sideband: f[2] == "sideband",
                    n_peaks: f[3].parse().map_err(|_| bad(n + 1))?,
                    poisson: f[4] == "poisson",
                    mix_weight: f[5].parse().map_err(|_| bad(n + 1))?,
                })
            })
            .collect()
    }

    fn validate(&self, split: Split, index: usize, r: &Record) -> Result<()> {
        let m = &self.manifest;
        let what = || format!("{} record {index}", split.name());
        if r.n_tau != m.grid.n_tau || r.n_t != m.grid.n_t || r.n_inputs() != m.input_indices.len() {
            return Err(Error::format(
                what(),
                format!(
                    "shape ({}, {}, {}) does not match manifest ({}, {}, {})",
                    r.n_tau,
                    r.n_t,
                    r.n_inputs(),
                    m.grid.n_tau,
                    m.grid.n_t,
                    m.input_indices.len()
                ),
            ));
        }
        if r.inputs.iter().chain(&r.t_values).any(|v| !v.is_finite()) {
            return Err(Error::format(what(), "non-finite input value"));
        }
        let lo = 1.0 - m.contrast - 1e-6;
        let hi = 1.0 + 1e-6;
        if let Some(v) = r.target.iter().find(|&&v| !(v as f64 >= lo && v as f64 <= hi)) {
            return Err(Error::format(what(), format!("target value {v} outside [{lo}, {hi}]")));
        }
        if r.t_values.iter().any(|&t| t as f64 > m.input_window + 1e-4) {
            return Err(Error::format(what(), "input delay beyond the input window"));
        }
        Ok(())
    }
}

pub struct RecordIter<'a> {
    dataset: &'a Dataset,
    split: Split,
    next: usize,
    len: usize,
}

impl Iterator for RecordIter<'_> {
    type Item = Result<Record>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.len {
            return None;
        }
        let i = self.next;
        self.next += 1;
        let path = self.split.record_path(&self.dataset.root, i);
        let what = format!("{} record {i}", self.split.name());
        Some(
            fs::read(&path)
                .map_err(|e| Error::io(&path, e))
                .and_then(|bytes| Record::decode(&bytes, &what))
                .and_then(|r| self.dataset.validate(self.split, i, &r).map(|_| r)),
        )
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.len - self.next;
        (n, Some(n))
    }
}

impl ExactSizeIterator for RecordIter<'_> {}

#[cfg(test)]
mod tests;
