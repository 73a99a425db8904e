use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::noise::NoiseSpec;
use crate::physics::{DelayGrid, DiffusionSpec, EnergyGrid, Peak, TauGrid, DEFAULT_CONTRAST};
use crate::{Error, Result};

/// SplitMix64 finaliser; used to derive independent seeds from a base seed.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, tag: u64, index: u64) -> u64 {
    mix64(mix64(base ^ mix64(tag)) ^ index)
}

/// Sizes and extents of the three simulation axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub n_zeta: usize,
    /// µeV
    pub zeta_step: f64,
    pub n_tau: usize,
    /// s
    pub tau_min: f64,
    /// s
    pub tau_max: f64,
    pub n_t: usize,
    /// ps
    pub t_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grids {
    pub energy: EnergyGrid,
    pub tau: TauGrid,
    pub delay: DelayGrid,
}

impl GridSpec {
    /// 512 × 10 µeV energy axis, 128 τ points, 200 delays over 65 ps.
    pub fn reference() -> Self {
        Self {
            n_zeta: 512,
            zeta_step: 10.0,
            n_tau: 128,
            tau_min: TauGrid::DEFAULT_MIN,
            tau_max: TauGrid::DEFAULT_MAX,
            n_t: 200,
            t_max: 65.0,
        }
    }

    /// Reduced grid used for the desk-scale datasets: 64 τ points and 100 delays.
    pub fn desk() -> Self {
        Self {
            n_tau: 64,
            n_t: 100,
            ..Self::reference()
        }
    }

    /// Delay axis covering one full period of the energy axis.
    pub fn full_nyquist(n_zeta: usize, zeta_step: f64, n_tau: usize) -> Self {
        let step = EnergyGrid::new(n_zeta.max(2), zeta_step)
            .map(|g| g.conjugate_delay_step())
            .unwrap_or(f64::NAN);
        Self {
            n_zeta,
            zeta_step,
            n_tau,
            tau_min: TauGrid::DEFAULT_MIN,
            tau_max: TauGrid::DEFAULT_MAX,
            n_t: n_zeta,
            t_max: (n_zeta.saturating_sub(1)) as f64 * step,
        }
    }

    pub fn build(&self) -> Result<Grids> {
        Ok(Grids {
            energy: EnergyGrid::for_simulation(self.n_zeta, self.zeta_step)?,
            tau: TauGrid::log(self.n_tau, self.tau_min, self.tau_max)?,
            delay: DelayGrid::uniform(self.n_t, self.t_max)?,
        })
    }
}

/// Everything needed to simulate one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    pub peaks: Vec<Peak>,
    pub diffusion: DiffusionSpec,
    pub contrast: f64,
    pub grid: GridSpec,
    pub noise: NoiseSpec,
    /// Weight of `partner` in the mixed target; 0 disables mixing.
    pub mix_weight: f64,
    pub partner: Option<Box<SimParams>>,
    pub seed: u64,
}

impl SimParams {
    /// A single Lorentzian with Wiener diffusion on the reference grid.
    pub fn example() -> Self {
        Self {
            peaks: vec![Peak::lorentzian(0.0, 10.0, 1.0)],
            diffusion: DiffusionSpec::Wiener { diffusivity: 1e4 },
            contrast: DEFAULT_CONTRAST,
            grid: GridSpec::reference(),
            noise: NoiseSpec {
                intensity_scale: 2e7,
                seed: 0,
            },
            mix_weight: 0.0,
            partner: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.peaks.is_empty() || self.peaks.len() > 3 {
            return Err(Error::invalid("peaks", format!("need 1 to 3 components, got {}", self.peaks.len())));
        }
        self.diffusion.validate()?;
        if !(0.0..=1.0).contains(&self.contrast) {
            return Err(Error::invalid("contrast", format!("must lie in [0, 1], got {}", self.contrast)));
        }
        self.noise.validate()?;
        if !(0.0..=1.0).contains(&self.mix_weight) {
            return Err(Error::invalid("mix_weight", format!("must lie in [0, 1], got {}", self.mix_weight)));
        }
        if let Some(p) = &self.partner {
            if p.grid != self.grid {
                return Err(Error::invalid("partner.grid", "mix partner must share the grid"));
            }
            if p.contrast != self.contrast {
                return Err(Error::invalid("partner.contrast", "mix partner must share the contrast"));
            }
        }
        Ok(())
    }

    pub fn is_sideband(&self) -> bool {
        self.peaks
            .iter()
            .any(|p| matches!(p.shape, crate::physics::PeakShape::LorentzianWithSideband { .. }))
    }
}

/// Closed interval a parameter is drawn from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub const fn fixed(v: f64) -> Self {
        Self { min: v, max: v }
    }

    fn check(&self, name: &str, positive: bool) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite()) || self.min > self.max {
            return Err(Error::invalid(name, format!("empty range [{}, {}]", self.min, self.max)));
        }
        if positive && self.min <= 0.0 {
            return Err(Error::invalid(name, format!("range must be positive, got [{}, {}]", self.min, self.max)));
        }
        Ok(())
    }

    /// True when the two intervals share more than a single endpoint.
    pub fn overlaps(&self, other: &Range) -> bool {
        self.min.max(other.min) < self.max.min(other.max) || (self == other)
    }

    fn uniform(&self, rng: &mut impl Rng) -> f64 {
        let u: f64 = rng.gen();
        self.min + (self.max - self.min) * u
    }

    fn log_uniform(&self, rng: &mut impl Rng) -> f64 {
        let u: f64 = rng.gen();
        (self.min.ln() + (self.max.ln() - self.min.ln()) * u).exp()
    }
}

/// Sampling distribution of simulation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamRanges {
    /// µeV, log-uniform
    pub fwhm: Range,
    /// µeV between neighbouring peaks
    pub splitting: Range,
    pub amplitude: Range,
    pub sideband_weight: Range,
    /// µeV
    pub sideband_cutoff: Range,
    /// µeV²/s, log-uniform
    pub diffusivity: Range,
    /// 1/s, log-uniform
    pub jump_rate: Range,
    /// µeV
    pub jump_width: Range,
    pub mix_weight: Range,
    pub contrast: Range,
    pub sideband_probability: f64,
    pub poisson_probability: f64,
    pub mix_probability: f64,
    pub max_jumps: usize,
}

impl Default for ParamRanges {
    fn default() -> Self {
        Self {
            fwhm: Range::new(1.0, 50.0),
            splitting: Range::new(20.0, 500.0),
            amplitude: Range::new(0.2, 1.0),
            sideband_weight: Range::new(0.1, 0.5),
            sideband_cutoff: Range::new(30.0, 120.0),
            diffusivity: Range::new(1e1, 1e6),
            jump_rate: Range::new(1e1, 1e5),
            jump_width: Range::new(5.0, 100.0),
            mix_weight: Range::new(0.2, 0.8),
            contrast: Range::fixed(DEFAULT_CONTRAST),
            sideband_probability: 0.5,
            poisson_probability: 0.5,
            mix_probability: 0.5,
            max_jumps: DiffusionSpec::DEFAULT_MAX_JUMPS,
        }
    }
}

impl ParamRanges {
    /// Default held-out distribution: identical except for broader lines
    /// (fwhm drawn from [50, 65] µeV instead of [1, 50] µeV).
    pub fn shifted_test() -> Self {
        Self {
            fwhm: Range::new(50.0, 65.0),
            ..Self::default()
        }
    }

    /// Named ranges, in a fixed order.
    pub fn ranges(&self) -> [(&'static str, Range); 10] {
        [
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
        ]
    }

    pub fn range_mut(&mut self, name: &str) -> Option<&mut Range> {
        Some(match name {
            "fwhm" => &mut self.fwhm,
            "splitting" => &mut self.splitting,
            "amplitude" => &mut self.amplitude,
            "sideband_weight" => &mut self.sideband_weight,
            "sideband_cutoff" => &mut self.sideband_cutoff,
            "diffusivity" => &mut self.diffusivity,
            "jump_rate" => &mut self.jump_rate,
            "jump_width" => &mut self.jump_width,
            "mix_weight" => &mut self.mix_weight,
            "contrast" => &mut self.contrast,
            _ => return None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        const POSITIVE: [&str; 8] = [
            "fwhm",
            "splitting",
            "amplitude",
            "sideband_cutoff",
            "diffusivity",
            "jump_rate",
            "jump_width",
            "contrast",
        ];
        for (name, r) in self.ranges() {
            r.check(name, POSITIVE.contains(&name))?;
        }
        for (name, r) in [("mix_weight", self.mix_weight), ("contrast", self.contrast)] {
            if r.min < 0.0 || r.max > 1.0 {
                return Err(Error::invalid(name, format!("must lie within [0, 1], got [{}, {}]", r.min, r.max)));
            }
        }
        for (name, p) in [
            ("sideband_probability", self.sideband_probability),
            ("poisson_probability", self.poisson_probability),
            ("mix_probability", self.mix_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(name, format!("probability must lie in [0, 1], got {p}")));
            }
        }
        if self.max_jumps < 1 {
            return Err(Error::invalid("max_jumps", "must be at least 1"));
        }
        Ok(())
    }

    /// Fails unless at least one range of `test` is disjoint from the same range here.
    pub fn check_shifted(&self, test: &ParamRanges) -> Result<()> {
        let disjoint: Vec<&str> = self
            .ranges()
            .iter()
            .zip(test.ranges().iter())
            .filter(|((_, a), (_, b))| !a.overlaps(b))
            .map(|((n, _), _)| *n)
            .collect();
        if disjoint.is_empty() {
            let overlapping: Vec<&str> = self.ranges().iter().map(|(n, _)| *n).collect();
            return Err(Error::invalid(
                "test_ranges",
                format!(
                    "test ranges overlap the training ranges in every field ({}); shift at least one",
                    overlapping.join(", ")
                ),
            ));
        }
        Ok(())
    }
}

const PARTNER_TAG: u64 = 0x7061_7274;
const NOISE_TAG: u64 = 0x6e6f_6973;

/// Draws one parameter set. Identical seeds give identical parameters.
pub fn sample_params(seed: u64, ranges: &ParamRanges, grid: &GridSpec, intensity_scale: f64) -> Result<SimParams> {
    ranges.validate()?;
    let mut params = sample_unmixed(seed, ranges, grid, intensity_scale)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, PARTNER_TAG, 0));
    if rng.gen::<f64>() < ranges.mix_probability {
        let alpha = ranges.mix_weight.uniform(&mut rng);
        let mut partner = sample_unmixed(derive_seed(seed, PARTNER_TAG, 1), ranges, grid, intensity_scale)?;
        partner.contrast = params.contrast;
        params.mix_weight = alpha;
        params.partner = Some(Box::new(partner));
    }
    Ok(params)
}

fn sample_unmixed(seed: u64, ranges: &ParamRanges, grid: &GridSpec, intensity_scale: f64) -> Result<SimParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sideband = rng.gen::<f64>() < ranges.sideband_probability;
    let count = if sideband { rng.gen_range(1..=2) } else { rng.gen_range(1..=3) };

    let mut offsets = vec![0.0];
    for _ in 1..count {
        let last = *offsets.last().unwrap();
        offsets.push(last + ranges.splitting.uniform(&mut rng));
    }
    let mid = 0.5 * (offsets[0] + offsets[count - 1]);
    let mut peaks = Vec::with_capacity(count);
    for off in offsets {
        let fwhm = ranges.fwhm.log_uniform(&mut rng);
        let amplitude = ranges.amplitude.uniform(&mut rng);
        let center = off - mid;
        peaks.push(if sideband {
            let weight = ranges.sideband_weight.uniform(&mut rng);
            let cutoff = ranges.sideband_cutoff.uniform(&mut rng);
            Peak::with_sideband(center, fwhm, amplitude, weight, cutoff)
        } else {
            Peak::lorentzian(center, fwhm, amplitude)
        });
    }

    let diffusion = if rng.gen::<f64>() < ranges.poisson_probability {
        DiffusionSpec::Poisson {
            rate: ranges.jump_rate.log_uniform(&mut rng),
            jump_width: ranges.jump_width.uniform(&mut rng),
            max_jumps: ranges.max_jumps,
        }
    } else {
        DiffusionSpec::Wiener {
            diffusivity: ranges.diffusivity.log_uniform(&mut rng),
        }
    };
    let contrast = ranges.contrast.uniform(&mut rng);

    let params = SimParams {
        peaks,
        diffusion,
        contrast,
        grid: *grid,
        noise: NoiseSpec {
            intensity_scale,
            seed: derive_seed(seed, NOISE_TAG, 0),
        },
        mix_weight: 0.0,
        partner: None,
        seed,
    };
    params.validate()?;
    Ok(params)
}
