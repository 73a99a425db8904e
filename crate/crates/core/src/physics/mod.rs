//! Forward model of a PCFS experiment: emission spectrum → spectral correlation with
//! diffusion along τ → interferogram along t → clean g²(τ, t).

mod diffusion;
pub(crate) mod fft;
mod grid;
mod spectrum;

use ndarray::Array2;

pub use diffusion::{compose_spectral_correlation, diffusion_kernel, DiffusionSpec, SpectralCorrelationMap};
pub use grid::{DelayGrid, EnergyGrid, TauGrid};
pub use spectrum::{autocorrelate, build_spectrum, Peak, PeakShape, Spectrum};

use crate::dataset::SimParams;
use crate::{Error, Result};

/// ħ in µeV·ps; bridges the energy axis (µeV) and the delay axis (ps).
pub const HBAR_UEV_PS: f64 = 658.2119569;

/// Default interference contrast of the balanced interferometer.
pub const DEFAULT_CONTRAST: f64 = 0.5;

/// Upper tolerance on clean g² values above 1.
pub const G2_UPPER_SLACK: f64 = 1e-9;

/// g²(τ, t) sampled on a τ × t grid.
#[derive(Debug, Clone, PartialEq)]
pub struct G2Map {
    pub tau: TauGrid,
    pub t: DelayGrid,
    /// `[n_tau, n_t]`
    pub values: Array2<f64>,
    pub is_noisy: bool,
    pub contrast: f64,
}

impl G2Map {
    pub fn n_tau(&self) -> usize {
        self.tau.len()
    }

    pub fn n_t(&self) -> usize {
        self.t.len()
    }

    /// Checks the bounds a clean map must satisfy.
    pub fn check_clean_bounds(&self, slack: f64) -> Result<()> {
        let lo = 1.0 - self.contrast - slack;
        let hi = 1.0 + G2_UPPER_SLACK + slack;
        for ((i, j), &v) in self.values.indexed_iter() {
            if !(v >= lo && v <= hi) {
                return Err(Error::Numerical(format!(
                    "g² value {v} at (tau {i}, t {j}) outside [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

/// Output of one forward simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub clean: G2Map,
    pub correlation: SpectralCorrelationMap,
    /// `[n_tau, n_t]`, unit value at t = 0.
    pub interferogram: Array2<f64>,
}

/// Cosine transform of each correlation row onto the requested delays, normalised to
/// one at t = 0.
pub fn interferogram(p: &SpectralCorrelationMap, t: &DelayGrid) -> Result<Array2<f64>> {
    let max = p.zeta.max_delay();
    if t.t_max() > max * (1.0 + 1e-9) {
        return Err(Error::DelayOutOfRange { delay: t.t_max(), max });
    }
    let zeta = p.zeta.values();
    let cosines = Array2::from_shape_fn((zeta.len(), t.len()), |(k, j)| {
        (zeta[k] * t.values()[j] / HBAR_UEV_PS).cos()
    });
    let mut out = p.values.dot(&cosines);
    for mut row in out.rows_mut() {
        // t[0] = 0, so column 0 is the row mass.
        let norm = row[0];
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Numerical(format!("interferogram normalisation {norm}")));
        }
        // Between the conjugate grid points the truncated cosine sum can dip slightly
        // below zero; the transform of an autocorrelation cannot.
        row.mapv_inplace(|v| (v / norm).max(0.0));
    }
    Ok(out)
}

/// `g² = 1 - κ·I`.
pub fn g2_from_interferogram(
    interferogram: &Array2<f64>,
    tau: &TauGrid,
    t: &DelayGrid,
    contrast: f64,
) -> Result<G2Map> {
    if !(0.0..=1.0).contains(&contrast) {
        return Err(Error::invalid("contrast", format!("must lie in [0, 1], got {contrast}")));
    }
    if interferogram.dim() != (tau.len(), t.len()) {
        return Err(Error::Shape {
            op: "g2_from_interferogram",
            lhs: interferogram.shape().to_vec(),
            rhs: vec![tau.len(), t.len()],
        });
    }
    Ok(G2Map {
        tau: tau.clone(),
        t: t.clone(),
        values: interferogram.mapv(|v| 1.0 - contrast * v),
        is_noisy: false,
        contrast,
    })
}

/// Deterministic forward simulation of one experiment (no mixing, no noise).
pub fn simulate(params: &SimParams) -> Result<Simulation> {
    params.validate()?;
    let grids = params.grid.build()?;
    let spectrum = build_spectrum(&params.peaks, &grids.energy)?;
    let rho_h = autocorrelate(&spectrum);
    let correlation = compose_spectral_correlation(&rho_h, &params.diffusion, &grids.tau, &grids.energy)?;
    let interferogram = interferogram(&correlation, &grids.delay)?;
    let clean = g2_from_interferogram(&interferogram, &grids.tau, &grids.delay, params.contrast)?;
    Ok(Simulation {
        clean,
        correlation,
        interferogram,
    })
}

/// Number of direction reversals of a curve, ignoring steps smaller than `dead_band`.
///
/// Used as a machine count of oscillations along t.
pub fn count_turning_points(curve: &[f64], dead_band: f64) -> usize {
    let mut count = 0;
    let mut last_sign = 0i8;
    let mut anchor = match curve.first() {
        Some(&v) => v,
        None => return 0,
    };
    for &v in &curve[1..] {
        let d = v - anchor;
        if d.abs() <= dead_band {
            continue;
        }
        let sign = if d > 0.0 { 1 } else { -1 };
        if last_sign != 0 && sign != last_sign {
            count += 1;
        }
        last_sign = sign;
        anchor = v;
    }
    count
}
