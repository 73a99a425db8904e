use ndarray::Array2;
use rustfft::num_complex::Complex64;

use crate::{Error, Result};

use super::fft;
use super::{EnergyGrid, TauGrid};

/// Spectral diffusion mechanism acting along τ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiffusionSpec {
    /// Continuous Gaussian broadening with variance `2·D·τ`; `diffusivity` in µeV²/s.
    Wiener { diffusivity: f64 },
    /// Compound-Poisson Gaussian jumps: `rate` in 1/s, `jump_width` (σ of one jump) in µeV.
    /// Jump counts above `max_jumps` are folded into the last term.
    Poisson {
        rate: f64,
        jump_width: f64,
        max_jumps: usize,
    },
}

impl DiffusionSpec {
    pub const DEFAULT_MAX_JUMPS: usize = 32;

    pub fn validate(&self) -> Result<()> {
        match *self {
            DiffusionSpec::Wiener { diffusivity } => {
                if !(diffusivity.is_finite() && diffusivity > 0.0) {
                    return Err(Error::invalid("diffusion.diffusivity", format!("must be positive, got {diffusivity}")));
                }
            }
            DiffusionSpec::Poisson {
                rate,
                jump_width,
                max_jumps,
            } => {
                if !(rate.is_finite() && rate > 0.0) {
                    return Err(Error::invalid("diffusion.rate", format!("must be positive, got {rate}")));
                }
                if !(jump_width.is_finite() && jump_width > 0.0) {
                    return Err(Error::invalid("diffusion.jump_width", format!("must be positive, got {jump_width}")));
                }
                if max_jumps < 1 {
                    return Err(Error::invalid("diffusion.max_jumps", "must be at least 1"));
                }
            }
        }
        Ok(())
    }
}

/// Autocorrelation of the emission spectrum at each τ, on a centered ζ axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCorrelationMap {
    pub tau: TauGrid,
    pub zeta: EnergyGrid,
    /// `[n_tau, n_zeta]`
    pub values: Array2<f64>,
}

impl SpectralCorrelationMap {
    pub fn row_mass(&self, i: usize) -> f64 {
        self.values.row(i).sum() * self.zeta.spacing()
    }
}

fn wrap_limit(grid: &EnergyGrid) -> f64 {
    let q = grid.e_max() / 4.0;
    q * q
}

fn centered_gaussian(grid: &EnergyGrid, variance: f64) -> Vec<f64> {
    let n = grid.len();
    let mut g = vec![0.0; n];
    if variance <= 0.0 {
        g[grid.zero_index()] = 1.0;
        return g;
    }
    for (v, &z) in g.iter_mut().zip(grid.values()) {
        *v = (-z * z / (2.0 * variance)).exp();
    }
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= s);
    g
}

/// Poisson weights `P(n; mean)` for `n < max_jumps`, with the remaining mass on `max_jumps`.
pub(crate) fn folded_poisson_weights(mean: f64, max_jumps: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(max_jumps + 1);
    let mut p = (-mean).exp();
    let mut acc = 0.0;
    for n in 0..max_jumps {
        w.push(p);
        acc += p;
        p *= mean / (n + 1) as f64;
    }
    w.push((1.0 - acc).max(0.0));
    w
}

/// Unit-mass diffusion kernel at lag `tau` (seconds) on the centered ζ axis.
pub fn diffusion_kernel(spec: &DiffusionSpec, tau: f64, grid: &EnergyGrid) -> Result<Vec<f64>> {
    spec.validate()?;
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::invalid("tau", format!("must be positive, got {tau}")));
    }
    let limit = wrap_limit(grid);
    match *spec {
        DiffusionSpec::Wiener { diffusivity } => {
            let variance = 2.0 * diffusivity * tau;
            if variance > limit {
                return Err(Error::KernelWrap { variance, limit });
            }
            Ok(centered_gaussian(grid, variance))
        }
        DiffusionSpec::Poisson {
            rate,
            jump_width,
            max_jumps,
        } => {
            let weights = folded_poisson_weights(rate * tau, max_jumps);
            let mean_jumps: f64 = weights.iter().enumerate().map(|(n, w)| n as f64 * w).sum();
            let variance = mean_jumps * jump_width * jump_width;
            if variance > limit || jump_width * jump_width > limit {
                return Err(Error::KernelWrap { variance, limit });
            }
            let g_hat = fft::forward(&fft::to_origin(&centered_gaussian(grid, jump_width * jump_width)));
            // Σ_n w_n Ĝ^n by Horner's rule.
            let k_hat: Vec<Complex64> = g_hat
                .iter()
                .map(|&g| weights.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &w| acc * g + w))
                .collect();
            let mut k = fft::to_centered(&fft::inverse_real(k_hat));
            fft::symmetrize_centered(&mut k);
            k.iter_mut().for_each(|v| *v = v.max(0.0));
            let s: f64 = k.iter().sum();
            k.iter_mut().for_each(|v| *v /= s);
            Ok(k)
        }
    }
}

/// Convolves the static correlation with the diffusion kernel at every τ.
pub fn compose_spectral_correlation(
    rho_h: &[f64],
    spec: &DiffusionSpec,
    tau: &TauGrid,
    grid: &EnergyGrid,
) -> Result<SpectralCorrelationMap> {
    if rho_h.len() != grid.len() {
        return Err(Error::Shape {
            op: "compose_spectral_correlation",
            lhs: vec![rho_h.len()],
            rhs: vec![grid.len()],
        });
    }
    let mass: f64 = rho_h.iter().sum();
    let mut values = Array2::zeros((tau.len(), grid.len()));
    for (i, &t) in tau.values().iter().enumerate() {
        let kernel = diffusion_kernel(spec, t, grid)?;
        let mut row = fft::circular_convolve_centered(rho_h, &kernel);
        row.iter_mut().for_each(|v| *v = v.max(0.0));
        fft::symmetrize_centered(&mut row);
        let s: f64 = row.iter().sum();
        let scale = mass / s;
        for (dst, v) in values.row_mut(i).iter_mut().zip(&row) {
            *dst = v * scale;
        }
    }
    Ok(SpectralCorrelationMap {
        tau: tau.clone(),
        zeta: grid.clone(),
        values,
    })
}
