use std::f64::consts::PI;

use crate::{Error, Result};

use super::HBAR_UEV_PS;

/// Periodic, uniformly spaced energy axis in µeV.
///
/// Point `k` sits at `(k - n/2) * spacing`, so the zero-energy bin is at index `n/2`
/// and the axis covers `[-E_max, E_max)` with `E_max = (n/2) * spacing`. Circular
/// operations treat `-E_max` and `+E_max` as the same point.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyGrid {
    values: Vec<f64>,
    spacing: f64,
}

impl EnergyGrid {
    /// Smallest grid accepted by the simulator.
    pub const MIN_SIM_LEN: usize = 256;

    pub fn new(len: usize, spacing: f64) -> Result<Self> {
        if len < 2 {
            return Err(Error::invalid("n_zeta", format!("need at least 2 points, got {len}")));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::invalid("zeta_step", format!("must be positive, got {spacing}")));
        }
        let center = (len / 2) as f64;
        let values = (0..len).map(|k| (k as f64 - center) * spacing).collect();
        Ok(Self { values, spacing })
    }

    /// Grid sizes the forward simulator works on: even and at least [`Self::MIN_SIM_LEN`].
    pub fn for_simulation(len: usize, spacing: f64) -> Result<Self> {
        if len < Self::MIN_SIM_LEN || len % 2 != 0 {
            return Err(Error::invalid(
                "n_zeta",
                format!("simulation grids must be even and >= {}, got {len}", Self::MIN_SIM_LEN),
            ));
        }
        Self::new(len, spacing)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn zero_index(&self) -> usize {
        self.len() / 2
    }

    pub fn e_max(&self) -> f64 {
        (self.len() / 2) as f64 * self.spacing
    }

    /// Index of the point mirrored through ζ = 0 on the periodic axis.
    pub fn mirror_index(&self, k: usize) -> usize {
        let n = self.len();
        let c = self.zero_index();
        (2 * c + n - k) % n
    }

    /// Delay step of the discrete Fourier conjugate of this axis, in ps.
    pub fn conjugate_delay_step(&self) -> f64 {
        2.0 * PI * HBAR_UEV_PS / (self.len() as f64 * self.spacing)
    }

    /// Largest delay at which the discrete cosine sum is still a distinct sample of
    /// one period, in ps.
    pub fn max_delay(&self) -> f64 {
        (self.len() - 1) as f64 * self.conjugate_delay_step()
    }
}

/// Logarithmically spaced photon-arrival lag axis, in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct TauGrid {
    values: Vec<f64>,
}

impl TauGrid {
    pub const DEFAULT_MIN: f64 = 1e-7;
    pub const DEFAULT_MAX: f64 = 1e-1;

    pub fn log(len: usize, min: f64, max: f64) -> Result<Self> {
        if len < 2 {
            return Err(Error::invalid("n_tau", format!("need at least 2 points, got {len}")));
        }
        if !(min > 0.0 && max > min && max.is_finite()) {
            return Err(Error::invalid("tau_range", format!("need 0 < min < max, got [{min}, {max}]")));
        }
        let (lmin, lmax) = (min.ln(), max.ln());
        let last = (len - 1) as f64;
        let mut values: Vec<f64> = (0..len)
            .map(|i| (lmin + (lmax - lmin) * i as f64 / last).exp())
            .collect();
        values[0] = min;
        values[len - 1] = max;
        Ok(Self { values })
    }

    /// 0.1 µs to 100 ms.
    pub fn standard(len: usize) -> Result<Self> {
        Self::log(len, Self::DEFAULT_MIN, Self::DEFAULT_MAX)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Constant ratio between consecutive points.
    pub fn ratio(&self) -> f64 {
        let n = self.len();
        (self.values[n - 1] / self.values[0]).powf(1.0 / (n - 1) as f64)
    }
}

/// Uniform interferometer delay axis starting at zero, in ps.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayGrid {
    values: Vec<f64>,
    step: f64,
}

impl DelayGrid {
    pub fn uniform(len: usize, t_max: f64) -> Result<Self> {
        if len < 2 {
            return Err(Error::invalid("n_t", format!("need at least 2 points, got {len}")));
        }
        if !(t_max.is_finite() && t_max > 0.0) {
            return Err(Error::invalid("t_max", format!("must be positive, got {t_max}")));
        }
        let step = t_max / (len - 1) as f64;
        let mut values: Vec<f64> = (0..len).map(|j| j as f64 * step).collect();
        values[len - 1] = t_max;
        Ok(Self { values, step })
    }

    /// Delay grid conjugate to `energy`: one full period sampled at `energy.len()` points,
    /// so the cosine transform between the two axes is exactly invertible.
    pub fn full_nyquist(energy: &EnergyGrid) -> Self {
        let step = energy.conjugate_delay_step();
        let values = (0..energy.len()).map(|j| j as f64 * step).collect();
        Self { values, step }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn t_max(&self) -> f64 {
        self.values[self.len() - 1]
    }
}
