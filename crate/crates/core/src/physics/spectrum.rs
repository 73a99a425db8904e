use crate::{Error, Result};

use super::fft;
use super::EnergyGrid;

/// Line shape of one emission component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PeakShape {
    Lorentzian,
    /// Zero-phonon Lorentzian plus a one-sided acoustic sideband
    /// `weight · (x/cutoff)³ · exp(-(x/cutoff)²)` for `x = ω - ω₀ > 0`,
    /// scaled by the peak amplitude.
    LorentzianWithSideband { weight: f64, cutoff: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub shape: PeakShape,
    /// µeV
    pub center: f64,
    /// µeV
    pub fwhm: f64,
    pub amplitude: f64,
}

impl Peak {
    pub fn lorentzian(center: f64, fwhm: f64, amplitude: f64) -> Self {
        Self {
            shape: PeakShape::Lorentzian,
            center,
            fwhm,
            amplitude,
        }
    }

    pub fn with_sideband(center: f64, fwhm: f64, amplitude: f64, weight: f64, cutoff: f64) -> Self {
        Self {
            shape: PeakShape::LorentzianWithSideband { weight, cutoff },
            center,
            fwhm,
            amplitude,
        }
    }

    pub fn intensity_at(&self, omega: f64) -> f64 {
        let d = omega - self.center;
        let hw = 0.5 * self.fwhm;
        let mut v = self.amplitude * hw * hw / (d * d + hw * hw);
        if let PeakShape::LorentzianWithSideband { weight, cutoff } = self.shape {
            if d > 0.0 {
                let x = d / cutoff;
                v += self.amplitude * weight * x * x * x * (-x * x).exp();
            }
        }
        v
    }

    fn validate(&self, index: usize, grid: &EnergyGrid) -> Result<()> {
        let field = |name: &str| format!("peaks[{index}].{name}");
        if !(self.fwhm.is_finite() && self.fwhm > 0.0) {
            return Err(Error::invalid(field("fwhm"), format!("must be positive, got {}", self.fwhm)));
        }
        if !(self.amplitude.is_finite() && self.amplitude > 0.0) {
            return Err(Error::invalid(
                field("amplitude"),
                format!("must be positive, got {}", self.amplitude),
            ));
        }
        let lo = grid.values()[0];
        let hi = grid.values()[grid.len() - 1];
        if !(self.center > lo && self.center < hi) {
            return Err(Error::invalid(
                field("center"),
                format!("{} µeV lies outside the grid interior ({lo}, {hi})", self.center),
            ));
        }
        if let PeakShape::LorentzianWithSideband { weight, cutoff } = self.shape {
            if !(weight.is_finite() && weight >= 0.0) {
                return Err(Error::invalid(field("sideband_weight"), format!("must be >= 0, got {weight}")));
            }
            if !(cutoff.is_finite() && cutoff > 0.0) {
                return Err(Error::invalid(field("sideband_cutoff"), format!("must be positive, got {cutoff}")));
            }
        }
        Ok(())
    }
}

/// Static homogeneous emission spectrum sampled on an energy grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub grid: EnergyGrid,
    pub intensity: Vec<f64>,
    pub components: Vec<Peak>,
}

impl Spectrum {
    pub fn mass(&self) -> f64 {
        self.intensity.iter().sum::<f64>() * self.grid.spacing()
    }
}

pub fn build_spectrum(components: &[Peak], grid: &EnergyGrid) -> Result<Spectrum> {
    if components.is_empty() || components.len() > 3 {
        return Err(Error::invalid(
            "peaks",
            format!("need 1 to 3 components, got {}", components.len()),
        ));
    }
    for (i, p) in components.iter().enumerate() {
        p.validate(i, grid)?;
    }
    let intensity: Vec<f64> = grid
        .values()
        .iter()
        .map(|&w| components.iter().map(|p| p.intensity_at(w)).sum())
        .collect();
    let spectrum = Spectrum {
        grid: grid.clone(),
        intensity,
        components: components.to_vec(),
    };
    let mass = spectrum.mass();
    if !(mass.is_finite() && mass > 0.0) {
        return Err(Error::Numerical(format!("spectrum integrates to {mass}")));
    }
    Ok(spectrum)
}

/// Circular autocorrelation `ρ_h(ζ) = Σ_ω s(ω) s(ω+ζ) Δω` on the centered ζ axis of
/// the spectrum's grid, computed through the correlation theorem.
pub fn autocorrelate(spectrum: &Spectrum) -> Vec<f64> {
    let dw = spectrum.grid.spacing();
    let r = fft::circular_autocorrelation(&fft::to_origin(&spectrum.intensity));
    let mut rho = fft::to_centered(&r);
    fft::symmetrize_centered(&mut rho);
    for v in &mut rho {
        *v = v.max(0.0) * dw;
    }
    rho
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn direct_autocorrelation(s: &[f64], dw: f64) -> Vec<f64> {
        let n = s.len();
        let c = n / 2;
        (0..n)
            .map(|k| {
                let m = (k + n - c) % n;
                (0..n).map(|i| s[i] * s[(i + m) % n]).sum::<f64>() * dw
            })
            .collect()
    }

    fn rel_inf(a: &[f64], b: &[f64]) -> f64 {
        let num = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let den = b.iter().map(|x| x.abs()).fold(0.0, f64::max);
        num / den
    }

    #[test]
    fn lorentzian_peak_and_half_width() {
        let g = EnergyGrid::for_simulation(512, 2.5).unwrap();
        let s = build_spectrum(&[Peak::lorentzian(0.0, 10.0, 1.0)], &g).unwrap();
        assert_eq!(s.intensity[g.zero_index()], 1.0);
        let p = Peak::lorentzian(0.0, 10.0, 1.0);
        assert_eq!(p.intensity_at(5.0), 0.5);
        assert_eq!(p.intensity_at(-5.0), 0.5);
    }

    #[test]
    fn symmetric_pair_gives_symmetric_spectrum() {
        let g = EnergyGrid::for_simulation(512, 2.0).unwrap();
        let s = build_spectrum(
            &[Peak::lorentzian(-50.0, 8.0, 1.0), Peak::lorentzian(50.0, 8.0, 1.0)],
            &g,
        )
        .unwrap();
        for k in 1..g.len() {
            let m = g.mirror_index(k);
            assert!((s.intensity[k] - s.intensity[m]).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_components() {
        let g = EnergyGrid::for_simulation(256, 1.0).unwrap();
        assert!(build_spectrum(&[], &g).is_err());
        assert!(build_spectrum(&[Peak::lorentzian(0.0, 0.0, 1.0)], &g).is_err());
        assert!(build_spectrum(&[Peak::lorentzian(500.0, 2.0, 1.0)], &g).is_err());
        let four = [Peak::lorentzian(0.0, 2.0, 1.0); 4];
        assert!(build_spectrum(&four, &g).is_err());
    }

    #[test]
    fn sideband_is_one_sided() {
        let p = Peak::with_sideband(0.0, 4.0, 1.0, 0.3, 60.0);
        let l = Peak::lorentzian(0.0, 4.0, 1.0);
        assert_eq!(p.intensity_at(-80.0), l.intensity_at(-80.0));
        assert!(p.intensity_at(80.0) > l.intensity_at(80.0));
    }

    #[test]
    fn autocorrelation_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [256usize, 512, 1024] {
            let grid = EnergyGrid::for_simulation(n, 1.5).unwrap();
            let s: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let spec = Spectrum {
                grid,
                intensity: s.clone(),
                components: vec![],
            };
            let fast = autocorrelate(&spec);
            let slow = direct_autocorrelation(&s, 1.5);
            assert!(rel_inf(&fast, &slow) < 1e-10, "n = {n}");
        }
    }

    #[test]
    fn autocorrelation_symmetric_with_peak_at_zero() {
        let g = EnergyGrid::for_simulation(512, 3.0).unwrap();
        let s = build_spectrum(
            &[
                Peak::lorentzian(-120.0, 6.0, 1.0),
                Peak::with_sideband(30.0, 12.0, 0.6, 0.4, 50.0),
            ],
            &g,
        )
        .unwrap();
        let rho = autocorrelate(&s);
        let c = g.zero_index();
        let max = rho.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(rho[c], max);
        for k in 0..g.len() {
            let m = g.mirror_index(k);
            assert!((rho[k] - rho[m]).abs() <= 1e-10 * max);
        }
    }
}
