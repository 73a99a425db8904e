//! Inverse of the interferogram step: estimates the spectral correlation from a
//! g²(τ, t) map by a cosine transform of `(1 - g²)/κ` along t.

use std::f64::consts::PI;

use ndarray::Array2;

use crate::physics::{EnergyGrid, G2Map, SpectralCorrelationMap, HBAR_UEV_PS};
use crate::{Error, Result};

/// Relative tolerance on the spacing of the delay axis.
const UNIFORM_TOL: f64 = 1e-6;

/// Recovers `p̂(τ, ζ)` from a map on a uniform delay grid.
///
/// The ζ axis has `n_t` points spaced `2πħ / (n_t Δt)`. Rows come out with unit
/// mass (`Σ p̂ Δζ = 1`) when the map is exactly `1 - κ I` with `I(τ, 0) = 1`.
pub fn spectral_recover(map: &G2Map, contrast: f64) -> Result<SpectralCorrelationMap> {
    let (zeta, values) = recover_rows(&map.values, map.t.values(), contrast)?;
    Ok(SpectralCorrelationMap {
        tau: map.tau.clone(),
        zeta,
        values,
    })
}

/// Row-wise recovery on raw arrays; `t` must start at 0 and be uniformly spaced.
pub fn recover_rows(g2: &Array2<f64>, t: &[f64], contrast: f64) -> Result<(EnergyGrid, Array2<f64>)> {
    if !(contrast > 0.0 && contrast <= 1.0) {
        return Err(Error::invalid("contrast", format!("must lie in (0, 1], got {contrast}")));
    }
    let n = t.len();
    if g2.ncols() != n {
        return Err(Error::Shape {
            op: "spectral_recover",
            lhs: g2.shape().to_vec(),
            rhs: vec![g2.nrows(), n],
        });
    }
    if n < 2 {
        return Err(Error::invalid("t", "need at least 2 delays"));
    }
    let dt = t[1] - t[0];
    if t[0].abs() > UNIFORM_TOL * dt || !(dt > 0.0) {
        return Err(Error::invalid("t", "delay grid must start at 0 and increase"));
    }
    for (j, w) in t.windows(2).enumerate() {
        if ((w[1] - w[0]) - dt).abs() > UNIFORM_TOL * dt {
            return Err(Error::invalid(
                "t",
                format!("delay grid is not uniform: step {} at index {j} vs {dt}", w[1] - w[0]),
            ));
        }
    }
    let dzeta = 2.0 * PI * HBAR_UEV_PS / (n as f64 * dt);
    let zeta = EnergyGrid::new(n, dzeta)?;
    let center = zeta.zero_index() as i64;
    let cosines = Array2::from_shape_fn((n, n), |(j, k)| {
        // Reduce m·j modulo n before scaling so the phase stays exact for large grids.
        let m = (k as i64 - center).rem_euclid(n as i64) as u64;
        let phase = (m * j as u64 % n as u64) as f64 / n as f64;
        (2.0 * PI * phase).cos()
    });
    let interferogram = g2.mapv(|v| (1.0 - v) / contrast);
    let mut values = interferogram.dot(&cosines);
    let norm = 1.0 / (n as f64 * dzeta);
    values.mapv_inplace(|v| v * norm);
    Ok((zeta, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{GridSpec, SimParams};
    use crate::physics::{simulate, DelayGrid, DiffusionSpec, Peak, TauGrid};

    fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        (num / den).sqrt()
    }

    fn unit_sum(v: &[f64]) -> Vec<f64> {
        let s: f64 = v.iter().sum();
        v.iter().map(|x| x / s).collect()
    }

    #[test]
    fn full_nyquist_round_trip() {
        let params = SimParams {
            peaks: vec![Peak::lorentzian(-100.0, 8.0, 1.0), Peak::with_sideband(100.0, 15.0, 0.6, 0.3, 60.0)],
            diffusion: DiffusionSpec::Poisson {
                rate: 300.0,
                jump_width: 20.0,
                max_jumps: 32,
            },
            grid: GridSpec::full_nyquist(512, 10.0, 16),
            ..SimParams::example()
        };
        let sim = simulate(&params).unwrap();
        let p_hat = spectral_recover(&sim.clean, params.contrast).unwrap();
        assert_eq!(p_hat.zeta.len(), 512);
        assert!((p_hat.zeta.spacing() - 10.0).abs() < 1e-9);
        for i in 0..16 {
            let truth = unit_sum(sim.correlation.values.row(i).as_slice().unwrap());
            let got = unit_sum(p_hat.values.row(i).as_slice().unwrap());
            assert!(rel_l2(&got, &truth) < 1e-6, "row {i}");
            assert!((p_hat.row_mass(i) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn flat_map_recovers_nothing() {
        let g2 = Array2::ones((3, 50));
        let t = DelayGrid::uniform(50, 65.0).unwrap();
        let (_, p) = recover_rows(&g2, t.values(), 0.5).unwrap();
        assert!(p.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_uniform_delays_are_rejected() {
        let g2 = Array2::ones((1, 4));
        let err = recover_rows(&g2, &[0.0, 1.0, 2.5, 3.0], 0.5).unwrap_err();
        assert!(err.to_string().contains("not uniform"), "{err}");
    }

    #[test]
    fn lorentzian_recovers_doubled_width() {
        let gamma = 20.0;
        let params = SimParams {
            peaks: vec![Peak::lorentzian(0.0, gamma, 1.0)],
            diffusion: DiffusionSpec::Wiener { diffusivity: 1e-6 },
            grid: GridSpec {
                tau_min: TauGrid::DEFAULT_MIN,
                ..GridSpec::full_nyquist(2048, 1.0, 2)
            },
            ..SimParams::example()
        };
        let sim = simulate(&params).unwrap();
        let p = spectral_recover(&sim.clean, 0.5).unwrap();
        let row = p.values.row(0);
        let c = p.zeta.zero_index();
        let half = row[c] / 2.0;
        let mut k = c;
        while row[k + 1] > half {
            k += 1;
        }
        let frac = (row[k] - half) / (row[k] - row[k + 1]);
        let fwhm = 2.0 * ((k - c) as f64 + frac) * p.zeta.spacing();
        assert!((fwhm / (2.0 * gamma) - 1.0).abs() < 0.05, "fwhm {fwhm}");
    }
}
