//! Shot noise and input-curve extraction.
//!
//! Each τ bin of a clean map is scaled by an amplitude proportional to its width,
//! Poisson sampled, and scaled back. Narrow (small-τ) bins collect fewer counts and
//! therefore come out noisier.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

use crate::physics::{DelayGrid, G2Map, TauGrid};
use crate::{Error, Result};

/// Largest rate the sampler accepts (2^53).
pub const MAX_RATE: f64 = 9_007_199_254_740_992.0;

/// Rate below which the sampler inverts the CDF; PTRS rejection above.
const INVERSION_LIMIT: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Expected counts per unit relative bin width.
    pub intensity_scale: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.intensity_scale.is_finite() && self.intensity_scale > 0.0) {
            return Err(Error::invalid(
                "noise.intensity_scale",
                format!("must be positive, got {}", self.intensity_scale),
            ));
        }
        Ok(())
    }

    /// Scale at which the narrowest bin of `tau` expects `counts` counts for g² = 1.
    pub fn calibrated_scale(tau: &TauGrid, counts: f64) -> f64 {
        let w = bin_widths(tau);
        let max = w.iter().cloned().fold(0.0, f64::max);
        counts * max / w[0]
    }
}

/// Widths of the τ bins, with edges at the geometric midpoints between points.
///
/// The outermost edges are extrapolated with the neighbouring ratio, so a
/// log-uniform grid gives widths growing by exactly the grid ratio.
pub fn bin_widths(tau: &TauGrid) -> Vec<f64> {
    let v = tau.values();
    let n = v.len();
    let mut edges = Vec::with_capacity(n + 1);
    edges.push(v[0] * (v[0] / v[1]).sqrt());
    for i in 0..n - 1 {
        edges.push((v[i] * v[i + 1]).sqrt());
    }
    edges.push(v[n - 1] * (v[n - 1] / v[n - 2]).sqrt());
    edges.windows(2).map(|e| e[1] - e[0]).collect()
}

fn ln_factorial(k: f64) -> f64 {
    ln_gamma(k + 1.0)
}

/// Draws one Poisson variate with mean `rate`.
pub fn sample_poisson(rate: f64, rng: &mut impl Rng) -> Result<u64> {
    if !(rate.is_finite() && rate >= 0.0) {
        return Err(Error::Numerical(format!("invalid Poisson rate {rate}")));
    }
    if rate > MAX_RATE {
        return Err(Error::RateTooLarge(rate));
    }
    if rate == 0.0 {
        return Ok(0);
    }
    if rate < INVERSION_LIMIT {
        let u: f64 = rng.gen();
        let mut k = 0u64;
        let mut p = (-rate).exp();
        let mut cdf = p;
        while u > cdf {
            k += 1;
            p *= rate / k as f64;
            let next = cdf + p;
            if next == cdf {
                break;
            }
            cdf = next;
        }
        return Ok(k);
    }
    // Hörmann's transformed rejection with squeeze (PTRS).
    let smu = rate.sqrt();
    let b = 0.931 + 2.53 * smu;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let v_r = 0.9277 - 3.6224 / (b - 2.0);
    let ln_rate = rate.ln();
    loop {
        let u = rng.gen::<f64>() - 0.5;
        let v: f64 = rng.gen();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + rate + 0.43).floor();
        if us >= 0.07 && v <= v_r {
            return Ok(k as u64);
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -rate + k * ln_rate - ln_factorial(k);
        if lhs <= rhs {
            return Ok(k as u64);
        }
    }
}

/// Per-bin generator: a ChaCha stream selected by the bin's flat index, so draws do
/// not depend on the order in which bins are visited.
pub(crate) fn bin_rng(base: &ChaCha8Rng, stream: u64) -> ChaCha8Rng {
    let mut rng = base.clone();
    rng.set_stream(stream);
    rng.set_word_pos(0);
    rng
}

/// Shot-noise corrupted copy of a clean map.
pub fn add_shot_noise(clean: &G2Map, spec: &NoiseSpec) -> Result<G2Map> {
    if clean.is_noisy {
        return Err(Error::invalid("map", "shot noise must be applied to a clean map"));
    }
    spec.validate()?;
    let widths = bin_widths(&clean.tau);
    let w_max = widths.iter().cloned().fold(0.0, f64::max);
    let base = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_t = clean.n_t() as u64;
    let mut values = clean.values.clone();
    for ((i, j), v) in values.indexed_iter_mut() {
        let amp = spec.intensity_scale * widths[i] / w_max;
        let rate = *v * amp;
        let mut rng = bin_rng(&base, i as u64 * n_t + j as u64);
        let counts = sample_poisson(rate, &mut rng)?;
        *v = counts as f64 / amp;
    }
    Ok(G2Map {
        values,
        is_noisy: true,
        ..clean.clone()
    })
}

/// One measured correlation curve along τ at a fixed delay.
#[derive(Debug, Clone, PartialEq)]
pub struct InputCurve {
    /// ps
    pub t: f64,
    pub values: Vec<f64>,
}

/// Extracts the τ curves at the given delay indices.
///
/// `window`, when set, is the largest delay (ps) an input may sit at.
pub fn draw_input_slices(map: &G2Map, indices: &[usize], window: Option<f64>) -> Result<Vec<InputCurve>> {
    if indices.is_empty() {
        return Err(Error::invalid("input_indices", "need at least one index"));
    }
    for w in indices.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::invalid(
                "input_indices",
                format!("indices must be strictly increasing, got {} then {}", w[0], w[1]),
            ));
        }
    }
    let n_t = map.n_t();
    indices
        .iter()
        .map(|&j| {
            if j >= n_t {
                return Err(Error::invalid("input_indices", format!("index {j} out of range for {n_t} delays")));
            }
            let t = map.t.values()[j];
            if let Some(limit) = window {
                if t > limit + 1e-9 {
                    return Err(Error::invalid(
                        "input_indices",
                        format!("delay {t} ps at index {j} exceeds the input window of {limit} ps"),
                    ));
                }
            }
            Ok(InputCurve {
                t,
                values: map.values.column(j).to_vec(),
            })
        })
        .collect()
}

/// Default placement of `count` input delays: the grid points nearest to t = 0 and to
/// `count - 1` log-spaced targets between one grid step and `window`. A target whose
/// nearest point is taken moves to the next free point.
pub fn default_input_indices(t: &DelayGrid, count: usize, window: f64) -> Result<Vec<usize>> {
    let step = t.step();
    let last = ((window / step) + 1e-9).floor() as usize;
    let last = last.min(t.len() - 1);
    if count == 0 || last + 1 < count {
        return Err(Error::invalid(
            "input_indices",
            format!(
                "{count} inputs do not fit in the {window} ps window ({} grid points)",
                last + 1
            ),
        ));
    }
    let mut targets = vec![0.0];
    if count > 1 {
        let lo = step.ln();
        let hi = window.min(t.t_max()).ln();
        for k in 0..count - 1 {
            let frac = if count > 2 { k as f64 / (count - 2) as f64 } else { 1.0 };
            targets.push((lo + (hi - lo) * frac).exp());
        }
    }
    let mut out: Vec<usize> = Vec::with_capacity(count);
    for (n, &target) in targets.iter().enumerate() {
        let mut j = ((target / step).round() as usize).min(last);
        if let Some(&prev) = out.last() {
            j = j.max(prev + 1);
        }
        // Leave room for the remaining inputs.
        j = j.min(last + 1 - (count - n));
        out.push(j);
    }
    Ok(out)
}
