//! Circular correlation and convolution on centered periodic arrays.
//!
//! "Centered" arrays store lag `m` at index `n/2 + m` (mod n), matching
//! [`EnergyGrid`](super::EnergyGrid). The FFT works on origin-indexed data, so
//! everything is rotated in and out of that layout here.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

pub(crate) fn to_origin(centered: &[f64]) -> Vec<f64> {
    let n = centered.len();
    let c = n / 2;
    (0..n).map(|j| centered[(j + c) % n]).collect()
}

pub(crate) fn to_centered(origin: &[f64]) -> Vec<f64> {
    let n = origin.len();
    let c = n / 2;
    (0..n).map(|k| origin[(k + n - c) % n]).collect()
}

pub(crate) fn forward(x: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

/// Inverse transform including the 1/n factor; returns the real part.
pub(crate) fn inverse_real(mut spec: Vec<Complex64>) -> Vec<f64> {
    let n = spec.len();
    FftPlanner::new().plan_fft_inverse(n).process(&mut spec);
    let inv = 1.0 / n as f64;
    spec.iter().map(|z| z.re * inv).collect()
}

/// `r[m] = Σ_i x[i] x[i+m]` on origin-indexed data.
pub(crate) fn circular_autocorrelation(x: &[f64]) -> Vec<f64> {
    let spec = forward(x).into_iter().map(|z| Complex64::new(z.norm_sqr(), 0.0)).collect();
    inverse_real(spec)
}

/// `(a ⊛ b)[m] = Σ_i a[i] b[m-i]` on centered arrays; the result is centered too.
pub(crate) fn circular_convolve_centered(a: &[f64], b: &[f64]) -> Vec<f64> {
    let fa = forward(&to_origin(a));
    let fb = forward(&to_origin(b));
    let prod = fa.iter().zip(&fb).map(|(x, y)| x * y).collect();
    to_centered(&inverse_real(prod))
}

/// Averages each point with its mirror through the zero-lag bin.
pub(crate) fn symmetrize_centered(v: &mut [f64]) {
    let n = v.len();
    let c = n / 2;
    for k in 0..n {
        let m = (2 * c + n - k) % n;
        if m > k {
            let avg = 0.5 * (v[k] + v[m]);
            v[k] = avg;
            v[m] = avg;
        }
    }
}
