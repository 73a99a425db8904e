//! Central finite-difference check of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Tensor;
use crate::Result;

/// Result for one input tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct InputCheck {
    pub index: usize,
    pub max_abs_error: f64,
    /// `max |analytic - numeric| / max(‖analytic‖∞, ‖numeric‖∞)`.
    pub rel_error: f64,
    pub has_nan: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub eps: f64,
    pub tolerance: f64,
    pub inputs: Vec<InputCheck>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.inputs.iter().all(|c| c.passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.inputs.iter().map(|c| c.rel_error).fold(0.0, f64::max)
    }
}

/// Floor on the gradient scale, so that vanishing gradients are compared absolutely.
const SCALE_FLOOR: f64 = 1e-6;

/// Compares the gradient of `f` with respect to each of `inputs` against central
/// differences with step `eps`.
///
/// Non-scalar outputs are reduced with fixed pseudo-random weights. `inputs` should be
/// parameters (`requires_grad`); their gradients are overwritten.
pub fn gradcheck<F>(f: F, inputs: &[Tensor], eps: f64, tolerance: f64) -> Result<GradcheckReport>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    let out = f(inputs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x6772_6164);
    let weights: Vec<f64> = (0..out.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let project = |t: &Tensor| -> f64 { t.data().iter().zip(&weights).map(|(a, b)| a * b).sum() };

    for t in inputs {
        t.set_grad(None);
    }
    out.backward_with(weights.clone())?;
    drop(out);

    let mut checks = Vec::with_capacity(inputs.len());
    for (index, t) in inputs.iter().enumerate() {
        let analytic = t.grad_or_zeros();
        let mut numeric = vec![0.0; t.len()];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let orig = t.data()[i];
            t.data_mut()[i] = orig + eps;
            let plus = project(&super::no_grad(|| f(inputs))?);
            t.data_mut()[i] = orig - eps;
            let minus = project(&super::no_grad(|| f(inputs))?);
            t.data_mut()[i] = orig;
            *slot = (plus - minus) / (2.0 * eps);
        }
        let has_nan = analytic.iter().chain(&numeric).any(|v| !v.is_finite());
        let max_abs_error = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, n)| (a - n).abs())
            .fold(0.0, f64::max);
        let inf = |v: &[f64]| v.iter().map(|x| x.abs()).fold(0.0, f64::max);
        let scale = inf(&analytic).max(inf(&numeric)).max(SCALE_FLOOR);
        let rel_error = if has_nan { f64::NAN } else { max_abs_error / scale };
        checks.push(InputCheck {
            index,
            max_abs_error,
            rel_error,
            has_nan,
            passed: !has_nan && rel_error <= tolerance,
        });
    }
    Ok(GradcheckReport {
        eps,
        tolerance,
        inputs: checks,
    })
}
