//! Fixed-step RK4 integration built from differentiable ops, so gradients flow
//! through every solver step.

use super::Tensor;
use crate::{Error, Result};

/// Integrates `dh/ds = field(h, s)` from `h0` over `grid`, taking `substeps` equal
/// RK4 steps between consecutive grid points.
///
/// Returns one state per grid point, starting with `h0` itself.
pub fn ode_trajectory<F>(mut field: F, h0: &Tensor, grid: &[f64], substeps: usize) -> Result<Vec<Tensor>>
where
    F: FnMut(&Tensor, f64) -> Result<Tensor>,
{
    if grid.is_empty() {
        return Err(Error::invalid("s_grid", "empty grid"));
    }
    if grid[0] != 0.0 {
        return Err(Error::invalid("s_grid", format!("must start at 0, got {}", grid[0])));
    }
    if let Some(i) = grid.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::invalid(
            "s_grid",
            format!("must be strictly increasing, got {} then {} at index {i}", grid[i], grid[i + 1]),
        ));
    }
    if substeps == 0 {
        return Err(Error::invalid("substeps", "must be at least 1"));
    }
    let mut eval = |h: &Tensor, s: f64| -> Result<Tensor> {
        let k = field(h, s)?;
        if k.shape() != h.shape() {
            return Err(Error::Shape {
                op: "ode_solve",
                lhs: h.shape().to_vec(),
                rhs: k.shape().to_vec(),
            });
        }
        Ok(k)
    };
    let mut out = Vec::with_capacity(grid.len());
    out.push(h0.clone());
    let mut h = h0.clone();
    for w in grid.windows(2) {
        let dt = (w[1] - w[0]) / substeps as f64;
        for n in 0..substeps {
            let s = w[0] + n as f64 * dt;
            let k1 = eval(&h, s)?;
            let k2 = eval(&Tensor::lincomb(&[(&h, 1.0), (&k1, 0.5 * dt)])?, s + 0.5 * dt)?;
            let k3 = eval(&Tensor::lincomb(&[(&h, 1.0), (&k2, 0.5 * dt)])?, s + 0.5 * dt)?;
            let k4 = eval(&Tensor::lincomb(&[(&h, 1.0), (&k3, dt)])?, s + dt)?;
            h = Tensor::lincomb(&[
                (&h, 1.0),
                (&k1, dt / 6.0),
                (&k2, dt / 3.0),
                (&k3, dt / 3.0),
                (&k4, dt / 6.0),
            ])?;
        }
        out.push(h.clone());
    }
    Ok(out)
}

/// Like [`ode_trajectory`], stacked into `[batch, n_s, z]` for `h0: [batch, z]`.
pub fn ode_solve<F>(field: F, h0: &Tensor, grid: &[f64], substeps: usize) -> Result<Tensor>
where
    F: FnMut(&Tensor, f64) -> Result<Tensor>,
{
    let states = ode_trajectory(field, h0, grid, substeps)?;
    Tensor::stack(&states, 1)
}
