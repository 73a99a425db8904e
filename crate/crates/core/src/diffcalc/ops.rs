//! Differentiable operations on [`Tensor`].

use std::rc::Rc;

use super::{numel, Tensor};
use crate::{Error, Result};

fn shape_err(op: &'static str, a: &[usize], b: &[usize]) -> Error {
    Error::Shape {
        op,
        lhs: a.to_vec(),
        rhs: b.to_vec(),
    }
}

/// `c = op(a)·op(b)` for row-major `a` (logical `[m, k]`) and `b` (logical `[k, n]`);
/// a transposed operand is stored as the transpose of its logical shape.
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slices have exactly the lengths implied by the dimensions and
    // strides above, and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let n = a.len().max(b.len());
    let mut out = vec![0; n];
    for i in 0..n {
        let da = if i + a.len() >= n { a[i + a.len() - n] } else { 1 };
        let db = if i + b.len() >= n { b[i + b.len() - n] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// For each element of `out`, the flat index of the broadcast source in `inp`.
fn broadcast_map(out: &[usize], inp: &[usize]) -> Vec<usize> {
    let n = out.len();
    let mut strides = vec![0usize; n];
    let mut acc = 1;
    for i in (0..inp.len()).rev() {
        let o = i + n - inp.len();
        strides[o] = if inp[i] == 1 { 0 } else { acc };
        acc *= inp[i];
    }
    let total = numel(out);
    let mut map = Vec::with_capacity(total);
    let mut idx = vec![0usize; n];
    for _ in 0..total {
        map.push(idx.iter().zip(&strides).map(|(i, s)| i * s).sum());
        for d in (0..n).rev() {
            idx[d] += 1;
            if idx[d] < out[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    map
}

fn reduce(g: &[f64], map: &Option<Rc<Vec<usize>>>, len: usize) -> Vec<f64> {
    match map {
        None => g.to_vec(),
        Some(m) => {
            let mut out = vec![0.0; len];
            for (v, &i) in g.iter().zip(m.iter()) {
                out[i] += v;
            }
            out
        }
    }
}

type Partial = fn(f64, f64, f64) -> f64;

impl Tensor {
    fn binary(
        &self,
        other: &Tensor,
        name: &'static str,
        f: fn(f64, f64) -> f64,
        da: Partial,
        db: Partial,
    ) -> Result<Tensor> {
        let shape = broadcast_shape(self.shape(), other.shape())
            .ok_or_else(|| shape_err(name, self.shape(), other.shape()))?;
        let map_of = |s: &[usize]| (s != shape.as_slice()).then(|| Rc::new(broadcast_map(&shape, s)));
        let (ma, mb) = (map_of(self.shape()), map_of(other.shape()));
        let data = {
            let (a, b) = (self.data(), other.data());
            let n = numel(&shape);
            (0..n)
                .map(|i| {
                    let x = a[ma.as_ref().map_or(i, |m| m[i])];
                    let y = b[mb.as_ref().map_or(i, |m| m[i])];
                    f(x, y)
                })
                .collect()
        };
        Ok(Tensor::from_op(name, data, shape, vec![self.clone(), other.clone()], move |g, inputs, _| {
            let (a, b) = (inputs[0].data(), inputs[1].data());
            let pair = |i: usize| {
                let x = a[ma.as_ref().map_or(i, |m| m[i])];
                let y = b[mb.as_ref().map_or(i, |m| m[i])];
                (x, y)
            };
            let ga = inputs[0].requires_grad().then(|| {
                let full: Vec<f64> = g.iter().enumerate().map(|(i, &gi)| {
                    let (x, y) = pair(i);
                    da(x, y, gi)
                }).collect();
                reduce(&full, &ma, a.len())
            });
            let gb = inputs[1].requires_grad().then(|| {
                let full: Vec<f64> = g.iter().enumerate().map(|(i, &gi)| {
                    let (x, y) = pair(i);
                    db(x, y, gi)
                }).collect();
                reduce(&full, &mb, b.len())
            });
            vec![ga, gb]
        }))
    }

    /// Elementwise sum with broadcasting over leading / unit dimensions.
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, "add", |x, y| x + y, |_, _, g| g, |_, _, g| g)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, "sub", |x, y| x - y, |_, _, g| g, |_, _, g| -g)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, "mul", |x, y| x * y, |_, y, g| g * y, |x, _, g| g * x)
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, "div", |x, y| x / y, |_, y, g| g / y, |x, y, g| -g * x / (y * y))
    }

    fn unary(&self, name: &'static str, f: impl Fn(f64) -> f64, df: fn(f64, f64, f64) -> f64) -> Tensor {
        let data = self.data().iter().map(|&x| f(x)).collect();
        Tensor::from_op(name, data, self.shape().to_vec(), vec![self.clone()], move |g, inputs, out| {
            let x = inputs[0].data();
            vec![Some(g.iter().zip(x.iter()).zip(out).map(|((&g, &x), &y)| df(x, y, g)).collect())]
        })
    }

    pub fn scale(&self, c: f64) -> Tensor {
        let data = self.data().iter().map(|&x| c * x).collect();
        Tensor::from_op("scale", data, self.shape().to_vec(), vec![self.clone()], move |g, _, _| {
            vec![Some(g.iter().map(|v| c * v).collect())]
        })
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        self.unary("add_scalar", |x| x + c, |_, _, g| g)
    }

    pub fn neg(&self) -> Tensor {
        self.scale(-1.0)
    }

    pub fn square(&self) -> Tensor {
        self.unary("square", |x| x * x, |x, _, g| 2.0 * x * g)
    }

    pub fn exp(&self) -> Tensor {
        self.unary("exp", f64::exp, |_, y, g| y * g)
    }

    pub fn sigmoid(&self) -> Tensor {
        self.unary("sigmoid", sigmoid, |_, y, g| g * y * (1.0 - y))
    }

    pub fn tanh(&self) -> Tensor {
        self.unary("tanh", f64::tanh, |_, y, g| g * (1.0 - y * y))
    }

    pub fn relu(&self) -> Tensor {
        self.unary("relu", |x| x.max(0.0), |x, _, g| if x > 0.0 { g } else { 0.0 })
    }

    /// `Σ c_i · t_i` over same-shaped tensors.
    pub fn lincomb(terms: &[(&Tensor, f64)]) -> Result<Tensor> {
        let first = terms.first().ok_or_else(|| Error::invalid("lincomb", "no terms"))?.0;
        let shape = first.shape().to_vec();
        let mut data = vec![0.0; first.len()];
        for (t, c) in terms {
            if t.shape() != shape.as_slice() {
                return Err(shape_err("lincomb", &shape, t.shape()));
            }
            for (d, v) in data.iter_mut().zip(t.data().iter()) {
                *d += c * v;
            }
        }
        let coeffs: Vec<f64> = terms.iter().map(|(_, c)| *c).collect();
        let inputs = terms.iter().map(|(t, _)| (*t).clone()).collect();
        Ok(Tensor::from_op("lincomb", data, shape, inputs, move |g, inputs, _| {
            inputs
                .iter()
                .zip(&coeffs)
                .map(|(t, &c)| t.requires_grad().then(|| g.iter().map(|v| c * v).collect()))
                .collect()
        }))
    }

    /// Matrix product of `[m, k]` and `[k, n]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (a, b) = (self.shape(), other.shape());
        if a.len() != 2 || b.len() != 2 || a[1] != b[0] {
            return Err(shape_err("matmul", a, b));
        }
        let (m, k, n) = (a[0], a[1], b[1]);
        let mut data = vec![0.0; m * n];
        gemm(m, k, n, &self.data(), false, &other.data(), false, &mut data);
        Ok(Tensor::from_op("matmul", data, vec![m, n], vec![self.clone(), other.clone()], move |g, inputs, _| {
            let (a, b) = (inputs[0].data(), inputs[1].data());
            let ga = inputs[0].requires_grad().then(|| {
                let mut d = vec![0.0; m * k];
                gemm(m, n, k, g, false, &b, true, &mut d);
                d
            });
            let gb = inputs[1].requires_grad().then(|| {
                let mut d = vec![0.0; k * n];
                gemm(k, m, n, &a, true, g, false, &mut d);
                d
            });
            vec![ga, gb]
        }))
    }

    /// `x·w + b` for `x: [m, k]`, `w: [k, n]`, `b: [n]`.
    pub fn affine(&self, w: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (xs, ws, bs) = (self.shape(), w.shape(), b.shape());
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] {
            return Err(shape_err("affine", xs, ws));
        }
        if bs != [ws[1]] {
            return Err(shape_err("affine", ws, bs));
        }
        let (m, k, n) = (xs[0], xs[1], ws[1]);
        let mut data = vec![0.0; m * n];
        gemm(m, k, n, &self.data(), false, &w.data(), false, &mut data);
        {
            let bias = b.data();
            for row in data.chunks_mut(n.max(1)) {
                row.iter_mut().zip(bias.iter()).for_each(|(v, b)| *v += b);
            }
        }
        let inputs = vec![self.clone(), w.clone(), b.clone()];
        Ok(Tensor::from_op("affine", data, vec![m, n], inputs, move |g, inputs, _| {
            let (x, w) = (inputs[0].data(), inputs[1].data());
            let gx = inputs[0].requires_grad().then(|| {
                let mut d = vec![0.0; m * k];
                gemm(m, n, k, g, false, &w, true, &mut d);
                d
            });
            let gw = inputs[1].requires_grad().then(|| {
                let mut d = vec![0.0; k * n];
                gemm(k, m, n, &x, true, g, false, &mut d);
                d
            });
            let gb = inputs[2].requires_grad().then(|| {
                let mut d = vec![0.0; n];
                for row in g.chunks(n.max(1)) {
                    d.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                }
                d
            });
            vec![gx, gw, gb]
        }))
    }

    /// Same data under a new shape with the same element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.len() {
            return Err(shape_err("reshape", self.shape(), shape));
        }
        Ok(Tensor::from_op("reshape", self.to_vec(), shape.to_vec(), vec![self.clone()], |g, _, _| {
            vec![Some(g.to_vec())]
        }))
    }

    /// Transpose of a 2D tensor.
    pub fn transpose(&self) -> Result<Tensor> {
        let s = self.shape();
        if s.len() != 2 {
            return Err(shape_err("transpose", s, &[0, 0]));
        }
        let (r, c) = (s[0], s[1]);
        let swap = move |src: &[f64]| {
            let mut out = vec![0.0; r * c];
            for i in 0..r {
                for j in 0..c {
                    out[j * r + i] = src[i * c + j];
                }
            }
            out
        };
        let data = swap(&self.data());
        Ok(Tensor::from_op("transpose", data, vec![c, r], vec![self.clone()], move |g, _, _| {
            let mut out = vec![0.0; r * c];
            for j in 0..c {
                for i in 0..r {
                    out[i * c + j] = g[j * r + i];
                }
            }
            vec![Some(out)]
        }))
    }

    /// Joins tensors along `axis`; all other dimensions must agree.
    pub fn concat(tensors: &[Tensor], axis: usize) -> Result<Tensor> {
        let first = tensors.first().ok_or_else(|| Error::invalid("concat", "no tensors"))?;
        let base = first.shape();
        if axis >= base.len() {
            return Err(shape_err("concat", base, &[axis]));
        }
        for t in tensors {
            let s = t.shape();
            if s.len() != base.len() || s.iter().enumerate().any(|(d, &v)| d != axis && v != base[d]) {
                return Err(shape_err("concat", base, s));
            }
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let widths: Vec<usize> = tensors.iter().map(|t| t.shape()[axis] * inner).collect();
        let total: usize = widths.iter().sum();
        let mut shape = base.to_vec();
        shape[axis] = tensors.iter().map(|t| t.shape()[axis]).sum();
        let mut data = Vec::with_capacity(outer * total);
        for o in 0..outer {
            for (t, &w) in tensors.iter().zip(&widths) {
                data.extend_from_slice(&t.data()[o * w..(o + 1) * w]);
            }
        }
        Ok(Tensor::from_op("concat", data, shape, tensors.to_vec(), move |g, inputs, _| {
            let mut offsets = Vec::with_capacity(widths.len());
            let mut acc = 0;
            for &w in &widths {
                offsets.push(acc);
                acc += w;
            }
            inputs
                .iter()
                .zip(widths.iter().zip(&offsets))
                .map(|(t, (&w, &off))| {
                    t.requires_grad().then(|| {
                        let mut d = Vec::with_capacity(outer * w);
                        for o in 0..outer {
                            d.extend_from_slice(&g[o * total + off..o * total + off + w]);
                        }
                        d
                    })
                })
                .collect()
        }))
    }

    /// Elements `start..end` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, end: usize) -> Result<Tensor> {
        let s = self.shape();
        if axis >= s.len() || start > end || end > s[axis] {
            return Err(Error::invalid(
                "slice",
                format!("range {start}..{end} on axis {axis} of shape {s:?}"),
            ));
        }
        let outer: usize = s[..axis].iter().product();
        let inner: usize = s[axis + 1..].iter().product();
        let (full, w, off) = (s[axis] * inner, (end - start) * inner, start * inner);
        let mut data = Vec::with_capacity(outer * w);
        {
            let src = self.data();
            for o in 0..outer {
                data.extend_from_slice(&src[o * full + off..o * full + off + w]);
            }
        }
        let mut shape = s.to_vec();
        shape[axis] = end - start;
        let in_len = self.len();
        Ok(Tensor::from_op("slice", data, shape, vec![self.clone()], move |g, _, _| {
            let mut d = vec![0.0; in_len];
            for o in 0..outer {
                d[o * full + off..o * full + off + w].copy_from_slice(&g[o * w..(o + 1) * w]);
            }
            vec![Some(d)]
        }))
    }

    /// Index `index` along `axis`, dropping that axis.
    pub fn select(&self, axis: usize, index: usize) -> Result<Tensor> {
        let t = self.slice(axis, index, index + 1)?;
        let mut shape = self.shape().to_vec();
        shape.remove(axis);
        t.reshape(&shape)
    }

    /// Stacks same-shaped tensors along a new axis.
    pub fn stack(tensors: &[Tensor], axis: usize) -> Result<Tensor> {
        let first = tensors.first().ok_or_else(|| Error::invalid("stack", "no tensors"))?;
        let mut shape = first.shape().to_vec();
        if axis > shape.len() {
            return Err(shape_err("stack", &shape, &[axis]));
        }
        shape.insert(axis, 1);
        let expanded = tensors
            .iter()
            .map(|t| {
                if t.shape() != first.shape() {
                    return Err(shape_err("stack", first.shape(), t.shape()));
                }
                t.reshape(&shape)
            })
            .collect::<Result<Vec<_>>>()?;
        Tensor::concat(&expanded, axis)
    }

    pub fn sum(&self) -> Tensor {
        let s = self.data().iter().sum();
        let n = self.len();
        Tensor::from_op("sum", vec![s], vec![], vec![self.clone()], move |g, _, _| vec![Some(vec![g[0]; n])])
    }

    pub fn mean(&self) -> Tensor {
        let n = self.len().max(1) as f64;
        self.sum().scale(1.0 / n)
    }

    /// Sum over `axis`, removing it.
    pub fn sum_axis(&self, axis: usize) -> Result<Tensor> {
        let s = self.shape();
        if axis >= s.len() {
            return Err(shape_err("sum_axis", s, &[axis]));
        }
        let outer: usize = s[..axis].iter().product();
        let inner: usize = s[axis + 1..].iter().product();
        let len = s[axis];
        let mut data = vec![0.0; outer * inner];
        {
            let src = self.data();
            for o in 0..outer {
                for a in 0..len {
                    let row = &src[(o * len + a) * inner..(o * len + a + 1) * inner];
                    data[o * inner..(o + 1) * inner].iter_mut().zip(row).for_each(|(d, v)| *d += v);
                }
            }
        }
        let mut shape = s.to_vec();
        shape.remove(axis);
        Ok(Tensor::from_op("sum_axis", data, shape, vec![self.clone()], move |g, _, _| {
            let mut d = vec![0.0; outer * len * inner];
            for o in 0..outer {
                for a in 0..len {
                    d[(o * len + a) * inner..(o * len + a + 1) * inner].copy_from_slice(&g[o * inner..(o + 1) * inner]);
                }
            }
            vec![Some(d)]
        }))
    }

    /// Softmax along `axis`.
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        let s = self.shape();
        if axis >= s.len() {
            return Err(shape_err("softmax", s, &[axis]));
        }
        let outer: usize = s[..axis].iter().product();
        let inner: usize = s[axis + 1..].iter().product();
        let len = s[axis];
        let at = move |o: usize, a: usize, i: usize| (o * len + a) * inner + i;
        let mut data = self.to_vec();
        for o in 0..outer {
            for i in 0..inner {
                let max = (0..len).map(|a| data[at(o, a, i)]).fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for a in 0..len {
                    let e = (data[at(o, a, i)] - max).exp();
                    data[at(o, a, i)] = e;
                    z += e;
                }
                for a in 0..len {
                    data[at(o, a, i)] /= z;
                }
            }
        }
        Ok(Tensor::from_op("softmax", data, s.to_vec(), vec![self.clone()], move |g, _, y| {
            let mut d = vec![0.0; y.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let dot: f64 = (0..len).map(|a| g[at(o, a, i)] * y[at(o, a, i)]).sum();
                    for a in 0..len {
                        let k = at(o, a, i);
                        d[k] = y[k] * (g[k] - dot);
                    }
                }
            }
            vec![Some(d)]
        }))
    }

    /// Mean squared difference, a scalar.
    pub fn mse(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape() != other.shape() {
            return Err(shape_err("mse", self.shape(), other.shape()));
        }
        let n = self.len().max(1) as f64;
        let value = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n;
        Ok(Tensor::from_op("mse", vec![value], vec![], vec![self.clone(), other.clone()], move |g, inputs, _| {
            let (a, b) = (inputs[0].data(), inputs[1].data());
            let diff: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| 2.0 * g[0] * (x - y) / n).collect();
            let gb = inputs[1].requires_grad().then(|| diff.iter().map(|v| -v).collect());
            vec![inputs[0].requires_grad().then_some(diff), gb]
        }))
    }

    /// Stride-1 1D convolution with zero padding `(K - 1) / 2`, preserving length.
    ///
    /// `self: [B, C_in, L]`, `w: [C_out, C_in, K]` with odd `K`, `bias: [C_out]`.
    pub fn conv1d(&self, w: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
        let (xs, ws) = (self.shape(), w.shape());
        if xs.len() != 3 || ws.len() != 3 || xs[1] != ws[1] || ws[2] % 2 == 0 {
            return Err(shape_err("conv1d", xs, ws));
        }
        if let Some(b) = bias {
            if b.shape() != [ws[0]] {
                return Err(shape_err("conv1d", ws, b.shape()));
            }
        }
        let (batch, c_in, len) = (xs[0], xs[1], xs[2]);
        let (c_out, k) = (ws[0], ws[2]);
        let geom = ConvGeom { c_in, len, k };
        let rows = c_in * k;
        let mut data = vec![0.0; batch * c_out * len];
        {
            let (x, wd) = (self.data(), w.data());
            let mut cols = vec![0.0; rows * len];
            for b in 0..batch {
                geom.im2col(&x[b * c_in * len..(b + 1) * c_in * len], &mut cols);
                gemm(c_out, rows, len, &wd, false, &cols, false, &mut data[b * c_out * len..(b + 1) * c_out * len]);
            }
            if let Some(bt) = bias {
                let bd = bt.data();
                for (i, chunk) in data.chunks_mut(len.max(1)).enumerate() {
                    let v = bd[i % c_out];
                    chunk.iter_mut().for_each(|x| *x += v);
                }
            }
        }
        let mut inputs = vec![self.clone(), w.clone()];
        inputs.extend(bias.cloned());
        Ok(Tensor::from_op("conv1d", data, vec![batch, c_out, len], inputs, move |g, inputs, _| {
            let (x, wd) = (inputs[0].data(), inputs[1].data());
            let mut gx = inputs[0].requires_grad().then(|| vec![0.0; batch * c_in * len]);
            let mut gw = inputs[1].requires_grad().then(|| vec![0.0; c_out * rows]);
            let mut cols = vec![0.0; rows * len];
            let mut tmp_w = vec![0.0; c_out * rows];
            let mut dcols = vec![0.0; rows * len];
            for b in 0..batch {
                let gb = &g[b * c_out * len..(b + 1) * c_out * len];
                if let Some(gw) = gw.as_mut() {
                    geom.im2col(&x[b * c_in * len..(b + 1) * c_in * len], &mut cols);
                    gemm(c_out, len, rows, gb, false, &cols, true, &mut tmp_w);
                    gw.iter_mut().zip(&tmp_w).for_each(|(a, v)| *a += v);
                }
                if let Some(gx) = gx.as_mut() {
                    gemm(rows, c_out, len, &wd, true, gb, false, &mut dcols);
                    geom.col2im(&dcols, &mut gx[b * c_in * len..(b + 1) * c_in * len]);
                }
            }
            let mut out = vec![gx, gw];
            if inputs.len() == 3 {
                out.push(inputs[2].requires_grad().then(|| {
                    let mut d = vec![0.0; c_out];
                    for (i, chunk) in g.chunks(len.max(1)).enumerate() {
                        d[i % c_out] += chunk.iter().sum::<f64>();
                    }
                    d
                }));
            }
            out
        }))
    }

    /// Fused LSTM cell update from gate pre-activations.
    ///
    /// `self: [B, 4H]` holds the input, forget, candidate and output pre-activations
    /// in that order; `c_prev: [B, H]`. Returns `[B, 2H]` with the new hidden state in
    /// the first `H` columns and the new cell state in the last `H`.
    pub fn lstm_cell(&self, c_prev: &Tensor) -> Result<Tensor> {
        let (gs, cs) = (self.shape(), c_prev.shape());
        if gs.len() != 2 || cs.len() != 2 || gs[0] != cs[0] || gs[1] != 4 * cs[1] {
            return Err(shape_err("lstm_cell", gs, cs));
        }
        let (batch, h) = (cs[0], cs[1]);
        let mut data = vec![0.0; batch * 2 * h];
        {
            let (pre, c0) = (self.data(), c_prev.data());
            for b in 0..batch {
                let p = &pre[b * 4 * h..(b + 1) * 4 * h];
                for j in 0..h {
                    let (i, f, gg, o) = (sigmoid(p[j]), sigmoid(p[h + j]), p[2 * h + j].tanh(), sigmoid(p[3 * h + j]));
                    let c = f * c0[b * h + j] + i * gg;
                    data[b * 2 * h + j] = o * c.tanh();
                    data[b * 2 * h + h + j] = c;
                }
            }
        }
        Ok(Tensor::from_op(
            "lstm_cell",
            data,
            vec![batch, 2 * h],
            vec![self.clone(), c_prev.clone()],
            move |g, inputs, out| {
                let (pre, c0) = (inputs[0].data(), inputs[1].data());
                let mut gpre = vec![0.0; batch * 4 * h];
                let mut gc0 = vec![0.0; batch * h];
                for b in 0..batch {
                    let p = &pre[b * 4 * h..(b + 1) * 4 * h];
                    for j in 0..h {
                        let (i, f, gg, o) = (sigmoid(p[j]), sigmoid(p[h + j]), p[2 * h + j].tanh(), sigmoid(p[3 * h + j]));
                        let c = out[b * 2 * h + h + j];
                        let tc = c.tanh();
                        let gh = g[b * 2 * h + j];
                        let dc = g[b * 2 * h + h + j] + gh * o * (1.0 - tc * tc);
                        let q = &mut gpre[b * 4 * h..(b + 1) * 4 * h];
                        q[j] = dc * gg * i * (1.0 - i);
                        q[h + j] = dc * c0[b * h + j] * f * (1.0 - f);
                        q[2 * h + j] = dc * i * (1.0 - gg * gg);
                        q[3 * h + j] = gh * tc * o * (1.0 - o);
                        gc0[b * h + j] = dc * f;
                    }
                }
                vec![
                    inputs[0].requires_grad().then_some(gpre),
                    inputs[1].requires_grad().then_some(gc0),
                ]
            },
        ))
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Copy)]
struct ConvGeom {
    c_in: usize,
    len: usize,
    k: usize,
}

impl ConvGeom {
    /// `cols[(c·K + j), l] = x[c, l + j - pad]`, zero outside.
    fn im2col(&self, x: &[f64], cols: &mut [f64]) {
        let pad = (self.k - 1) / 2;
        for c in 0..self.c_in {
            for j in 0..self.k {
                let row = &mut cols[(c * self.k + j) * self.len..(c * self.k + j + 1) * self.len];
                for (l, v) in row.iter_mut().enumerate() {
                    let src = l + j;
                    *v = if src >= pad && src - pad < self.len { x[c * self.len + src - pad] } else { 0.0 };
                }
            }
        }
    }

    /// Adjoint of `im2col`, accumulating into `dx`.
    fn col2im(&self, cols: &[f64], dx: &mut [f64]) {
        let pad = (self.k - 1) / 2;
        for c in 0..self.c_in {
            for j in 0..self.k {
                let row = &cols[(c * self.k + j) * self.len..(c * self.k + j + 1) * self.len];
                for (l, v) in row.iter().enumerate() {
                    let src = l + j;
                    if src >= pad && src - pad < self.len {
                        dx[c * self.len + src - pad] += v;
                    }
                }
            }
        }
    }
}
