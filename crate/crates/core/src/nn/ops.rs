//! Forward and backward kernels shared by the tape and by inference paths.
//!
//! Batched image tensors are laid out `[n, c, h, w]`; dense activations are
//! `[n, features]`.

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{dim_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    /// ReLU's derivative at exactly zero is taken as 0.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }

    pub fn apply_inplace(self, data: &mut [f64]) {
        if self != Activation::Identity {
            for v in data {
                *v = self.apply(*v);
            }
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-major `C = op(A)·op(B) + beta·C` with `op(A)` of size `m×k` and
/// `op(B)` of size `k×n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slice lengths cover every element addressed by the strides.
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
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn as_batch_matrix(x: &Tensor, features: usize) -> Result<usize> {
    let n = match x.rank() {
        1 => 1,
        _ => x.shape()[0],
    };
    if n * features != x.len() {
        return Err(dim_err!(
            "dense input {:?} does not have {features} features per row",
            x.shape()
        ));
    }
    Ok(n)
}

/// `y = x·Wᵀ + b` for `x: [n, in]`, `W: [out, in]`, `b: [out]`.
pub(crate) fn linear_fwd(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    if w.rank() != 2 {
        return Err(dim_err!("weight matrix must be 2D, got {:?}", w.shape()));
    }
    let (out, inp) = (w.shape()[0], w.shape()[1]);
    if b.len() != out {
        return Err(dim_err!("bias has {} entries, expected {out}", b.len()));
    }
    let n = as_batch_matrix(x, inp)?;
    let mut y = Vec::with_capacity(n * out);
    for _ in 0..n {
        y.extend_from_slice(b.data());
    }
    gemm(n, inp, out, x.data(), false, w.data(), true, 1.0, &mut y);
    let shape = if x.rank() == 1 { vec![out] } else { vec![n, out] };
    Tensor::new(shape, y)
}

/// Gradients of [`linear_fwd`]: `(dx, dW, db)`.
pub(crate) fn linear_bwd(dy: &Tensor, x: &Tensor, w: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (out, inp) = (w.shape()[0], w.shape()[1]);
    let n = x.len() / inp;
    let mut dx = vec![0.0; n * inp];
    gemm(n, out, inp, dy.data(), false, w.data(), false, 0.0, &mut dx);
    let mut dw = vec![0.0; out * inp];
    gemm(out, n, inp, dy.data(), true, x.data(), false, 0.0, &mut dw);
    let mut db = vec![0.0; out];
    for row in dy.data().chunks(out) {
        for (acc, v) in db.iter_mut().zip(row) {
            *acc += v;
        }
    }
    (
        Tensor::new(x.shape().to_vec(), dx).expect("shape preserved"),
        Tensor::new(w.shape().to_vec(), dw).expect("shape preserved"),
        Tensor::new(vec![out], db).expect("shape preserved"),
    )
}

/// Public single-layer evaluation `f(Wx + b)`.
pub fn dense_forward(x: &Tensor, w: &Tensor, b: &Tensor, f: Activation) -> Result<Tensor> {
    let mut y = linear_fwd(x, w, b)?;
    f.apply_inplace(y.data_mut());
    Ok(y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn new(x: &Tensor, filters: &Tensor, biases: &Tensor, stride: usize, pad: usize) -> Result<Self> {
        let (n, c, h, w) = match *x.shape() {
            [c, h, w] => (1, c, h, w),
            [n, c, h, w] => (n, c, h, w),
            _ => return Err(dim_err!("conv input must be [c,h,w] or [n,c,h,w], got {:?}", x.shape())),
        };
        let [k, fc, kh, kw] = *filters.shape() else {
            return Err(dim_err!("filters must be [k,c,kh,kw], got {:?}", filters.shape()));
        };
        if fc != c {
            return Err(dim_err!("filters expect {fc} channels, input has {c}"));
        }
        if biases.len() != k {
            return Err(dim_err!("{} biases for {k} filters", biases.len()));
        }
        if stride == 0 {
            return Err(dim_err!("stride must be at least 1"));
        }
        if kh > h + 2 * pad || kw > w + 2 * pad {
            return Err(dim_err!(
                "{kh}×{kw} filter exceeds padded input {}×{}",
                h + 2 * pad,
                w + 2 * pad
            ));
        }
        let ho = (h + 2 * pad - kh) / stride + 1;
        let wo = (w + 2 * pad - kw) / stride + 1;
        Ok(ConvGeom { n, c, h, w, k, kh, kw, stride, pad, ho, wo })
    }

    fn patch(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn out_shape(&self, batched: bool) -> Vec<usize> {
        if batched {
            vec![self.n, self.k, self.ho, self.wo]
        } else {
            vec![self.k, self.ho, self.wo]
        }
    }

    /// Range of output columns whose input column `ox*stride + kj - pad` is in bounds.
    #[inline]
    fn valid_range(&self, kj: usize, extent_in: usize, extent_out: usize) -> (usize, usize) {
        let s = self.stride;
        let lo = if kj >= self.pad { 0 } else { (self.pad - kj).div_ceil(s) };
        // need ox*s + kj - pad <= extent_in - 1
        let hi = if extent_in + self.pad < kj + 1 {
            0
        } else {
            ((extent_in + self.pad - kj - 1) / s + 1).min(extent_out)
        };
        (lo.min(hi), hi)
    }
}

fn im2col(g: &ConvGeom, x: &[f64], cols: &mut [f64]) {
    let plane = g.ho * g.wo;
    for c in 0..g.c {
        let xc = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            let (oy_lo, oy_hi) = g.valid_range(ki, g.h, g.ho);
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                dst.fill(0.0);
                let (ox_lo, ox_hi) = g.valid_range(kj, g.w, g.wo);
                for oy in oy_lo..oy_hi {
                    let iy = oy * g.stride + ki - g.pad;
                    let src = &xc[iy * g.w..(iy + 1) * g.w];
                    let drow = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    if g.stride == 1 {
                        let ix0 = ox_lo + kj - g.pad;
                        drow[ox_lo..ox_hi].copy_from_slice(&src[ix0..ix0 + (ox_hi - ox_lo)]);
                    } else {
                        for ox in ox_lo..ox_hi {
                            drow[ox] = src[ox * g.stride + kj - g.pad];
                        }
                    }
                }
            }
        }
    }
}

fn col2im(g: &ConvGeom, cols: &[f64], dx: &mut [f64]) {
    let plane = g.ho * g.wo;
    for c in 0..g.c {
        let dxc = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            let (oy_lo, oy_hi) = g.valid_range(ki, g.h, g.ho);
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &cols[row * plane..(row + 1) * plane];
                let (ox_lo, ox_hi) = g.valid_range(kj, g.w, g.wo);
                for oy in oy_lo..oy_hi {
                    let iy = oy * g.stride + ki - g.pad;
                    let drow = &mut dxc[iy * g.w..(iy + 1) * g.w];
                    let srow = &src[oy * g.wo..(oy + 1) * g.wo];
                    for ox in ox_lo..ox_hi {
                        drow[ox * g.stride + kj - g.pad] += srow[ox];
                    }
                }
            }
        }
    }
}

/// Cross-correlation of every filter with the (zero-padded) input plus bias.
pub(crate) fn conv2d_fwd(x: &Tensor, filters: &Tensor, biases: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    let g = ConvGeom::new(x, filters, biases, stride, pad)?;
    let plane = g.ho * g.wo;
    let in_item = g.c * g.h * g.w;
    let out_item = g.k * plane;
    let mut cols = vec![0.0; g.patch() * plane];
    let mut out = vec![0.0; g.n * out_item];
    for i in 0..g.n {
        im2col(&g, &x.data()[i * in_item..(i + 1) * in_item], &mut cols);
        let dst = &mut out[i * out_item..(i + 1) * out_item];
        for (kk, chunk) in dst.chunks_mut(plane).enumerate() {
            chunk.fill(biases.data()[kk]);
        }
        gemm(g.k, g.patch(), plane, filters.data(), false, &cols, false, 1.0, dst);
    }
    Tensor::new(g.out_shape(x.rank() == 4), out)
}

/// Gradients of [`conv2d_fwd`]: `(dx, dfilters, dbiases)`.
pub(crate) fn conv2d_bwd(
    dy: &Tensor,
    x: &Tensor,
    filters: &Tensor,
    biases: &Tensor,
    stride: usize,
    pad: usize,
) -> (Tensor, Tensor, Tensor) {
    let g = ConvGeom::new(x, filters, biases, stride, pad).expect("validated in forward");
    let plane = g.ho * g.wo;
    let in_item = g.c * g.h * g.w;
    let out_item = g.k * plane;
    let mut cols = vec![0.0; g.patch() * plane];
    let mut dcols = vec![0.0; g.patch() * plane];
    let mut dx = vec![0.0; x.len()];
    let mut dw = vec![0.0; filters.len()];
    let mut db = vec![0.0; g.k];
    for i in 0..g.n {
        let dyi = &dy.data()[i * out_item..(i + 1) * out_item];
        im2col(&g, &x.data()[i * in_item..(i + 1) * in_item], &mut cols);
        gemm(g.k, plane, g.patch(), dyi, false, &cols, true, 1.0, &mut dw);
        gemm(g.patch(), g.k, plane, filters.data(), true, dyi, false, 0.0, &mut dcols);
        col2im(&g, &dcols, &mut dx[i * in_item..(i + 1) * in_item]);
        for (acc, chunk) in db.iter_mut().zip(dyi.chunks(plane)) {
            *acc += chunk.iter().sum::<f64>();
        }
    }
    (
        Tensor::new(x.shape().to_vec(), dx).expect("shape preserved"),
        Tensor::new(filters.shape().to_vec(), dw).expect("shape preserved"),
        Tensor::new(vec![g.k], db).expect("shape preserved"),
    )
}

/// `f(conv(X) + b)` on a `[c,h,w]` (or batched `[n,c,h,w]`) input.
pub fn conv2d_forward(
    x: &Tensor,
    filters: &Tensor,
    biases: &Tensor,
    stride: usize,
    pad: usize,
    f: Activation,
) -> Result<Tensor> {
    let mut y = conv2d_fwd(x, filters, biases, stride, pad)?;
    f.apply_inplace(y.data_mut());
    Ok(y)
}

fn spatial(x: &Tensor) -> Result<(usize, usize, usize)> {
    if x.rank() < 2 {
        return Err(dim_err!("spatial op needs rank >= 2, got {:?}", x.shape()));
    }
    let r = x.rank();
    let (h, w) = (x.shape()[r - 2], x.shape()[r - 1]);
    Ok((x.len() / (h * w), h, w))
}

/// Max-pooling over non-overlapping `window × window` blocks of the last two
/// axes. Returns the pooled tensor and, for each output, the flat input
/// index of the (first) maximum.
pub(crate) fn maxpool_fwd(x: &Tensor, window: usize) -> Result<(Tensor, Vec<usize>)> {
    let (planes, h, w) = spatial(x)?;
    if window == 0 || h % window != 0 || w % window != 0 {
        return Err(dim_err!("pool window {window} does not divide {h}×{w}"));
    }
    let (ho, wo) = (h / window, w / window);
    let mut out = Vec::with_capacity(planes * ho * wo);
    let mut argmax = Vec::with_capacity(planes * ho * wo);
    let data = x.data();
    for p in 0..planes {
        let base = p * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = base + oy * window * w + ox * window;
                for dy in 0..window {
                    let row = base + (oy * window + dy) * w + ox * window;
                    for (dx, &v) in data[row..row + window].iter().enumerate() {
                        if v > best {
                            best = v;
                            best_idx = row + dx;
                        }
                    }
                }
                out.push(best);
                argmax.push(best_idx);
            }
        }
    }
    let mut shape = x.shape().to_vec();
    let r = shape.len();
    shape[r - 2] = ho;
    shape[r - 1] = wo;
    Ok((Tensor::new(shape, out)?, argmax))
}

pub(crate) fn maxpool_bwd(dy: &Tensor, input_shape: &[usize], argmax: &[usize]) -> Tensor {
    let mut dx = Tensor::zeros(input_shape);
    let d = dx.data_mut();
    for (&idx, &g) in argmax.iter().zip(dy.data()) {
        d[idx] += g;
    }
    dx
}

pub fn maxpool2d(x: &Tensor, window: usize) -> Result<Tensor> {
    Ok(maxpool_fwd(x, window)?.0)
}

/// Nearest-neighbour upsampling of the last two axes.
pub fn upsample2d(x: &Tensor, factor: usize) -> Result<Tensor> {
    let (planes, h, w) = spatial(x)?;
    if factor == 0 {
        return Err(dim_err!("upsampling factor must be at least 1"));
    }
    let (ho, wo) = (h * factor, w * factor);
    let mut out = Vec::with_capacity(planes * ho * wo);
    for p in x.data().chunks(h * w).take(planes) {
        for oy in 0..ho {
            let src = &p[(oy / factor) * w..(oy / factor + 1) * w];
            for &v in src {
                for _ in 0..factor {
                    out.push(v);
                }
            }
        }
    }
    let mut shape = x.shape().to_vec();
    let r = shape.len();
    shape[r - 2] = ho;
    shape[r - 1] = wo;
    Tensor::new(shape, out)
}

pub(crate) fn upsample_bwd(dy: &Tensor, input_shape: &[usize], factor: usize) -> Tensor {
    let r = input_shape.len();
    let (h, w) = (input_shape[r - 2], input_shape[r - 1]);
    let wo = w * factor;
    let mut dx = Tensor::zeros(input_shape);
    let d = dx.data_mut();
    for (p, plane) in dy.data().chunks(h * w * factor * factor).enumerate() {
        let base = p * h * w;
        for (oy, row) in plane.chunks(wo).enumerate() {
            let dst = &mut d[base + (oy / factor) * w..base + (oy / factor + 1) * w];
            for (ox, &g) in row.iter().enumerate() {
                dst[ox / factor] += g;
            }
        }
    }
    dx
}
