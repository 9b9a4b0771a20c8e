//! Layer kernels with hand-written backward passes. Convolutions run per
//! batch item through im2col + gemm; weight gradients are reduced in batch
//! order so results do not depend on the thread count.

use rayon::prelude::*;

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const BN_EPS: f64 = 1e-5;
/// Decay of the running batch-norm statistics.
pub const BN_AVERAGE_DECAY: f64 = 0.99;

/// A named parameter or state tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub dims: Vec<usize>,
    pub value: Vec<T>,
    /// Receives gradients and optimizer updates.
    pub learnable: bool,
    /// Subject to weight decay.
    pub decay: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Abs,
    Tanh,
    Relu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Abs => "abs",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "abs" => Ok(Activation::Abs),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::invalid(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    /// Square convolution without bias. `weight` indexes the parameter list.
    Conv {
        weight: usize,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        pad: usize,
        /// False for the first layer, whose input needs no gradient.
        input_grad: bool,
    },
    BatchNorm {
        gamma: usize,
        beta: usize,
        /// Running sums of batch means/variances and their total weight.
        mean_sum: usize,
        var_sum: usize,
        weight_sum: usize,
        channels: usize,
    },
    Act(Activation),
    /// Average over in-bounds elements of each window.
    AvgPool {
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    GlobalAvgPool,
    Linear {
        weight: usize,
        inputs: usize,
        outputs: usize,
    },
}

/// Values saved by a training forward pass.
#[derive(Clone, Debug)]
pub enum Cache<T> {
    Input(Tensor<T>),
    Output(Tensor<T>),
    Norm { xhat: Vec<T>, inv_std: Vec<T> },
    Dims([usize; 4]),
    None,
}

/// Batch statistics produced by a training-mode batch-norm pass.
#[derive(Clone, Debug)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    pub count: usize,
}

pub fn pool_out(side: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (side + 2 * pad - kernel) / stride + 1
}

/// Valid output-column range `[lo, hi)` for kernel column `kj`.
fn col_range(kj: usize, pad: usize, w: usize, ow: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(kj).min(ow);
    let hi = (w + pad).saturating_sub(kj).min(ow).max(lo);
    (lo, hi)
}

fn im2col<T: Scalar>(x: &[T], c: usize, h: usize, w: usize, k: usize, pad: usize, col: &mut [T]) {
    let oh = h + 2 * pad + 1 - k;
    let ow = w + 2 * pad + 1 - k;
    let plane = oh * ow;
    for ch in 0..c {
        let src = &x[ch * h * w..(ch + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (ch * k + ki) * k + kj;
                let dst = &mut col[row * plane..(row + 1) * plane];
                let (lo, hi) = col_range(kj, pad, w, ow);
                for oy in 0..oh {
                    let iy = oy as isize + ki as isize - pad as isize;
                    let drow = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h as isize {
                        drow.fill(T::zero());
                        continue;
                    }
                    let start = iy as usize * w + lo + kj - pad;
                    drow[..lo].fill(T::zero());
                    drow[lo..hi].copy_from_slice(&src[start..start + hi - lo]);
                    drow[hi..].fill(T::zero());
                }
            }
        }
    }
}

fn col2im<T: Scalar>(col: &[T], c: usize, h: usize, w: usize, k: usize, pad: usize, x: &mut [T]) {
    let oh = h + 2 * pad + 1 - k;
    let ow = w + 2 * pad + 1 - k;
    let plane = oh * ow;
    x.fill(T::zero());
    for ch in 0..c {
        let dst = &mut x[ch * h * w..(ch + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (ch * k + ki) * k + kj;
                let src = &col[row * plane..(row + 1) * plane];
                let (lo, hi) = col_range(kj, pad, w, ow);
                for oy in 0..oh {
                    let iy = oy as isize + ki as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let start = iy as usize * w + lo + kj - pad;
                    for (d, &v) in dst[start..start + hi - lo].iter_mut().zip(&src[oy * ow + lo..oy * ow + hi]) {
                        *d += v;
                    }
                }
            }
        }
    }
}

impl Layer {
    /// Output dims for input dims, or a shape error.
    pub fn out_dims(&self, d: [usize; 4]) -> Result<[usize; 4]> {
        let [n, c, h, w] = d;
        match *self {
            Layer::Conv {
                in_ch,
                out_ch,
                kernel,
                pad,
                ..
            } => {
                if c != in_ch {
                    return Err(Error::Shape(format!("conv expects {in_ch} channels, got {c}")));
                }
                if h + 2 * pad < kernel || w + 2 * pad < kernel {
                    return Err(Error::Shape(format!("{h}x{w} input smaller than {kernel}x{kernel} kernel")));
                }
                Ok([n, out_ch, h + 2 * pad + 1 - kernel, w + 2 * pad + 1 - kernel])
            }
            Layer::BatchNorm { channels, .. } => {
                if c != channels {
                    return Err(Error::Shape(format!("batch norm expects {channels} channels, got {c}")));
                }
                Ok(d)
            }
            Layer::Act(_) => Ok(d),
            Layer::AvgPool { kernel, stride, pad } => {
                if h + 2 * pad < kernel || w + 2 * pad < kernel {
                    return Err(Error::Shape(format!("{h}x{w} input smaller than pool window")));
                }
                Ok([n, c, pool_out(h, kernel, stride, pad), pool_out(w, kernel, stride, pad)])
            }
            Layer::GlobalAvgPool => Ok([n, c, 1, 1]),
            Layer::Linear { inputs, outputs, .. } => {
                if c * h * w != inputs {
                    return Err(Error::Shape(format!("linear expects {inputs} inputs, got {}", c * h * w)));
                }
                Ok([n, outputs, 1, 1])
            }
        }
    }

    /// Forward pass. With `train`, batch norm uses batch statistics (returned
    /// for the running-average update) and a cache for backward is produced.
    pub fn forward<T: Scalar>(
        &self,
        params: &[Param<T>],
        x: Tensor<T>,
        train: bool,
    ) -> Result<(Tensor<T>, Cache<T>, Option<BatchStats<T>>)> {
        let od = self.out_dims(x.dims())?;
        match *self {
            Layer::Conv {
                weight,
                in_ch,
                out_ch,
                kernel,
                pad,
                ..
            } => {
                let w = &params[weight].value;
                let mut y = Tensor::zeros(od[0], od[1], od[2], od[3]);
                let (h, wd) = (x.h, x.w);
                let plane = od[2] * od[3];
                let ck = in_ch * kernel * kernel;
                y.data
                    .par_chunks_mut(out_ch * plane)
                    .zip(x.data.par_chunks(in_ch * h * wd))
                    .for_each_init(
                        || vec![T::zero(); ck * plane],
                        |col, (yo, xi)| {
                            im2col(xi, in_ch, h, wd, kernel, pad, col);
                            T::gemm(
                                out_ch,
                                ck,
                                plane,
                                T::one(),
                                w,
                                (ck as isize, 1),
                                col,
                                (plane as isize, 1),
                                T::zero(),
                                yo,
                            );
                        },
                    );
                let cache = if train { Cache::Input(x) } else { Cache::None };
                Ok((y, cache, None))
            }
            Layer::BatchNorm {
                gamma,
                beta,
                mean_sum,
                var_sum,
                weight_sum,
                channels,
            } => {
                let (n, plane) = (x.n, x.h * x.w);
                let g = &params[gamma].value;
                let b = &params[beta].value;
                let mut y = x;
                if train {
                    let m = n * plane;
                    let mut mean = vec![T::zero(); channels];
                    let mut var = vec![T::zero(); channels];
                    let mut inv_std = vec![T::zero(); channels];
                    let mut xhat = vec![T::zero(); y.data.len()];
                    for c in 0..channels {
                        let mut s = T::zero();
                        for i in 0..n {
                            let base = (i * channels + c) * plane;
                            s += y.data[base..base + plane].iter().copied().sum();
                        }
                        let mu = s / T::of(m as f64);
                        let mut ss = T::zero();
                        for i in 0..n {
                            let base = (i * channels + c) * plane;
                            ss += y.data[base..base + plane].iter().map(|&v| (v - mu) * (v - mu)).sum();
                        }
                        let v = ss / T::of(m as f64);
                        let is = T::one() / (v + T::of(BN_EPS)).sqrt();
                        mean[c] = mu;
                        var[c] = v;
                        inv_std[c] = is;
                        for i in 0..n {
                            let base = (i * channels + c) * plane;
                            for p in base..base + plane {
                                let xh = (y.data[p] - mu) * is;
                                xhat[p] = xh;
                                y.data[p] = g[c] * xh + b[c];
                            }
                        }
                    }
                    let stats = BatchStats { mean, var, count: m };
                    Ok((y, Cache::Norm { xhat, inv_std }, Some(stats)))
                } else {
                    let ws = params[weight_sum].value[0];
                    for c in 0..channels {
                        let (mu, v) = if ws > T::zero() {
                            (params[mean_sum].value[c] / ws, params[var_sum].value[c] / ws)
                        } else {
                            (T::zero(), T::one())
                        };
                        let is = T::one() / (v + T::of(BN_EPS)).sqrt();
                        let (scale, shift) = (g[c] * is, b[c] - g[c] * is * mu);
                        for i in 0..n {
                            let base = (i * channels + c) * plane;
                            for v in &mut y.data[base..base + plane] {
                                *v = scale * *v + shift;
                            }
                        }
                    }
                    Ok((y, Cache::None, None))
                }
            }
            Layer::Act(act) => {
                let keep_input = train && act != Activation::Tanh;
                let cache_x = if keep_input { Cache::Input(x.clone()) } else { Cache::None };
                let mut y = x;
                for v in y.data.iter_mut() {
                    *v = match act {
                        Activation::Abs => v.abs(),
                        Activation::Tanh => v.tanh(),
                        Activation::Relu => v.max(T::zero()),
                    };
                }
                let cache = if train && act == Activation::Tanh {
                    Cache::Output(y.clone())
                } else {
                    cache_x
                };
                Ok((y, cache, None))
            }
            Layer::AvgPool { kernel, stride, pad } => {
                let mut y = Tensor::zeros(od[0], od[1], od[2], od[3]);
                let (h, w) = (x.h, x.w);
                let (oh, ow) = (od[2], od[3]);
                for (yo, xi) in y.data.chunks_mut(oh * ow).zip(x.data.chunks(h * w)) {
                    for oy in 0..oh {
                        let (r0, r1) = window(oy, stride, pad, kernel, h);
                        for ox in 0..ow {
                            let (c0, c1) = window(ox, stride, pad, kernel, w);
                            let mut s = T::zero();
                            for r in r0..r1 {
                                s += xi[r * w + c0..r * w + c1].iter().copied().sum();
                            }
                            yo[oy * ow + ox] = s / T::of(((r1 - r0) * (c1 - c0)) as f64);
                        }
                    }
                }
                let cache = if train { Cache::Dims(x.dims()) } else { Cache::None };
                Ok((y, cache, None))
            }
            Layer::GlobalAvgPool => {
                let plane = x.h * x.w;
                let inv = T::one() / T::of(plane as f64);
                let data = x.data.chunks(plane).map(|p| p.iter().copied().sum::<T>() * inv).collect();
                let y = Tensor::from_vec(od[0], od[1], 1, 1, data)?;
                let cache = if train { Cache::Dims(x.dims()) } else { Cache::None };
                Ok((y, cache, None))
            }
            Layer::Linear {
                weight,
                inputs,
                outputs,
            } => {
                let w = &params[weight].value;
                let mut y = Tensor::zeros(x.n, outputs, 1, 1);
                T::gemm(
                    x.n,
                    inputs,
                    outputs,
                    T::one(),
                    &x.data,
                    (inputs as isize, 1),
                    w,
                    (1, inputs as isize),
                    T::zero(),
                    &mut y.data,
                );
                let cache = if train { Cache::Input(x) } else { Cache::None };
                Ok((y, cache, None))
            }
        }
    }

    /// Backward pass: returns the input gradient (empty for a first conv) and
    /// `(param index, gradient)` pairs.
    pub fn backward<T: Scalar>(
        &self,
        params: &[Param<T>],
        cache: Cache<T>,
        dy: Tensor<T>,
    ) -> Result<(Tensor<T>, Vec<(usize, Vec<T>)>)> {
        match (self, cache) {
            (
                &Layer::Conv {
                    weight,
                    in_ch,
                    out_ch,
                    kernel,
                    pad,
                    input_grad,
                },
                Cache::Input(x),
            ) => {
                let w = &params[weight].value;
                let learnable = params[weight].learnable;
                let (h, wd) = (x.h, x.w);
                let plane = dy.h * dy.w;
                let ck = in_ch * kernel * kernel;
                if !learnable && !input_grad {
                    return Ok((Tensor::zeros(0, x.c, x.h, x.w), Vec::new()));
                }
                // Per item: (weight gradient, input gradient).
                let per_item: Vec<(Vec<T>, Vec<T>)> = (0..x.n)
                    .into_par_iter()
                    .map_init(
                        || vec![T::zero(); ck * plane],
                        |col, i| {
                            let dyi = dy.item(i);
                            let mut dw = Vec::new();
                            if learnable {
                                im2col(x.item(i), in_ch, h, wd, kernel, pad, col);
                                dw = vec![T::zero(); out_ch * ck];
                                T::gemm(
                                    out_ch,
                                    plane,
                                    ck,
                                    T::one(),
                                    dyi,
                                    (plane as isize, 1),
                                    col,
                                    (1, plane as isize),
                                    T::zero(),
                                    &mut dw,
                                );
                            }
                            let mut dxi = Vec::new();
                            if input_grad {
                                T::gemm(
                                    ck,
                                    out_ch,
                                    plane,
                                    T::one(),
                                    w,
                                    (1, ck as isize),
                                    dyi,
                                    (plane as isize, 1),
                                    T::zero(),
                                    col,
                                );
                                dxi = vec![T::zero(); x.item_len()];
                                col2im(col, in_ch, h, wd, kernel, pad, &mut dxi);
                            }
                            (dw, dxi)
                        },
                    )
                    .collect();
                let mut grads = Vec::new();
                if learnable {
                    let mut dw = vec![T::zero(); out_ch * ck];
                    for (item, _) in &per_item {
                        for (a, b) in dw.iter_mut().zip(item) {
                            *a += *b;
                        }
                    }
                    grads.push((weight, dw));
                }
                let dx = if input_grad {
                    let mut data = Vec::with_capacity(x.data.len());
                    for (_, dxi) in &per_item {
                        data.extend_from_slice(dxi);
                    }
                    Tensor::from_vec(x.n, x.c, x.h, x.w, data)?
                } else {
                    Tensor::zeros(0, x.c, x.h, x.w)
                };
                Ok((dx, grads))
            }
            (
                &Layer::BatchNorm {
                    gamma,
                    beta,
                    channels,
                    ..
                },
                Cache::Norm { xhat, inv_std },
            ) => {
                let g = &params[gamma].value;
                let (n, plane) = (dy.n, dy.h * dy.w);
                let m = T::of((n * plane) as f64);
                let mut dgamma = vec![T::zero(); channels];
                let mut dbeta = vec![T::zero(); channels];
                let mut dx = dy.clone();
                for c in 0..channels {
                    let (mut sg, mut sb) = (T::zero(), T::zero());
                    for i in 0..n {
                        let base = (i * channels + c) * plane;
                        for p in base..base + plane {
                            sg += dy.data[p] * xhat[p];
                            sb += dy.data[p];
                        }
                    }
                    dgamma[c] = sg;
                    dbeta[c] = sb;
                    let k = g[c] * inv_std[c] / m;
                    for i in 0..n {
                        let base = (i * channels + c) * plane;
                        for p in base..base + plane {
                            dx.data[p] = k * (m * dy.data[p] - sb - xhat[p] * sg);
                        }
                    }
                }
                let mut grads = Vec::new();
                if params[gamma].learnable {
                    grads.push((gamma, dgamma));
                }
                if params[beta].learnable {
                    grads.push((beta, dbeta));
                }
                Ok((dx, grads))
            }
            (&Layer::Act(act), cache) => {
                let mut dx = dy;
                match (act, cache) {
                    (Activation::Tanh, Cache::Output(y)) => {
                        for (d, &v) in dx.data.iter_mut().zip(&y.data) {
                            *d *= T::one() - v * v;
                        }
                    }
                    (Activation::Abs, Cache::Input(x)) => {
                        for (d, &v) in dx.data.iter_mut().zip(&x.data) {
                            *d *= if v > T::zero() {
                                T::one()
                            } else if v < T::zero() {
                                -T::one()
                            } else {
                                T::zero()
                            };
                        }
                    }
                    (Activation::Relu, Cache::Input(x)) => {
                        for (d, &v) in dx.data.iter_mut().zip(&x.data) {
                            if v <= T::zero() {
                                *d = T::zero();
                            }
                        }
                    }
                    _ => return Err(Error::Shape("activation backward without cache".into())),
                }
                Ok((dx, Vec::new()))
            }
            (&Layer::AvgPool { kernel, stride, pad }, Cache::Dims([n, c, h, w])) => {
                let mut dx = Tensor::zeros(n, c, h, w);
                let (oh, ow) = (dy.h, dy.w);
                for (dxi, dyi) in dx.data.chunks_mut(h * w).zip(dy.data.chunks(oh * ow)) {
                    for oy in 0..oh {
                        let (r0, r1) = window(oy, stride, pad, kernel, h);
                        for ox in 0..ow {
                            let (c0, c1) = window(ox, stride, pad, kernel, w);
                            let g = dyi[oy * ow + ox] / T::of(((r1 - r0) * (c1 - c0)) as f64);
                            for r in r0..r1 {
                                for v in &mut dxi[r * w + c0..r * w + c1] {
                                    *v += g;
                                }
                            }
                        }
                    }
                }
                Ok((dx, Vec::new()))
            }
            (Layer::GlobalAvgPool, Cache::Dims([n, c, h, w])) => {
                let plane = h * w;
                let inv = T::one() / T::of(plane as f64);
                let mut dx = Tensor::zeros(n, c, h, w);
                for (dxi, &g) in dx.data.chunks_mut(plane).zip(&dy.data) {
                    dxi.fill(g * inv);
                }
                Ok((dx, Vec::new()))
            }
            (
                &Layer::Linear {
                    weight,
                    inputs,
                    outputs,
                },
                Cache::Input(x),
            ) => {
                let w = &params[weight].value;
                let n = x.n;
                let mut dw = vec![T::zero(); outputs * inputs];
                T::gemm(
                    outputs,
                    n,
                    inputs,
                    T::one(),
                    &dy.data,
                    (1, outputs as isize),
                    &x.data,
                    (inputs as isize, 1),
                    T::zero(),
                    &mut dw,
                );
                let mut dx = Tensor::zeros(x.n, x.c, x.h, x.w);
                T::gemm(
                    n,
                    outputs,
                    inputs,
                    T::one(),
                    &dy.data,
                    (outputs as isize, 1),
                    w,
                    (inputs as isize, 1),
                    T::zero(),
                    &mut dx.data,
                );
                let grads = if params[weight].learnable {
                    vec![(weight, dw)]
                } else {
                    Vec::new()
                };
                Ok((dx, grads))
            }
            _ => Err(Error::Shape("backward called with a mismatched cache".into())),
        }
    }
}

/// In-bounds index range `[start, end)` of pooling window `o`.
fn window(o: usize, stride: usize, pad: usize, kernel: usize, len: usize) -> (usize, usize) {
    let start = (o * stride) as isize - pad as isize;
    let end = (start + kernel as isize).min(len as isize);
    (start.max(0) as usize, end as usize)
}
