//! Stateless forward and backward kernels. Layouts: activations
//! `[N, H, W, C]`, conv weights `[kh, kw, C, F]`, dense weights `[D, U]`.

use alloc::vec;
use alloc::vec::Vec;

use super::real::{axpy, dot};
use super::{ForwardMode, NnError, Padding, Real, Tensor};
use crate::rng::XorShift64;

/// Output extent and leading pad for one spatial axis.
pub fn conv_axis(input: usize, kernel: usize, stride: usize, padding: Padding) -> Option<(usize, usize)> {
    match padding {
        Padding::Same => {
            let out = input.div_ceil(stride);
            let total = ((out - 1) * stride + kernel).saturating_sub(input);
            Some((out, total / 2))
        }
        Padding::Valid => {
            if input < kernel {
                None
            } else {
                Some(((input - kernel) / stride + 1, 0))
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct ConvGeom {
    n: usize,
    h: usize,
    w: usize,
    c: usize,
    kh: usize,
    kw: usize,
    f: usize,
    oh: usize,
    ow: usize,
    pad_top: usize,
    pad_left: usize,
    stride: usize,
}

fn conv_geometry<T: Real>(input: &Tensor<T>, weight: &Tensor<T>, stride: usize, padding: Padding) -> Result<ConvGeom, NnError> {
    let [n, h, w, c] = input.dims4("conv2d input")?;
    let [kh, kw, wc, f] = weight.dims4("conv2d weight")?;
    if wc != c || stride == 0 {
        return Err(NnError::ShapeMismatch { context: "conv2d channels", expected: vec![kh, kw, c, f], got: weight.shape().to_vec() });
    }
    let underflow = || NnError::ShapeUnderflow { layer: "conv2d", height: h, width: w, window: kh.max(kw) };
    let (oh, pad_top) = conv_axis(h, kh, stride, padding).ok_or_else(underflow)?;
    let (ow, pad_left) = conv_axis(w, kw, stride, padding).ok_or_else(underflow)?;
    Ok(ConvGeom { n, h, w, c, kh, kw, f, oh, ow, pad_top, pad_left, stride })
}

pub fn conv2d_forward<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &[T],
    stride: usize,
    padding: Padding,
) -> Result<Tensor<T>, NnError> {
    let g = conv_geometry(input, weight, stride, padding)?;
    if bias.len() != g.f {
        return Err(NnError::ShapeMismatch { context: "conv2d bias", expected: vec![g.f], got: vec![bias.len()] });
    }
    let x = input.data();
    let wt = weight.data();
    let mut out = Tensor::zeros(&[g.n, g.oh, g.ow, g.f]);
    let o = out.data_mut();
    for n in 0..g.n {
        for y in 0..g.oh {
            for xo in 0..g.ow {
                let base = ((n * g.oh + y) * g.ow + xo) * g.f;
                let row = &mut o[base..base + g.f];
                row.copy_from_slice(bias);
                for i in 0..g.kh {
                    let iy = (y * g.stride + i) as isize - g.pad_top as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    for j in 0..g.kw {
                        let ix = (xo * g.stride + j) as isize - g.pad_left as isize;
                        if ix < 0 || ix >= g.w as isize {
                            continue;
                        }
                        let xin = ((n * g.h + iy as usize) * g.w + ix as usize) * g.c;
                        for c in 0..g.c {
                            let wrow = ((i * g.kw + j) * g.c + c) * g.f;
                            axpy(x[xin + c], &wt[wrow..wrow + g.f], row);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Vec<T>,
}

pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    upstream: &Tensor<T>,
    stride: usize,
    padding: Padding,
) -> Result<ConvGrads<T>, NnError> {
    let g = conv_geometry(input, weight, stride, padding)?;
    if upstream.shape() != [g.n, g.oh, g.ow, g.f] {
        return Err(NnError::ShapeMismatch { context: "conv2d upstream", expected: vec![g.n, g.oh, g.ow, g.f], got: upstream.shape().to_vec() });
    }
    let x = input.data();
    let wt = weight.data();
    let up = upstream.data();
    let mut dx = Tensor::zeros(input.shape());
    let mut dw = Tensor::zeros(weight.shape());
    let mut db = vec![T::zero(); g.f];
    {
        let dxd = dx.data_mut();
        let dwd = dw.data_mut();
        for n in 0..g.n {
            for y in 0..g.oh {
                for xo in 0..g.ow {
                    let base = ((n * g.oh + y) * g.ow + xo) * g.f;
                    let grow = &up[base..base + g.f];
                    for (b, &gv) in db.iter_mut().zip(grow) {
                        *b += gv;
                    }
                    for i in 0..g.kh {
                        let iy = (y * g.stride + i) as isize - g.pad_top as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        for j in 0..g.kw {
                            let ix = (xo * g.stride + j) as isize - g.pad_left as isize;
                            if ix < 0 || ix >= g.w as isize {
                                continue;
                            }
                            let xin = ((n * g.h + iy as usize) * g.w + ix as usize) * g.c;
                            for c in 0..g.c {
                                let wrow = ((i * g.kw + j) * g.c + c) * g.f;
                                dxd[xin + c] += dot(&wt[wrow..wrow + g.f], grow);
                                axpy(x[xin + c], grow, &mut dwd[wrow..wrow + g.f]);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(ConvGrads { input: dx, weight: dw, bias: db })
}

/// Max pooling over `pool x pool` windows fully inside the input. Returns the
/// pooled tensor and, per output element, the flat input index that won
/// (first maximum in row-major window order).
pub fn maxpool2d_forward<T: Real>(input: &Tensor<T>, pool: usize, stride: usize) -> Result<(Tensor<T>, Vec<usize>), NnError> {
    let [n, h, w, c] = input.dims4("maxpool2d input")?;
    if pool == 0 || stride == 0 {
        return Err(NnError::InvalidSpec("pool size and stride must be >= 1"));
    }
    if h < pool || w < pool {
        return Err(NnError::ShapeUnderflow { layer: "maxpool2d", height: h, width: w, window: pool });
    }
    let oh = (h - pool) / stride + 1;
    let ow = (w - pool) / stride + 1;
    let x = input.data();
    let mut out = Tensor::zeros(&[n, oh, ow, c]);
    let mut argmax = vec![0usize; n * oh * ow * c];
    let o = out.data_mut();
    for b in 0..n {
        for y in 0..oh {
            for xo in 0..ow {
                let obase = ((b * oh + y) * ow + xo) * c;
                for ch in 0..c {
                    let mut best_idx = ((b * h + y * stride) * w + xo * stride) * c + ch;
                    let mut best = x[best_idx];
                    for i in 0..pool {
                        for j in 0..pool {
                            let idx = ((b * h + y * stride + i) * w + xo * stride + j) * c + ch;
                            if x[idx] > best {
                                best = x[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    o[obase + ch] = best;
                    argmax[obase + ch] = best_idx;
                }
            }
        }
    }
    Ok((out, argmax))
}

pub fn maxpool2d_backward<T: Real>(input_shape: &[usize], argmax: &[usize], upstream: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    if argmax.len() != upstream.len() {
        return Err(NnError::ShapeMismatch { context: "maxpool2d upstream", expected: vec![argmax.len()], got: upstream.shape().to_vec() });
    }
    let mut dx = Tensor::zeros(input_shape);
    let d = dx.data_mut();
    for (&idx, &g) in argmax.iter().zip(upstream.data()) {
        d[idx] += g;
    }
    Ok(dx)
}

/// `input . weight + bias` for `input: [N, D]`, `weight: [D, U]`.
pub fn dense_forward<T: Real>(input: &Tensor<T>, weight: &Tensor<T>, bias: &[T]) -> Result<Tensor<T>, NnError> {
    let [n, d] = input.dims2("dense input")?;
    let [wd, u] = weight.dims2("dense weight")?;
    if wd != d || bias.len() != u {
        return Err(NnError::ShapeMismatch { context: "dense weight", expected: vec![d, bias.len()], got: weight.shape().to_vec() });
    }
    let x = input.data();
    let wt = weight.data();
    let mut out = Tensor::zeros(&[n, u]);
    for (b, row) in out.data_mut().chunks_mut(u).enumerate() {
        row.copy_from_slice(bias);
        for k in 0..d {
            axpy(x[b * d + k], &wt[k * u..(k + 1) * u], row);
        }
    }
    Ok(out)
}

pub struct DenseGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Vec<T>,
}

pub fn dense_backward<T: Real>(input: &Tensor<T>, weight: &Tensor<T>, upstream: &Tensor<T>) -> Result<DenseGrads<T>, NnError> {
    let [n, d] = input.dims2("dense input")?;
    let [_, u] = weight.dims2("dense weight")?;
    if upstream.shape() != [n, u] {
        return Err(NnError::ShapeMismatch { context: "dense upstream", expected: vec![n, u], got: upstream.shape().to_vec() });
    }
    let x = input.data();
    let wt = weight.data();
    let up = upstream.data();
    let mut dx = Tensor::zeros(&[n, d]);
    let mut dw = Tensor::zeros(&[d, u]);
    let mut db = vec![T::zero(); u];
    for b in 0..n {
        let g = &up[b * u..(b + 1) * u];
        for (acc, &gv) in db.iter_mut().zip(g) {
            *acc += gv;
        }
        for k in 0..d {
            dx.data_mut()[b * d + k] = dot(&wt[k * u..(k + 1) * u], g);
            axpy(x[b * d + k], g, &mut dw.data_mut()[k * u..(k + 1) * u]);
        }
    }
    Ok(DenseGrads { input: dx, weight: dw, bias: db })
}

pub fn relu_forward<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    let mut out = input.clone();
    out.data_mut().iter_mut().for_each(|v| *v = v.max(T::zero()));
    out
}

/// Gates `upstream` by the sign of the forward output.
pub fn relu_backward<T: Real>(output: &Tensor<T>, upstream: &Tensor<T>) -> Tensor<T> {
    let mut dx = upstream.clone();
    for (g, &y) in dx.data_mut().iter_mut().zip(output.data()) {
        if y <= T::zero() {
            *g = T::zero();
        }
    }
    dx
}

/// Row-wise softmax over the last axis with max subtraction.
pub fn softmax_rows<T: Real>(logits: &Tensor<T>) -> Tensor<T> {
    let k = *logits.shape().last().unwrap_or(&1);
    let mut out = logits.clone();
    for row in out.data_mut().chunks_mut(k.max(1)) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

/// Vector-Jacobian product of the softmax: `y * (g - <g, y>)` per row.
pub fn softmax_backward<T: Real>(output: &Tensor<T>, upstream: &Tensor<T>) -> Tensor<T> {
    let k = *output.shape().last().unwrap_or(&1);
    let mut dx = upstream.clone();
    for (drow, yrow) in dx.data_mut().chunks_mut(k.max(1)).zip(output.data().chunks(k.max(1))) {
        let s: T = drow.iter().zip(yrow).map(|(&g, &y)| g * y).sum();
        for (d, &y) in drow.iter_mut().zip(yrow) {
            *d = y * (*d - s);
        }
    }
    dx
}

/// Values batch normalization keeps for its backward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache<T> {
    pub normalized: Tensor<T>,
    pub inv_std: Vec<T>,
}

pub struct BatchNormParams<'a, T> {
    pub gamma: &'a [T],
    pub beta: &'a [T],
    pub running_mean: &'a mut [T],
    pub running_var: &'a mut [T],
    pub epsilon: T,
    pub momentum: T,
}

/// Normalizes over every axis but the last. Train mode uses the (biased)
/// batch statistics and folds them into the running averages; infer mode
/// uses the running averages and leaves them untouched.
pub fn batchnorm_forward<T: Real>(
    input: &Tensor<T>,
    p: BatchNormParams<'_, T>,
    mode: ForwardMode,
) -> Result<(Tensor<T>, BatchNormCache<T>), NnError> {
    let d = *input.shape().last().ok_or(NnError::ZeroBatch)?;
    if p.gamma.len() != d || p.beta.len() != d || p.running_mean.len() != d || p.running_var.len() != d {
        return Err(NnError::ShapeMismatch { context: "batchnorm parameters", expected: vec![d], got: vec![p.gamma.len()] });
    }
    let rows = input.len().checked_div(d).unwrap_or(0);
    if rows == 0 {
        return Err(NnError::ZeroBatch);
    }
    let x = input.data();
    let (mean, var) = match mode {
        ForwardMode::Train => {
            let m = T::lit(rows as f64);
            let mut mean = vec![T::zero(); d];
            for row in x.chunks(d) {
                for (a, &v) in mean.iter_mut().zip(row) {
                    *a += v;
                }
            }
            mean.iter_mut().for_each(|a| *a /= m);
            let mut var = vec![T::zero(); d];
            for row in x.chunks(d) {
                for ((a, &v), &mu) in var.iter_mut().zip(row).zip(&mean) {
                    *a += (v - mu) * (v - mu);
                }
            }
            var.iter_mut().for_each(|a| *a /= m);
            let keep = p.momentum;
            let take = T::one() - keep;
            for i in 0..d {
                p.running_mean[i] = keep * p.running_mean[i] + take * mean[i];
                p.running_var[i] = keep * p.running_var[i] + take * var[i];
            }
            (mean, var)
        }
        ForwardMode::Infer => (p.running_mean.to_vec(), p.running_var.to_vec()),
    };
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + p.epsilon).sqrt()).collect();
    let mut normalized = input.clone();
    let mut out = input.clone();
    for (nrow, orow) in normalized.data_mut().chunks_mut(d).zip(out.data_mut().chunks_mut(d)) {
        for i in 0..d {
            let xh = (nrow[i] - mean[i]) * inv_std[i];
            nrow[i] = xh;
            orow[i] = p.gamma[i] * xh + p.beta[i];
        }
    }
    Ok((out, BatchNormCache { normalized, inv_std }))
}

pub struct BatchNormGrads<T> {
    pub input: Tensor<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

/// Full batch-statistics chain rule for a train-mode forward.
pub fn batchnorm_backward<T: Real>(cache: &BatchNormCache<T>, gamma: &[T], upstream: &Tensor<T>) -> Result<BatchNormGrads<T>, NnError> {
    let d = gamma.len();
    if upstream.shape() != cache.normalized.shape() {
        return Err(NnError::ShapeMismatch { context: "batchnorm upstream", expected: cache.normalized.shape().to_vec(), got: upstream.shape().to_vec() });
    }
    let rows = upstream.len() / d;
    let m = T::lit(rows as f64);
    let mut dbeta = vec![T::zero(); d];
    let mut dgamma = vec![T::zero(); d];
    for (grow, xrow) in upstream.data().chunks(d).zip(cache.normalized.data().chunks(d)) {
        for i in 0..d {
            dbeta[i] += grow[i];
            dgamma[i] += grow[i] * xrow[i];
        }
    }
    // The normalized values sum to zero only up to rounding; re-centering
    // them keeps the batch sum of the input gradient at zero in f32 too.
    let mut xmean = vec![T::zero(); d];
    for xrow in cache.normalized.data().chunks(d) {
        for i in 0..d {
            xmean[i] += xrow[i];
        }
    }
    xmean.iter_mut().for_each(|v| *v /= m);
    let mut dx = upstream.clone();
    for (drow, xrow) in dx.data_mut().chunks_mut(d).zip(cache.normalized.data().chunks(d)) {
        for i in 0..d {
            let scale = gamma[i] * cache.inv_std[i] / m;
            drow[i] = scale * ((m * drow[i] - dbeta[i]) - (xrow[i] - xmean[i]) * dgamma[i]);
        }
    }
    Ok(BatchNormGrads { input: dx, gamma: dgamma, beta: dbeta })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutVariant {
    /// Independent mask per element.
    Element,
    /// One mask value per (sample, channel), shared across space.
    Spatial,
}

/// Inverted dropout. Returns the output and the multiplicative mask that
/// was applied (`0` or `1/(1-rate)` per element); infer mode or a zero rate
/// is the identity with an all-ones mask.
pub fn dropout_forward<T: Real>(
    input: &Tensor<T>,
    rate: f64,
    mode: ForwardMode,
    variant: DropoutVariant,
    rng: &mut XorShift64,
) -> Result<(Tensor<T>, Vec<T>), NnError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(NnError::InvalidRate(rate));
    }
    if mode == ForwardMode::Infer || rate == 0.0 {
        return Ok((input.clone(), vec![T::one(); input.len()]));
    }
    let keep_scale = T::lit(1.0 / (1.0 - rate));
    let shape = input.shape();
    let mask: Vec<T> = match variant {
        DropoutVariant::Spatial if shape.len() == 4 => {
            let (n, c) = (shape[0], shape[3]);
            let spatial = shape[1] * shape[2];
            let channel: Vec<T> = (0..n * c)
                .map(|_| if rng.next_f64() < rate { T::zero() } else { keep_scale })
                .collect();
            let mut mask = Vec::with_capacity(input.len());
            for b in 0..n {
                for _ in 0..spatial {
                    mask.extend_from_slice(&channel[b * c..(b + 1) * c]);
                }
            }
            mask
        }
        _ => (0..input.len()).map(|_| if rng.next_f64() < rate { T::zero() } else { keep_scale }).collect(),
    };
    let mut out = input.clone();
    for (v, &m) in out.data_mut().iter_mut().zip(&mask) {
        *v *= m;
    }
    Ok((out, mask))
}

pub fn dropout_backward<T: Real>(mask: &[T], upstream: &Tensor<T>) -> Tensor<T> {
    let mut dx = upstream.clone();
    for (g, &m) in dx.data_mut().iter_mut().zip(mask) {
        *g *= m;
    }
    dx
}
