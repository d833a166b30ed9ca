//! Slow reference implementations shared by the kernel tests and the
//! acceptance run.
#![allow(dead_code, clippy::manual_div_ceil)]

use almond_core::nn::Tensor;
use almond_core::rng::XorShift64;
use almond_core::GrayImage;

pub fn random_image(w: usize, h: usize, rng: &mut XorShift64) -> GrayImage {
    GrayImage::from_fn(w, h, |_, _| rng.below(256) as u8)
}

/// Mirror index without repeating the edge pixel (`dcb|abcd|cba`).
pub fn mirror(i: isize, n: isize) -> usize {
    let mut i = i;
    while i < 0 || i >= n {
        i = if i < 0 { -i } else { 2 * (n - 1) - i };
    }
    i as usize
}

pub fn brute_force_blur(img: &GrayImage, k: usize, sigma: f64) -> Vec<f64> {
    let half = (k / 2) as isize;
    let mut kernel = vec![vec![0.0; k]; k];
    let mut total = 0.0;
    for (a, row) in kernel.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            let (dy, dx) = (a as f64 - half as f64, b as f64 - half as f64);
            *v = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
            total += *v;
        }
    }
    let (w, h) = (img.width() as isize, img.height() as isize);
    let mut out = Vec::new();
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for a in 0..k as isize {
                for b in 0..k as isize {
                    let p = img.get(mirror(r + a - half, h), mirror(c + b - half, w)) as f64;
                    acc += kernel[a as usize][b as usize] / total * p;
                }
            }
            out.push(acc);
        }
    }
    out
}

/// Seven nested loops over (n, oy, ox, f, ky, kx, c) with explicit padding.
pub fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: &[f64], stride: usize, same: bool) -> (Vec<usize>, Vec<f64>) {
    let s = x.shape();
    let ws = w.shape();
    let (n, h, wd, c) = (s[0], s[1], s[2], s[3]);
    let (kh, kw, f) = (ws[0], ws[1], ws[3]);
    let (oh, ow, pt, pl) = if same {
        let oh = (h + stride - 1) / stride;
        let ow = (wd + stride - 1) / stride;
        let ph = ((oh - 1) * stride + kh).saturating_sub(h);
        let pw = ((ow - 1) * stride + kw).saturating_sub(wd);
        (oh, ow, ph / 2, pw / 2)
    } else {
        ((h - kh) / stride + 1, (wd - kw) / stride + 1, 0, 0)
    };
    let mut out = vec![0.0; n * oh * ow * f];
    for bi in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for fi in 0..f {
                    let mut acc = b[fi];
                    for ky in 0..kh {
                        for kx in 0..kw {
                            for ci in 0..c {
                                let iy = (oy * stride + ky) as isize - pt as isize;
                                let ix = (ox * stride + kx) as isize - pl as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                let xv = x.data()[((bi * h + iy as usize) * wd + ix as usize) * c + ci];
                                let wv = w.data()[((ky * kw + kx) * c + ci) * f + fi];
                                acc += xv * wv;
                            }
                        }
                    }
                    out[((bi * oh + oy) * ow + ox) * f + fi] = acc;
                }
            }
        }
    }
    (vec![n, oh, ow, f], out)
}

/// Small integers keep every partial sum exact, so any summation order must
/// agree bit for bit.
pub fn integer_tensor(shape: &[usize], rng: &mut XorShift64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.below(9) as f64 - 4.0)
}

/// Repeatedly grows the strong set into 8-neighbouring weak pixels until
/// nothing changes.
pub fn relaxation_hysteresis(suppressed: &[f64], w: usize, h: usize, low: f64, high: f64) -> Vec<bool> {
    let mut edge: Vec<bool> = suppressed.iter().map(|&m| m > high).collect();
    let weak = |m: f64| m > 0.0 && m >= low;
    loop {
        let mut changed = false;
        for r in 0..h {
            for c in 0..w {
                let i = r * w + c;
                if edge[i] || !weak(suppressed[i]) {
                    continue;
                }
                let touches = (r.saturating_sub(1)..=(r + 1).min(h - 1))
                    .any(|rr| (c.saturating_sub(1)..=(c + 1).min(w - 1)).any(|cc| edge[rr * w + cc]));
                if touches {
                    edge[i] = true;
                    changed = true;
                }
            }
        }
        if !changed {
            return edge;
        }
    }
}

/// A noisy bright disc on a dark background. Smooth blobs give long
/// connected ridges; pure noise would not.
pub fn blob_image(w: usize, h: usize, rng: &mut XorShift64) -> GrayImage {
    let cx = rng.uniform(0.0, w as f64);
    let cy = rng.uniform(0.0, h as f64);
    let radius = rng.uniform(3.0, 10.0);
    GrayImage::from_fn(w, h, |r, c| {
        let d = ((r as f64 - cy).powi(2) + (c as f64 - cx).powi(2)).sqrt();
        let base = if d < radius { 190.0 } else { 60.0 };
        (base + rng.uniform(-40.0, 40.0)).clamp(0.0, 255.0) as u8
    })
}
