//! Preprocessing kernels: grayscale conversion, Gaussian blur, non-local
//! means denoising, mean-adaptive thresholding and Canny edge detection.
//!
//! Every kernel uses reflect-101 borders (`dcb|abcd|cba`) and works in `f64`
//! internally; outputs are re-quantized by rounding half away from zero.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::image::{reflect101, BinaryImage, GrayImage, RgbImage};

#[derive(Debug, Clone, PartialEq)]
pub enum ImageProcError {
    InvalidKernel { size: usize },
    InvalidSigma(f64),
    InvalidStrength(f64),
    InvalidRadius { template: usize, search: usize },
    InvalidBlockSize(usize),
    InvalidThresholds { low: f64, high: f64 },
}

impl fmt::Display for ImageProcError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InvalidKernel { size } => write!(f, "kernel size must be odd and >= 1, got {size}"),
            Self::InvalidSigma(s) => write!(f, "invalid gaussian sigma {s}"),
            Self::InvalidStrength(h) => write!(f, "filter strength must be positive, got {h}"),
            Self::InvalidRadius { template, search } => write!(
                f,
                "search radius {search} must be 0 or >= template radius {template}"
            ),
            Self::InvalidBlockSize(b) => write!(f, "block size must be odd and >= 3, got {b}"),
            Self::InvalidThresholds { low, high } => {
                write!(f, "thresholds must satisfy 0 <= low <= high, got low={low} high={high}")
            }
        }
    }
}

impl core::error::Error for ImageProcError {}

#[inline]
fn quantize(v: f64) -> u8 {
    libm::round(v).clamp(0.0, 255.0) as u8
}

/// Luma conversion with BT.601 weights.
pub fn to_grayscale(img: &RgbImage) -> GrayImage {
    let pixels = img
        .pixels()
        .iter()
        .map(|&[r, g, b]| quantize(0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64))
        .collect();
    GrayImage::from_raw(img.width(), img.height(), pixels).expect("same pixel count")
}

/// Sigma used when a non-positive sigma is requested for `ksize`.
pub fn default_sigma(ksize: usize) -> f64 {
    0.3 * ((ksize as f64 - 1.0) * 0.5 - 1.0) + 0.8
}

/// Normalized 1-D Gaussian taps, `ksize` long, centered.
pub fn gaussian_kernel_1d(ksize: usize, sigma: f64) -> Result<Vec<f64>, ImageProcError> {
    if ksize == 0 || ksize.is_multiple_of(2) {
        return Err(ImageProcError::InvalidKernel { size: ksize });
    }
    if !sigma.is_finite() {
        return Err(ImageProcError::InvalidSigma(sigma));
    }
    let sigma = if sigma <= 0.0 { default_sigma(ksize) } else { sigma };
    let half = (ksize / 2) as isize;
    let mut taps: Vec<f64> = (-half..=half)
        .map(|i| libm::exp(-((i * i) as f64) / (2.0 * sigma * sigma)))
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    Ok(taps)
}

/// Separable correlation of a real-valued plane with `taps` along both axes.
fn separable_filter(src: &[f64], width: usize, height: usize, taps: &[f64]) -> Vec<f64> {
    let half = (taps.len() / 2) as isize;
    let mut tmp = vec![0.0; width * height];
    for r in 0..height {
        let row = &src[r * width..(r + 1) * width];
        for c in 0..width {
            let mut acc = 0.0;
            for (k, &t) in taps.iter().enumerate() {
                acc += t * row[reflect101(c as isize + k as isize - half, width)];
            }
            tmp[r * width + c] = acc;
        }
    }
    let mut out = vec![0.0; width * height];
    for r in 0..height {
        for c in 0..width {
            let mut acc = 0.0;
            for (k, &t) in taps.iter().enumerate() {
                acc += t * tmp[reflect101(r as isize + k as isize - half, height) * width + c];
            }
            out[r * width + c] = acc;
        }
    }
    out
}

fn to_plane(img: &GrayImage) -> Vec<f64> {
    img.pixels().iter().map(|&p| p as f64).collect()
}

fn from_plane(width: usize, height: usize, plane: &[f64]) -> GrayImage {
    GrayImage::from_raw(width, height, plane.iter().map(|&v| quantize(v)).collect())
        .expect("same pixel count")
}

/// Separable Gaussian blur. `sigma <= 0` selects [`default_sigma`].
pub fn gaussian_blur(img: &GrayImage, ksize: usize, sigma: f64) -> Result<GrayImage, ImageProcError> {
    let taps = gaussian_kernel_1d(ksize, sigma)?;
    let (w, h) = (img.width(), img.height());
    if w == 0 || h == 0 {
        return Ok(img.clone());
    }
    Ok(from_plane(w, h, &separable_filter(&to_plane(img), w, h, &taps)))
}

/// Parameters of the direct non-local means filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NlmParams {
    /// Filter strength; larger values average more aggressively.
    pub h: f64,
    pub template_radius: usize,
    pub search_radius: usize,
    /// Noise standard deviation subtracted from patch distances.
    pub sigma: f64,
}

impl Default for NlmParams {
    fn default() -> Self {
        Self { h: 10.0, template_radius: 3, search_radius: 10, sigma: 0.0 }
    }
}

/// Direct non-local means. Each pixel becomes the weighted mean of the
/// pixels in its search window, weighted by
/// `exp(-max(d2 - 2 sigma^2, 0) / h^2)` where `d2` is the mean squared
/// difference between the two template patches.
pub fn nlm_denoise(img: &GrayImage, params: &NlmParams) -> Result<GrayImage, ImageProcError> {
    let NlmParams { h, template_radius: t, search_radius: s, sigma } = *params;
    if !(h > 0.0 && h.is_finite()) {
        return Err(ImageProcError::InvalidStrength(h));
    }
    if s > 0 && s < t {
        return Err(ImageProcError::InvalidRadius { template: t, search: s });
    }
    let (w, ht) = (img.width(), img.height());
    if s == 0 || w == 0 || ht == 0 {
        return Ok(img.clone());
    }

    // Pad once so the inner loops index a plain buffer.
    let pad = (t + s) as isize;
    let pw = w + 2 * pad as usize;
    let ph = ht + 2 * pad as usize;
    let mut padded = vec![0.0f64; pw * ph];
    for r in 0..ph {
        for c in 0..pw {
            padded[r * pw + c] = img.get_reflect(r as isize - pad, c as isize - pad) as f64;
        }
    }

    let patch_len = ((2 * t + 1) * (2 * t + 1)) as f64;
    let inv_h2 = 1.0 / (h * h);
    let bias = 2.0 * sigma * sigma;
    let (t, s) = (t as isize, s as isize);
    let mut out = vec![0.0f64; w * ht];
    for r in 0..ht as isize {
        for c in 0..w as isize {
            let (pr, pc) = (r + pad, c + pad);
            let mut wsum = 0.0;
            let mut acc = 0.0;
            for dr in -s..=s {
                for dc in -s..=s {
                    let (qr, qc) = (pr + dr, pc + dc);
                    let mut d2 = 0.0;
                    for tr in -t..=t {
                        let prow = ((pr + tr) as usize) * pw;
                        let qrow = ((qr + tr) as usize) * pw;
                        for tc in -t..=t {
                            let diff = padded[prow + (pc + tc) as usize] - padded[qrow + (qc + tc) as usize];
                            d2 += diff * diff;
                        }
                    }
                    d2 /= patch_len;
                    let weight = libm::exp(-(d2 - bias).max(0.0) * inv_h2);
                    wsum += weight;
                    acc += weight * padded[qr as usize * pw + qc as usize];
                }
            }
            out[r as usize * w + c as usize] = acc / wsum;
        }
    }
    Ok(from_plane(w, ht, &out))
}

/// Mean-adaptive binarization: 255 where `pixel > local_mean - c`.
pub fn adaptive_threshold(img: &GrayImage, block_size: usize, c: f64) -> Result<BinaryImage, ImageProcError> {
    if block_size < 3 || block_size.is_multiple_of(2) {
        return Err(ImageProcError::InvalidBlockSize(block_size));
    }
    let (w, h) = (img.width(), img.height());
    let box_taps = vec![1.0; block_size];
    let sums = separable_filter(&to_plane(img), w, h, &box_taps);
    let area = (block_size * block_size) as f64;
    let mask: Vec<bool> = img
        .pixels()
        .iter()
        .zip(&sums)
        .map(|(&p, &sum)| p as f64 > sum / area - c)
        .collect();
    Ok(BinaryImage::from_mask(w, h, &mask))
}

/// Gradient direction quantized to the four NMS axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeDirection {
    Horizontal,
    Diagonal45,
    Vertical,
    Diagonal135,
}

impl EdgeDirection {
    /// Quantize the gradient `(gx, gy)` (image rows grow downwards).
    pub fn from_gradient(gx: f64, gy: f64) -> Self {
        let mut deg = libm::atan2(gy, gx).to_degrees();
        if deg < 0.0 {
            deg += 180.0;
        }
        if !(22.5..157.5).contains(&deg) {
            Self::Horizontal
        } else if deg < 67.5 {
            Self::Diagonal45
        } else if deg < 112.5 {
            Self::Vertical
        } else {
            Self::Diagonal135
        }
    }

    /// Row/column step along the gradient.
    pub fn step(self) -> (isize, isize) {
        match self {
            Self::Horizontal => (0, 1),
            Self::Diagonal45 => (1, 1),
            Self::Vertical => (1, 0),
            Self::Diagonal135 => (1, -1),
        }
    }
}

/// Intermediate products of [`canny`].
#[derive(Debug, Clone)]
pub struct CannyStages {
    pub width: usize,
    pub height: usize,
    /// Sobel gradient magnitude of the smoothed image.
    pub magnitude: Vec<f64>,
    /// Magnitude after non-maximum suppression (suppressed pixels are 0).
    pub suppressed: Vec<f64>,
    pub edges: BinaryImage,
}

const CANNY_SMOOTH_SIZE: usize = 5;
const CANNY_SMOOTH_SIGMA: f64 = 1.4;

/// Classic Canny detector; see [`canny_stages`].
pub fn canny(img: &GrayImage, low: f64, high: f64) -> Result<BinaryImage, ImageProcError> {
    canny_stages(img, low, high).map(|s| s.edges)
}

/// Canny with every intermediate exposed: 5x5 Gaussian (sigma 1.4), Sobel
/// gradients, non-maximum suppression along the quantized direction, then
/// double threshold with 8-connected hysteresis.
pub fn canny_stages(img: &GrayImage, low: f64, high: f64) -> Result<CannyStages, ImageProcError> {
    if !(low >= 0.0 && low <= high && high.is_finite()) {
        return Err(ImageProcError::InvalidThresholds { low, high });
    }
    let (w, h) = (img.width(), img.height());
    if w == 0 || h == 0 {
        return Ok(CannyStages {
            width: w,
            height: h,
            magnitude: Vec::new(),
            suppressed: Vec::new(),
            edges: BinaryImage::from_mask(w, h, &[]),
        });
    }
    let taps = gaussian_kernel_1d(CANNY_SMOOTH_SIZE, CANNY_SMOOTH_SIGMA)?;
    let smooth = separable_filter(&to_plane(img), w, h, &taps);
    let at = |r: isize, c: isize| smooth[reflect101(r, h) * w + reflect101(c, w)];

    let mut magnitude = vec![0.0; w * h];
    let mut direction = vec![EdgeDirection::Horizontal; w * h];
    for r in 0..h as isize {
        for c in 0..w as isize {
            let gx = (at(r - 1, c + 1) + 2.0 * at(r, c + 1) + at(r + 1, c + 1))
                - (at(r - 1, c - 1) + 2.0 * at(r, c - 1) + at(r + 1, c - 1));
            let gy = (at(r + 1, c - 1) + 2.0 * at(r + 1, c) + at(r + 1, c + 1))
                - (at(r - 1, c - 1) + 2.0 * at(r - 1, c) + at(r - 1, c + 1));
            let i = r as usize * w + c as usize;
            magnitude[i] = libm::sqrt(gx * gx + gy * gy);
            direction[i] = EdgeDirection::from_gradient(gx, gy);
        }
    }

    // Ties along the gradient keep the pixel on the negative side only, so a
    // symmetric plateau of two pixels yields a single edge pixel.
    let mag_at = |r: isize, c: isize| {
        if r < 0 || c < 0 || r >= h as isize || c >= w as isize {
            0.0
        } else {
            magnitude[r as usize * w + c as usize]
        }
    };
    let mut suppressed = vec![0.0; w * h];
    for r in 0..h as isize {
        for c in 0..w as isize {
            let i = r as usize * w + c as usize;
            let m = magnitude[i];
            if m == 0.0 {
                continue;
            }
            let (dr, dc) = direction[i].step();
            if m > mag_at(r - dr, c - dc) && m >= mag_at(r + dr, c + dc) {
                suppressed[i] = m;
            }
        }
    }

    let mut edge = vec![false; w * h];
    let mut queue = VecDeque::new();
    for (i, &m) in suppressed.iter().enumerate() {
        if m > high {
            edge[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (r, c) = ((i / w) as isize, (i % w) as isize);
        for dr in -1..=1 {
            for dc in -1..=1 {
                let (nr, nc) = (r + dr, c + dc);
                if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                    continue;
                }
                let j = nr as usize * w + nc as usize;
                if !edge[j] && suppressed[j] >= low && suppressed[j] > 0.0 {
                    edge[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }

    Ok(CannyStages { width: w, height: h, magnitude, suppressed, edges: BinaryImage::from_mask(w, h, &edge) })
}

/// Which preprocessing output is handed to the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeedStage {
    Gray,
    Blur,
    #[default]
    Denoise,
    Threshold,
    Canny,
}

impl FeedStage {
    pub const ALL: [FeedStage; 5] =
        [FeedStage::Gray, FeedStage::Blur, FeedStage::Denoise, FeedStage::Threshold, FeedStage::Canny];

    /// File-name suffix / config spelling.
    pub fn name(self) -> &'static str {
        match self {
            Self::Gray => "gray",
            Self::Blur => "blur",
            Self::Denoise => "denoise",
            Self::Threshold => "thresh",
            Self::Canny => "canny",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|st| st.name() == s || (s == "threshold" && *st == Self::Threshold))
    }
}

impl fmt::Display for FeedStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreprocessParams {
    pub blur_kernel: usize,
    /// Non-positive selects [`default_sigma`] for the kernel size.
    pub blur_sigma: f64,
    pub nlm: NlmParams,
    pub threshold_block: usize,
    pub threshold_c: f64,
    pub canny_low: f64,
    pub canny_high: f64,
    pub feed_stage: FeedStage,
}

impl Default for PreprocessParams {
    fn default() -> Self {
        Self {
            blur_kernel: 5,
            blur_sigma: 0.0,
            nlm: NlmParams::default(),
            threshold_block: 11,
            threshold_c: 2.0,
            canny_low: 50.0,
            canny_high: 150.0,
            feed_stage: FeedStage::Denoise,
        }
    }
}

/// All five stage outputs of [`preprocess_chain`].
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessStages {
    pub gray: GrayImage,
    pub blur: GrayImage,
    pub denoise: GrayImage,
    pub threshold: BinaryImage,
    pub canny: BinaryImage,
}

impl PreprocessStages {
    pub fn stage(&self, stage: FeedStage) -> &GrayImage {
        match stage {
            FeedStage::Gray => &self.gray,
            FeedStage::Blur => &self.blur,
            FeedStage::Denoise => &self.denoise,
            FeedStage::Threshold => self.threshold.as_gray(),
            FeedStage::Canny => self.canny.as_gray(),
        }
    }

    /// Stages in pipeline order, tagged with their names.
    pub fn iter(&self) -> impl Iterator<Item = (FeedStage, &GrayImage)> {
        FeedStage::ALL.into_iter().map(move |s| (s, self.stage(s)))
    }

    pub fn feed(&self, params: &PreprocessParams) -> &GrayImage {
        self.stage(params.feed_stage)
    }
}

/// grayscale -> Gaussian blur -> NLM denoise, then the thresholded and
/// Canny edge maps of the denoised image.
pub fn preprocess_chain(img: &RgbImage, params: &PreprocessParams) -> Result<PreprocessStages, ImageProcError> {
    let gray = to_grayscale(img);
    preprocess_gray(gray, params)
}

/// [`preprocess_chain`] for input that is already single-channel.
pub fn preprocess_gray(gray: GrayImage, params: &PreprocessParams) -> Result<PreprocessStages, ImageProcError> {
    let blur = gaussian_blur(&gray, params.blur_kernel, params.blur_sigma)?;
    let denoise = nlm_denoise(&blur, &params.nlm)?;
    let threshold = adaptive_threshold(&denoise, params.threshold_block, params.threshold_c)?;
    let canny = canny(&denoise, params.canny_low, params.canny_high)?;
    Ok(PreprocessStages { gray, blur, denoise, threshold, canny })
}

/// Runs only the stages needed to produce `params.feed_stage`.
pub fn preprocess_for_feed(gray: GrayImage, params: &PreprocessParams) -> Result<GrayImage, ImageProcError> {
    if params.feed_stage == FeedStage::Gray {
        return Ok(gray);
    }
    let blur = gaussian_blur(&gray, params.blur_kernel, params.blur_sigma)?;
    if params.feed_stage == FeedStage::Blur {
        return Ok(blur);
    }
    let denoise = nlm_denoise(&blur, &params.nlm)?;
    Ok(match params.feed_stage {
        FeedStage::Threshold => {
            adaptive_threshold(&denoise, params.threshold_block, params.threshold_c)?.into_gray()
        }
        FeedStage::Canny => canny(&denoise, params.canny_low, params.canny_high)?.into_gray(),
        _ => denoise,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::XorShift64;

    fn random_image(w: usize, h: usize, seed: u64) -> GrayImage {
        let mut rng = XorShift64::new(seed);
        GrayImage::from_fn(w, h, |_, _| rng.below(256) as u8)
    }

    #[test]
    fn grayscale_examples() {
        let white = RgbImage::filled(3, 2, [255, 255, 255]);
        assert!(to_grayscale(&white).pixels().iter().all(|&p| p == 255));
        let red = RgbImage::filled(1, 1, [255, 0, 0]);
        assert_eq!(to_grayscale(&red).pixels(), &[76]);
        for v in [0u8, 1, 17, 128, 254] {
            let g = to_grayscale(&RgbImage::filled(2, 2, [v, v, v]));
            assert!(g.pixels().iter().all(|&p| p == v));
        }
    }

    #[test]
    fn blur_rejects_bad_kernels() {
        let img = GrayImage::new(4, 4);
        assert_eq!(gaussian_blur(&img, 4, 1.0), Err(ImageProcError::InvalidKernel { size: 4 }));
        assert_eq!(gaussian_blur(&img, 0, 1.0), Err(ImageProcError::InvalidKernel { size: 0 }));
        assert!(gaussian_blur(&img, 3, f64::NAN).is_err());
    }

    #[test]
    fn blur_keeps_constants() {
        for k in [1, 3, 5, 9] {
            let img = GrayImage::filled(6, 5, 131);
            assert_eq!(gaussian_blur(&img, k, 0.0).unwrap(), img);
        }
    }

    #[test]
    fn blur_impulse_matches_outer_product() {
        let mut img = GrayImage::new(7, 7);
        img.set(3, 3, 255);
        let out = gaussian_blur(&img, 3, 1.0).unwrap();
        // Taps evaluated directly: exp(-1/2) relative to the center.
        let e = libm::exp(-0.5);
        let k = [e / (1.0 + 2.0 * e), 1.0 / (1.0 + 2.0 * e), e / (1.0 + 2.0 * e)];
        for r in 0..7 {
            for c in 0..7 {
                let expected = if (2..=4).contains(&r) && (2..=4).contains(&c) {
                    libm::round(255.0 * k[r - 2] * k[c - 2]) as u8
                } else {
                    0
                };
                assert_eq!(out.get(r, c), expected, "({r},{c})");
            }
        }
    }

    #[test]
    fn default_sigma_formula() {
        assert!((default_sigma(5) - 1.1).abs() < 1e-12);
        assert!((default_sigma(3) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn nlm_constant_and_identity() {
        let img = GrayImage::filled(6, 6, 77);
        assert_eq!(nlm_denoise(&img, &NlmParams { search_radius: 3, template_radius: 1, ..Default::default() }).unwrap(), img);
        let noisy = random_image(9, 7, 5);
        let p = NlmParams { search_radius: 0, template_radius: 3, ..Default::default() };
        assert_eq!(nlm_denoise(&noisy, &p).unwrap(), noisy);
    }

    #[test]
    fn nlm_small_h_keeps_two_level_image() {
        // Self weight is 1; every other candidate whose patch differs has
        // weight exp(-d2 / 1e-4) which underflows to 0. Candidates with an
        // identical patch carry the same value, so output = input.
        let img = GrayImage::from_fn(5, 5, |r, c| if (r + c) % 2 == 0 { 10 } else { 200 });
        let p = NlmParams { h: 0.01, template_radius: 1, search_radius: 2, sigma: 0.0 };
        assert_eq!(nlm_denoise(&img, &p).unwrap(), img);
    }

    #[test]
    fn nlm_rejects_bad_params() {
        let img = GrayImage::new(3, 3);
        let bad_h = NlmParams { h: 0.0, ..Default::default() };
        assert!(matches!(nlm_denoise(&img, &bad_h), Err(ImageProcError::InvalidStrength(_))));
        let bad_r = NlmParams { template_radius: 3, search_radius: 2, ..Default::default() };
        assert!(matches!(nlm_denoise(&img, &bad_r), Err(ImageProcError::InvalidRadius { .. })));
    }

    #[test]
    fn nlm_reduces_noise_variance() {
        let mut rng = XorShift64::new(99);
        let img = GrayImage::from_fn(24, 24, |_, _| (128.0 + rng.uniform(-10.0, 10.0)).round() as u8);
        let out = nlm_denoise(&img, &NlmParams { h: 10.0, template_radius: 1, search_radius: 4, sigma: 0.0 }).unwrap();
        assert!(out.variance() < img.variance(), "{} vs {}", out.variance(), img.variance());
    }

    #[test]
    fn threshold_examples() {
        let img = GrayImage::filled(5, 4, 90);
        assert_eq!(adaptive_threshold(&img, 3, 2.0).unwrap().count_set(), 20);
        assert_eq!(adaptive_threshold(&img, 3, -2.0).unwrap().count_set(), 0);
        let row = GrayImage::from_raw(3, 1, vec![0, 100, 0]).unwrap();
        let out = adaptive_threshold(&row, 3, 0.0).unwrap();
        assert_eq!(out.as_gray().pixels(), &[0, 255, 0]);
        assert_eq!(adaptive_threshold(&img, 4, 0.0), Err(ImageProcError::InvalidBlockSize(4)));
        assert_eq!(adaptive_threshold(&img, 1, 0.0), Err(ImageProcError::InvalidBlockSize(1)));
    }

    #[test]
    fn canny_constant_is_empty() {
        let img = GrayImage::filled(12, 12, 200);
        assert_eq!(canny(&img, 50.0, 150.0).unwrap().count_set(), 0);
        assert!(canny(&img, 10.0, 5.0).is_err());
    }

    #[test]
    fn canny_vertical_step_single_line() {
        let img = GrayImage::from_fn(16, 16, |_, c| if c < 8 { 0 } else { 255 });
        let edges = canny(&img, 50.0, 150.0).unwrap();
        for r in 1..15 {
            let cols: Vec<usize> = (0..16).filter(|&c| edges.is_set(r, c)).collect();
            assert_eq!(cols.len(), 1, "row {r}: {cols:?}");
            assert!((7..=8).contains(&cols[0]), "row {r}: {cols:?}");
        }
    }

    #[test]
    fn edge_direction_quantization() {
        assert_eq!(EdgeDirection::from_gradient(1.0, 0.0), EdgeDirection::Horizontal);
        assert_eq!(EdgeDirection::from_gradient(-1.0, 0.1), EdgeDirection::Horizontal);
        assert_eq!(EdgeDirection::from_gradient(1.0, 1.0), EdgeDirection::Diagonal45);
        assert_eq!(EdgeDirection::from_gradient(0.0, -3.0), EdgeDirection::Vertical);
        assert_eq!(EdgeDirection::from_gradient(-1.0, 1.0), EdgeDirection::Diagonal135);
    }

    #[test]
    fn white_input_propagates_through_chain() {
        let img = RgbImage::filled(20, 20, [255, 255, 255]);
        let p = PreprocessParams { nlm: NlmParams { search_radius: 3, template_radius: 1, ..Default::default() }, ..Default::default() };
        let stages = preprocess_chain(&img, &p).unwrap();
        assert_eq!(stages.iter().count(), 5);
        for (stage, out) in stages.iter() {
            let expected = if stage == FeedStage::Canny { 0 } else { 255 };
            assert!(out.pixels().iter().all(|&v| v == expected), "{stage}");
        }
        assert_eq!(preprocess_for_feed(stages.gray.clone(), &p).unwrap(), stages.denoise);
    }

    #[test]
    fn feed_stage_names_round_trip() {
        for s in FeedStage::ALL {
            assert_eq!(FeedStage::parse(s.name()), Some(s));
        }
        assert_eq!(FeedStage::parse("edges"), None);
    }
}
