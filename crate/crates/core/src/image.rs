//! Raster types shared by the preprocessing kernels.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Error for rasters whose buffer does not match their declared size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterSizeError {
    pub expected: usize,
    pub actual: usize,
}

impl fmt::Display for RasterSizeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "raster buffer has {} values, expected {}", self.actual, self.expected)
    }
}

impl core::error::Error for RasterSizeError {}

/// Single-channel 8-bit image, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0)
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self { width, height, pixels: vec![value; width * height] }
    }

    pub fn from_raw(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, RasterSizeError> {
        if pixels.len() != width * height {
            return Err(RasterSizeError { expected: width * height, actual: pixels.len() });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                pixels.push(f(r, c));
            }
        }
        Self { width, height, pixels }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        self.pixels[row * self.width + col] = value;
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.pixels
    }

    /// Pixel at a possibly out-of-range coordinate, mirrored with reflect-101.
    #[inline]
    pub fn get_reflect(&self, row: isize, col: isize) -> u8 {
        self.get(reflect101(row, self.height), reflect101(col, self.width))
    }

    /// Copy of the `[row0, row0+h) x [col0, col0+w)` window. The caller
    /// guarantees the window lies inside the image.
    pub fn crop(&self, row0: usize, col0: usize, h: usize, w: usize) -> GrayImage {
        debug_assert!(row0 + h <= self.height && col0 + w <= self.width);
        let mut pixels = Vec::with_capacity(h * w);
        for r in row0..row0 + h {
            let start = r * self.width + col0;
            pixels.extend_from_slice(&self.pixels[start..start + w]);
        }
        GrayImage { width: w, height: h, pixels }
    }

    /// Nearest-neighbour resample to `width x height`.
    pub fn resize_nearest(&self, width: usize, height: usize) -> GrayImage {
        if width == self.width && height == self.height {
            return self.clone();
        }
        GrayImage::from_fn(width, height, |r, c| {
            let sr = ((r * self.height) / height.max(1)).min(self.height.saturating_sub(1));
            let sc = ((c * self.width) / width.max(1)).min(self.width.saturating_sub(1));
            self.get(sr, sc)
        })
    }

    pub fn mean(&self) -> f64 {
        if self.pixels.is_empty() {
            return 0.0;
        }
        self.pixels.iter().map(|&p| p as f64).sum::<f64>() / self.pixels.len() as f64
    }

    pub fn variance(&self) -> f64 {
        if self.pixels.is_empty() {
            return 0.0;
        }
        let m = self.mean();
        self.pixels.iter().map(|&p| (p as f64 - m) * (p as f64 - m)).sum::<f64>()
            / self.pixels.len() as f64
    }
}

/// Three-channel 8-bit image, row-major, `(R, G, B)` per pixel.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        Self { width, height, pixels: vec![rgb; width * height] }
    }

    pub fn from_raw(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self, RasterSizeError> {
        if pixels.len() != width * height {
            return Err(RasterSizeError { expected: width * height, actual: pixels.len() });
        }
        Ok(Self { width, height, pixels })
    }

    /// Every channel set to the gray value.
    pub fn from_gray(img: &GrayImage) -> Self {
        Self {
            width: img.width(),
            height: img.height(),
            pixels: img.pixels().iter().map(|&v| [v, v, v]).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }
}

/// Image whose pixels are exactly 0 or 255.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BinaryImage(GrayImage);

impl BinaryImage {
    /// Maps `true` to 255.
    pub fn from_mask(width: usize, height: usize, mask: &[bool]) -> Self {
        debug_assert_eq!(mask.len(), width * height);
        let pixels = mask.iter().map(|&m| if m { 255 } else { 0 }).collect();
        BinaryImage(GrayImage { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.0.width
    }

    pub fn height(&self) -> usize {
        self.0.height
    }

    pub fn is_set(&self, row: usize, col: usize) -> bool {
        self.0.get(row, col) == 255
    }

    pub fn count_set(&self) -> usize {
        self.0.pixels.iter().filter(|&&p| p == 255).count()
    }

    pub fn as_gray(&self) -> &GrayImage {
        &self.0
    }

    pub fn into_gray(self) -> GrayImage {
        self.0
    }
}

/// Reflect-101 index mapping (`dcb|abcd|cba`). Lengths of 1 map to 0.
#[inline]
pub fn reflect101(i: isize, len: usize) -> usize {
    let n = len as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect101_mirrors_without_edge_repeat() {
        let idx: Vec<usize> = (-3..7).map(|i| reflect101(i, 4)).collect();
        assert_eq!(idx, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0]);
        assert_eq!(reflect101(-5, 1), 0);
        assert_eq!(reflect101(-1, 2), 1);
    }

    #[test]
    fn crop_and_resize() {
        let img = GrayImage::from_fn(4, 4, |r, c| (r * 4 + c) as u8);
        assert_eq!(img.crop(1, 1, 2, 2).pixels(), &[5, 6, 9, 10]);
        let up = GrayImage::from_raw(2, 1, vec![1, 2]).unwrap().resize_nearest(4, 2);
        assert_eq!(up.pixels(), &[1, 1, 2, 2, 1, 1, 2, 2]);
        assert!(GrayImage::from_raw(2, 2, vec![0; 3]).is_err());
    }
}
