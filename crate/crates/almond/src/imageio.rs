//! Raster IO. Any format the `image` crate decodes can be read; output is
//! always binary PGM so golden files compare byte for byte.

use std::fs;
use std::io::Write;
use std::path::Path;

use almond_core::imageproc::to_grayscale;
use almond_core::{GrayImage, RgbImage};

use crate::error::{Error, IoContext, Result};

fn decode(path: &Path) -> Result<image::DynamicImage> {
    let bytes = fs::read(path).at(path)?;
    image::load_from_memory(&bytes).map_err(|e| Error::ImageDecode { path: path.into(), message: e.to_string() })
}

/// Reads an image as RGB; single-channel files are replicated.
pub fn read_rgb(path: &Path) -> Result<RgbImage> {
    let img = decode(path)?.into_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels = img.pixels().map(|p| p.0).collect();
    Ok(RgbImage::from_raw(w, h, pixels).expect("decoder returns w*h pixels"))
}

/// Reads an image as 8-bit gray. Colour input goes through
/// [`to_grayscale`], not the decoder's own luma weights.
pub fn read_gray(path: &Path) -> Result<GrayImage> {
    let img = decode(path)?;
    if let image::DynamicImage::ImageLuma8(gray) = img {
        let (w, h) = (gray.width() as usize, gray.height() as usize);
        return Ok(GrayImage::from_raw(w, h, gray.into_raw()).expect("decoder returns w*h pixels"));
    }
    Ok(to_grayscale(&read_rgb(path)?))
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    write_atomic(path, &encode_pgm(img))
}

/// Writes through a sibling temporary file and renames it into place, so a
/// reader never observes a half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).at(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = std::path::PathBuf::from(tmp);
    let result = (|| {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.at(path)
}
