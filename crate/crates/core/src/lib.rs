//! Algorithmic core of the almond/shell grading pipeline: preprocessing
//! kernels, annotation geometry, dataset construction, a small CNN engine,
//! the AlmondNet-20 layer stack and classification metrics.
//!
//! The crate is `no_std` and only needs `alloc`; file formats and IO live in
//! the `almond` crate.
#![no_std]

extern crate alloc;

pub mod almondnet;
pub mod annotation;
pub mod dataset;
pub mod image;
pub mod imageproc;
pub mod metrics;
pub mod nn;
pub mod rng;

pub use image::{BinaryImage, GrayImage, RgbImage};
