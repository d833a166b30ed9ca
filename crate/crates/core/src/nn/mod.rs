//! Minimal tensor, layer and back-propagation engine for fixed sequential
//! stacks of conv / pool / dropout / dense / batch-norm layers.
//!
//! Activations are laid out `[N, H, W, C]` (channels last).

use alloc::vec::Vec;
use core::fmt;

pub mod gradcheck;
mod layer;
pub mod loss;
mod model;
pub mod ops;
mod optim;
mod real;
mod tensor;

pub use gradcheck::{gradient_check, relative_error, GradCheckConfig, GradCheckReport, TensorCheck, NumericPrecision};
pub use layer::{ForwardMode, LayerSpec, Padding};
pub use loss::{one_hot, softmax_cross_entropy};
pub use model::{he_uniform_limit, Layer, Param, Sequential, StateBlob};
pub use optim::{Optimizer, OptimizerKind};
pub use real::{axpy, dot, Real};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub enum NnError {
    ShapeMismatch { context: &'static str, expected: Vec<usize>, got: Vec<usize> },
    ShapeUnderflow { layer: &'static str, height: usize, width: usize, window: usize },
    ZeroBatch,
    InvalidRate(f64),
    InvalidSpec(&'static str),
    StaleCache,
    NonFiniteGradient,
}

impl fmt::Display for NnError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ShapeMismatch { context, expected, got } => {
                write!(f, "shape mismatch in {context}: expected {expected:?}, got {got:?}")
            }
            Self::ShapeUnderflow { layer, height, width, window } => {
                write!(f, "{layer} window {window} does not fit a {height}x{width} input")
            }
            Self::ZeroBatch => f.write_str("empty batch"),
            Self::InvalidRate(r) => write!(f, "dropout rate must lie in [0, 1), got {r}"),
            Self::InvalidSpec(msg) => f.write_str(msg),
            Self::StaleCache => f.write_str("backward pass without a matching train-mode forward"),
            Self::NonFiniteGradient => f.write_str("gradient contains NaN or infinity"),
        }
    }
}

impl core::error::Error for NnError {}
