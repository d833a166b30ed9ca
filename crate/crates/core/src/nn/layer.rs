use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use super::ops::conv_axis;
use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Output extent `ceil(input / stride)`; odd padding goes bottom/right.
    Same,
    Valid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ForwardMode {
    Train,
    #[default]
    Infer,
}

/// One entry of a sequential stack.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Conv2d { filters: usize, kernel: (usize, usize), stride: usize, padding: Padding },
    MaxPool2d { pool: usize, stride: usize },
    SpatialDropout { rate: f64 },
    Dropout { rate: f64 },
    Flatten,
    Dense { units: usize },
    BatchNorm { epsilon: f64, momentum: f64 },
    Relu,
    Softmax,
}

impl LayerSpec {
    pub fn conv3x3(filters: usize) -> Self {
        Self::Conv2d { filters, kernel: (3, 3), stride: 1, padding: Padding::Same }
    }

    pub fn pool(size: usize) -> Self {
        Self::MaxPool2d { pool: size, stride: size }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Conv2d { .. } => "conv2d",
            Self::MaxPool2d { .. } => "maxpool2d",
            Self::SpatialDropout { .. } => "spatial_dropout",
            Self::Dropout { .. } => "dropout",
            Self::Flatten => "flatten",
            Self::Dense { .. } => "dense",
            Self::BatchNorm { .. } => "batchnorm",
            Self::Relu => "relu",
            Self::Softmax => "softmax",
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        match *self {
            Self::Conv2d { filters, kernel, stride, .. } => {
                if filters == 0 || kernel.0 == 0 || kernel.1 == 0 || stride == 0 {
                    return Err(NnError::InvalidSpec("conv2d needs filters, kernel and stride >= 1"));
                }
            }
            Self::MaxPool2d { pool, stride } => {
                if pool == 0 || stride == 0 {
                    return Err(NnError::InvalidSpec("pool size and stride must be >= 1"));
                }
            }
            Self::SpatialDropout { rate } | Self::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(NnError::InvalidRate(rate));
                }
            }
            Self::Dense { units } => {
                if units == 0 {
                    return Err(NnError::InvalidSpec("dense needs at least one unit"));
                }
            }
            Self::BatchNorm { epsilon, momentum } => {
                if epsilon.is_nan() || epsilon <= 0.0 || !(0.0..=1.0).contains(&momentum) {
                    return Err(NnError::InvalidSpec("batchnorm needs epsilon > 0 and momentum in [0,1]"));
                }
            }
            Self::Flatten | Self::Relu | Self::Softmax => {}
        }
        Ok(())
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, NnError> {
        self.validate()?;
        let spatial = |ctx: &'static str| -> Result<(usize, usize, usize), NnError> {
            match *input {
                [h, w, c] => Ok((h, w, c)),
                _ => Err(NnError::ShapeMismatch { context: ctx, expected: vec![0, 0, 0], got: input.to_vec() }),
            }
        };
        match *self {
            Self::Conv2d { filters, kernel, stride, padding } => {
                let (h, w, _) = spatial("conv2d input")?;
                let under = || NnError::ShapeUnderflow { layer: "conv2d", height: h, width: w, window: kernel.0.max(kernel.1) };
                let (oh, _) = conv_axis(h, kernel.0, stride, padding).ok_or_else(under)?;
                let (ow, _) = conv_axis(w, kernel.1, stride, padding).ok_or_else(under)?;
                Ok(vec![oh, ow, filters])
            }
            Self::MaxPool2d { pool, stride } => {
                let (h, w, c) = spatial("maxpool2d input")?;
                if h < pool || w < pool {
                    return Err(NnError::ShapeUnderflow { layer: "maxpool2d", height: h, width: w, window: pool });
                }
                Ok(vec![(h - pool) / stride + 1, (w - pool) / stride + 1, c])
            }
            Self::Flatten => Ok(vec![input.iter().product()]),
            Self::Dense { units } => match *input {
                [_] => Ok(vec![units]),
                _ => Err(NnError::ShapeMismatch { context: "dense input", expected: vec![0], got: input.to_vec() }),
            },
            Self::SpatialDropout { .. } => {
                spatial("spatial dropout input")?;
                Ok(input.to_vec())
            }
            Self::Dropout { .. } | Self::BatchNorm { .. } | Self::Relu | Self::Softmax => Ok(input.to_vec()),
        }
    }

    /// Shapes of the learnable parameters, in storage order.
    pub fn param_shapes(&self, input: &[usize]) -> Vec<(&'static str, Vec<usize>)> {
        match *self {
            Self::Conv2d { filters, kernel, .. } => {
                let c = input.last().copied().unwrap_or(0);
                vec![("weight", vec![kernel.0, kernel.1, c, filters]), ("bias", vec![filters])]
            }
            Self::Dense { units } => {
                let d = input.iter().product();
                vec![("weight", vec![d, units]), ("bias", vec![units])]
            }
            Self::BatchNorm { .. } => {
                let d = input.last().copied().unwrap_or(0);
                vec![("gamma", vec![d]), ("beta", vec![d])]
            }
            _ => Vec::new(),
        }
    }

    pub fn learnable_count(&self, input: &[usize]) -> usize {
        self.param_shapes(input).iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Conv2d { filters, kernel, stride, padding } => {
                let pad = if *padding == Padding::Same { "same" } else { "valid" };
                write!(f, "conv2d({filters}, {}x{}, stride {stride}, {pad})", kernel.0, kernel.1)
            }
            Self::MaxPool2d { pool, stride } => write!(f, "maxpool2d({pool}x{pool}, stride {stride})"),
            Self::SpatialDropout { rate } => write!(f, "spatial_dropout({rate})"),
            Self::Dropout { rate } => write!(f, "dropout({rate})"),
            Self::Dense { units } => write!(f, "dense({units})"),
            Self::BatchNorm { epsilon, momentum } => write!(f, "batchnorm(eps {epsilon}, momentum {momentum})"),
            other => f.write_str(other.kind()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes() {
        assert_eq!(LayerSpec::conv3x3(8).output_shape(&[7, 5, 3]).unwrap(), vec![7, 5, 8]);
        let strided = LayerSpec::Conv2d { filters: 2, kernel: (3, 3), stride: 2, padding: Padding::Same };
        assert_eq!(strided.output_shape(&[7, 6, 1]).unwrap(), vec![4, 3, 2]);
        assert_eq!(LayerSpec::pool(3).output_shape(&[13, 20, 4]).unwrap(), vec![4, 6, 4]);
        assert_eq!(LayerSpec::Flatten.output_shape(&[2, 3, 4]).unwrap(), vec![24]);
        assert!(LayerSpec::Dense { units: 3 }.output_shape(&[2, 3, 4]).is_err());
        assert!(matches!(LayerSpec::pool(2).output_shape(&[1, 4, 2]), Err(NnError::ShapeUnderflow { .. })));
    }

    #[test]
    fn param_counts() {
        assert_eq!(LayerSpec::conv3x3(64).learnable_count(&[210, 320, 1]), 3 * 3 * 64 + 64);
        assert_eq!(LayerSpec::Dense { units: 2 }.learnable_count(&[64]), 130);
        assert_eq!(LayerSpec::BatchNorm { epsilon: 1e-3, momentum: 0.99 }.learnable_count(&[64]), 128);
        assert_eq!(LayerSpec::Relu.learnable_count(&[64]), 0);
    }

    #[test]
    fn invalid_specs() {
        assert!(LayerSpec::Dropout { rate: 1.0 }.validate().is_err());
        assert!(LayerSpec::pool(0).validate().is_err());
        assert!(LayerSpec::Dense { units: 0 }.validate().is_err());
    }
}
