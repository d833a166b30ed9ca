//! The AlmondNet-20 layer stack, its reduced desk-scale variant and shape
//! tracing.
//!
//! Full stack (filters scaled by the channel multiplier):
//!
//! ```text
//! conv 64 + relu, pool 2
//! conv 128 + relu, pool 2, spatial dropout
//! conv 512 + relu, pool 2
//! conv 256 + relu, pool 2 (stride 2)
//! conv 256 + relu, pool 3
//! conv 128 + relu, pool 2
//! conv 128 + relu, pool 2
//! dropout, flatten, dense 64 + relu, batchnorm, dense 2, softmax
//! ```
//!
//! All convolutions are 3x3, stride 1, same padding.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::nn::{LayerSpec, NnError};

/// Filter counts of the seven convolution blocks at multiplier 1.
pub const FULL_FILTERS: [usize; 7] = [64, 128, 512, 256, 256, 128, 128];
/// Pool sizes following each convolution block.
pub const FULL_POOLS: [usize; 7] = [2, 2, 2, 2, 3, 2, 2];
pub const FULL_DENSE_UNITS: usize = 64;
pub const NUM_OUTPUTS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variant {
    /// Every block as published.
    #[default]
    Full,
    /// Blocks 1-4 plus the fifth convolution; stops before the 3x3 pool so
    /// 32x32 inputs fit.
    MiniV1,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Self::Full => "almondnet20",
            Self::MiniV1 => "mini-v1",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "almondnet20" | "full" => Some(Self::Full),
            "mini-v1" | "mini" => Some(Self::MiniV1),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    pub input_height: usize,
    pub input_width: usize,
    pub channel_multiplier: f64,
    pub spatial_dropout: f64,
    pub dropout: f64,
    pub kernel: usize,
    pub bn_epsilon: f64,
    pub bn_momentum: f64,
}

impl ModelConfig {
    /// Published configuration at 210x320 single-channel input.
    pub fn full() -> Self {
        Self {
            variant: Variant::Full,
            input_height: 210,
            input_width: 320,
            channel_multiplier: 1.0,
            spatial_dropout: 0.2,
            dropout: 0.5,
            kernel: 3,
            bn_epsilon: 1e-3,
            bn_momentum: 0.99,
        }
    }

    /// Desk-scale default: 32x32 input, quarter width, truncated cascade.
    pub fn mini() -> Self {
        Self { variant: Variant::MiniV1, input_height: 32, input_width: 32, channel_multiplier: 0.25, ..Self::full() }
    }

    pub fn name(&self) -> &'static str {
        self.variant.name()
    }

    /// Per-sample input shape `[H, W, 1]`.
    pub fn input_shape(&self) -> [usize; 3] {
        [self.input_height, self.input_width, 1]
    }

    pub fn scale(&self, width: usize) -> usize {
        (libm::round(width as f64 * self.channel_multiplier) as usize).max(1)
    }

    pub fn conv_filters(&self) -> Vec<usize> {
        let blocks = match self.variant {
            Variant::Full => 7,
            Variant::MiniV1 => 5,
        };
        FULL_FILTERS[..blocks].iter().map(|&f| self.scale(f)).collect()
    }

    pub fn dense_units(&self) -> [usize; 2] {
        [self.scale(FULL_DENSE_UNITS), NUM_OUTPUTS]
    }

    fn validate(&self) -> Result<(), NnError> {
        if !(self.channel_multiplier > 0.0 && self.channel_multiplier.is_finite()) {
            return Err(NnError::InvalidSpec("channel multiplier must be positive"));
        }
        if self.input_height == 0 || self.input_width == 0 || self.kernel == 0 {
            return Err(NnError::InvalidSpec("input size and kernel must be positive"));
        }
        Ok(())
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::mini()
    }
}

/// Layer specs for `config`, checked against its input size.
pub fn build_almondnet20(config: &ModelConfig) -> Result<Vec<LayerSpec>, NnError> {
    config.validate()?;
    let conv = |filters| LayerSpec::Conv2d {
        filters,
        kernel: (config.kernel, config.kernel),
        stride: 1,
        padding: crate::nn::Padding::Same,
    };
    let filters = config.conv_filters();
    let mut specs = Vec::new();
    for (block, &f) in filters.iter().enumerate() {
        specs.push(conv(f));
        specs.push(LayerSpec::Relu);
        let last_mini_block = config.variant == Variant::MiniV1 && block == filters.len() - 1;
        if !last_mini_block {
            specs.push(LayerSpec::pool(FULL_POOLS[block]));
        }
        if block == 1 {
            specs.push(LayerSpec::SpatialDropout { rate: config.spatial_dropout });
        }
    }
    let [hidden, out] = config.dense_units();
    specs.extend([
        LayerSpec::Dropout { rate: config.dropout },
        LayerSpec::Flatten,
        LayerSpec::Dense { units: hidden },
        LayerSpec::Relu,
        LayerSpec::BatchNorm { epsilon: config.bn_epsilon, momentum: config.bn_momentum },
        LayerSpec::Dense { units: out },
        LayerSpec::Softmax,
    ]);
    shape_trace(&specs, &config.input_shape())?;
    Ok(specs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub index: usize,
    pub spec: LayerSpec,
    pub output_shape: Vec<usize>,
    pub params: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeTrace {
    pub input_shape: Vec<usize>,
    pub rows: Vec<TraceRow>,
    pub total_params: usize,
}

impl ShapeTrace {
    /// Spatial size of the input and after every pooling layer.
    pub fn pool_cascade(&self) -> Vec<(usize, usize)> {
        let mut out = vec![(self.input_shape[0], self.input_shape[1])];
        for row in &self.rows {
            if matches!(row.spec, LayerSpec::MaxPool2d { .. }) {
                out.push((row.output_shape[0], row.output_shape[1]));
            }
        }
        out
    }

    pub fn flatten_width(&self) -> Option<usize> {
        self.rows.iter().find(|r| r.spec == LayerSpec::Flatten).map(|r| r.output_shape[0])
    }

    pub fn output_shape(&self) -> &[usize] {
        self.rows.last().map(|r| r.output_shape.as_slice()).unwrap_or(&self.input_shape)
    }
}

fn shape_str(shape: &[usize]) -> String {
    let mut s = String::new();
    for (i, d) in shape.iter().enumerate() {
        if i > 0 {
            s.push('x');
        }
        let _ = fmt::write(&mut s, format_args!("{d}"));
    }
    s
}

impl fmt::Display for ShapeTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>3}  {:<36} {:>14} {:>10}", "#", "layer", "output", "params")?;
        writeln!(f, "{:>3}  {:<36} {:>14} {:>10}", "-", "input", shape_str(&self.input_shape), 0)?;
        for row in &self.rows {
            let name = alloc::format!("{}", row.spec);
            writeln!(f, "{:>3}  {:<36} {:>14} {:>10}", row.index, name, shape_str(&row.output_shape), row.params)?;
        }
        write!(f, "total learnable parameters: {}", self.total_params)
    }
}

/// Applies each layer's shape rule in turn.
pub fn shape_trace(specs: &[LayerSpec], input_shape: &[usize]) -> Result<ShapeTrace, NnError> {
    let mut shape = input_shape.to_vec();
    let mut rows = Vec::with_capacity(specs.len());
    let mut total = 0;
    for (index, spec) in specs.iter().enumerate() {
        let params = spec.learnable_count(&shape);
        shape = spec.output_shape(&shape)?;
        total += params;
        rows.push(TraceRow { index, spec: spec.clone(), output_shape: shape.clone(), params });
    }
    Ok(ShapeTrace { input_shape: input_shape.to_vec(), rows, total_params: total })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv_filters(specs: &[LayerSpec]) -> Vec<usize> {
        specs
            .iter()
            .filter_map(|s| match s {
                LayerSpec::Conv2d { filters, .. } => Some(*filters),
                _ => None,
            })
            .collect()
    }

    fn dense_units(specs: &[LayerSpec]) -> Vec<usize> {
        specs
            .iter()
            .filter_map(|s| match s {
                LayerSpec::Dense { units } => Some(*units),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn full_stack_widths() {
        let specs = build_almondnet20(&ModelConfig::full()).unwrap();
        assert_eq!(conv_filters(&specs), vec![64, 128, 512, 256, 256, 128, 128]);
        assert_eq!(dense_units(&specs), vec![64, 2]);
        assert_eq!(specs.iter().filter(|s| matches!(s, LayerSpec::MaxPool2d { .. })).count(), 7);
        assert_eq!(specs.last(), Some(&LayerSpec::Softmax));
    }

    #[test]
    fn eighth_width_stack() {
        let cfg = ModelConfig { channel_multiplier: 0.125, ..ModelConfig::full() };
        let specs = build_almondnet20(&cfg).unwrap();
        assert_eq!(conv_filters(&specs), vec![8, 16, 64, 32, 32, 16, 16]);
        assert_eq!(dense_units(&specs), vec![8, 2]);
        let tiny = ModelConfig { channel_multiplier: 0.001, ..ModelConfig::full() };
        assert!(conv_filters(&build_almondnet20(&tiny).unwrap()).iter().all(|&f| f == 1));
    }

    #[test]
    fn small_input_underflows() {
        let cfg = ModelConfig { input_height: 16, input_width: 16, ..ModelConfig::full() };
        assert!(matches!(build_almondnet20(&cfg), Err(NnError::ShapeUnderflow { .. })));
        let bad = ModelConfig { channel_multiplier: 0.0, ..ModelConfig::full() };
        assert!(build_almondnet20(&bad).is_err());
    }

    #[test]
    fn full_trace() {
        let cfg = ModelConfig::full();
        let trace = shape_trace(&build_almondnet20(&cfg).unwrap(), &cfg.input_shape()).unwrap();
        assert_eq!(
            trace.pool_cascade(),
            vec![(210, 320), (105, 160), (52, 80), (26, 40), (13, 20), (4, 6), (2, 3), (1, 1)]
        );
        assert_eq!(trace.flatten_width(), Some(128));
        assert_eq!(trace.output_shape(), &[2]);
    }

    #[test]
    fn mini_trace() {
        let cfg = ModelConfig::mini();
        let specs = build_almondnet20(&cfg).unwrap();
        let trace = shape_trace(&specs, &cfg.input_shape()).unwrap();
        assert_eq!(trace.pool_cascade(), vec![(32, 32), (16, 16), (8, 8), (4, 4), (2, 2)]);
        assert_eq!(trace.flatten_width(), Some(2 * 2 * 64));
        assert_eq!(trace.output_shape(), &[2]);
        assert_eq!(build_almondnet20(&cfg).unwrap(), specs);
    }
}
