use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::loss::softmax_cross_entropy;
use super::{ForwardMode, NnError, Real, Sequential, Tensor};
use crate::rng::XorShift64;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Worst per-tensor error `|a - n| / max(|a|, |n|, floor)`, norms taken
    /// over the probed coordinates of one parameter tensor.
    pub max_relative_error: f64,
    /// Parameter tensor (`layer.name`) with the worst error.
    pub worst: Option<String>,
    /// Worst single-coordinate relative error, for diagnostics.
    pub max_coordinate_error: f64,
    pub worst_coordinate: Option<String>,
    pub checked: usize,
    pub tensors: Vec<TensorCheck>,
}

/// Norms over the probed coordinates of one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub diff_norm: f64,
    pub analytic_norm: f64,
    pub numeric_norm: f64,
    pub relative_error: f64,
}

/// Precision the finite-difference loss evaluations run in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NumericPrecision {
    /// Same scalar type as the model.
    #[default]
    Native,
    /// Parameters are widened exactly to `f64` before differencing, so the
    /// reference is free of `f32` rounding noise.
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    pub samples_per_param: usize,
    pub seed: u64,
    /// Lower bound on the relative-error denominator. Gradients that vanish
    /// identically (e.g. a bias feeding a batch norm) are compared in
    /// absolute terms below this magnitude.
    pub abs_floor: f64,
    /// Tensor-level denominator floor as a fraction of the largest probed
    /// analytic tensor norm. A tensor whose true gradient is identically
    /// zero is then judged against the model's gradient scale instead of
    /// against its own rounding noise.
    pub scale_floor: f64,
    pub precision: NumericPrecision,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { epsilon: 1e-6, samples_per_param: 8, seed: 0, abs_floor: 1e-8, scale_floor: 1e-3, precision: NumericPrecision::Native }
    }
}

/// `|a - b| / max(|a|, |b|, floor)`, zero when all three vanish.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(floor);
    if scale == 0.0 {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

fn batch_loss<T: Real>(model: &mut Sequential<T>, input: &Tensor<T>, targets: &Tensor<T>, weights: &[f64]) -> Result<f64, NnError> {
    let logits = model.forward_logits(input, ForwardMode::Train)?;
    Ok(softmax_cross_entropy(&logits, targets, weights)?.0)
}

/// Coordinates to probe: `(param ordinal, index, analytic gradient, label)`.
fn analytic_probes<T: Real>(
    model: &mut Sequential<T>,
    input: &Tensor<T>,
    targets: &Tensor<T>,
    class_weights: &[f64],
    config: &GradCheckConfig,
) -> Result<Vec<(usize, usize, f64, String)>, NnError> {
    let logits = model.forward_logits(input, ForwardMode::Train)?;
    let (_, dlogits) = softmax_cross_entropy(&logits, targets, class_weights)?;
    model.backward(&dlogits)?;
    let mut probes = Vec::new();
    let mut rng = XorShift64::new(config.seed);
    let mut ordinal = 0;
    for (li, layer) in model.layers().iter().enumerate() {
        for p in &layer.params {
            let n = p.value.len();
            let mut coords: Vec<usize> = (0..n).collect();
            if n > config.samples_per_param {
                rng.shuffle(&mut coords);
                coords.truncate(config.samples_per_param);
            }
            for c in coords {
                probes.push((ordinal, c, p.grad.data()[c].as_f64(), format!("{li}.{}[{c}]", p.name)));
            }
            ordinal += 1;
        }
    }
    Ok(probes)
}

fn central_difference<U: Real>(
    model: &mut Sequential<U>,
    input: &Tensor<U>,
    targets: &Tensor<U>,
    class_weights: &[f64],
    ordinal: usize,
    coord: usize,
    epsilon: f64,
) -> Result<f64, NnError> {
    let original = model.params().nth(ordinal).expect("ordinal in range").value.data()[coord];
    let (up, down) = (original + U::lit(epsilon), original - U::lit(epsilon));
    let set = |m: &mut Sequential<U>, v: U| {
        m.params_mut().nth(ordinal).expect("ordinal in range").value.data_mut()[coord] = v;
    };
    set(model, up);
    let plus = batch_loss(model, input, targets, class_weights)?;
    set(model, down);
    let minus = batch_loss(model, input, targets, class_weights)?;
    set(model, original);
    // Divide by the step that was actually representable.
    Ok((plus - minus) / (up.as_f64() - down.as_f64()))
}

/// Compares back-propagated gradients against central differences
/// `(L(p + eps) - L(p - eps)) / 2 eps` on randomly sampled coordinates of
/// every parameter tensor.
///
/// The loss is evaluated in train mode (batch norm uses batch statistics)
/// with dropout disabled, so every evaluation is deterministic. Parameters,
/// running statistics and the dropout setting are restored afterwards.
pub fn gradient_check<T: Real>(
    model: &mut Sequential<T>,
    input: &Tensor<T>,
    targets: &Tensor<T>,
    class_weights: &[f64],
    config: GradCheckConfig,
) -> Result<GradCheckReport, NnError> {
    let saved_dropout = model.dropout_enabled();
    let saved_state = model.state_blobs();
    model.set_dropout_enabled(false);
    let result = run_check(model, input, targets, class_weights, &config);
    model.set_dropout_enabled(saved_dropout);
    model.load_state(&saved_state)?;
    result
}

fn run_check<T: Real>(
    model: &mut Sequential<T>,
    input: &Tensor<T>,
    targets: &Tensor<T>,
    class_weights: &[f64],
    config: &GradCheckConfig,
) -> Result<GradCheckReport, NnError> {
    let probes = analytic_probes(model, input, targets, class_weights, config)?;
    let mut wide = match config.precision {
        NumericPrecision::F64 => Some((model.cast::<f64>(), input.cast::<f64>(), targets.cast::<f64>())),
        NumericPrecision::Native => None,
    };
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        max_coordinate_error: 0.0,
        worst_coordinate: None,
        checked: 0,
        tensors: Vec::new(),
    };
    // Per tensor: (label, sum (a-n)^2, sum a^2, sum n^2)
    let mut tensors: Vec<(String, f64, f64, f64)> = Vec::new();
    let mut current = usize::MAX;
    for (ordinal, coord, analytic, label) in probes {
        let numeric = match wide.as_mut() {
            Some((m, x, t)) => central_difference(m, x, t, class_weights, ordinal, coord, config.epsilon)?,
            None => central_difference(model, input, targets, class_weights, ordinal, coord, config.epsilon)?,
        };
        let err = relative_error(analytic, numeric, config.abs_floor);
        report.checked += 1;
        if report.worst_coordinate.is_none() || err > report.max_coordinate_error {
            report.max_coordinate_error = err;
            report.worst_coordinate = Some(label.clone());
        }
        if ordinal != current {
            current = ordinal;
            let tensor = label.split('[').next().unwrap_or_default().into();
            tensors.push((tensor, 0.0, 0.0, 0.0));
        }
        let acc = tensors.last_mut().expect("pushed above");
        acc.1 += (analytic - numeric) * (analytic - numeric);
        acc.2 += analytic * analytic;
        acc.3 += numeric * numeric;
    }
    let largest = tensors.iter().map(|t| libm::sqrt(t.2)).fold(0.0, f64::max);
    let floor = config.abs_floor.max(config.scale_floor * largest);
    for (name, diff, a, n) in tensors {
        let (diff_norm, analytic_norm, numeric_norm) = (libm::sqrt(diff), libm::sqrt(a), libm::sqrt(n));
        let scale = analytic_norm.max(numeric_norm).max(floor);
        let err = if scale == 0.0 { 0.0 } else { diff_norm / scale };
        if report.worst.is_none() || err > report.max_relative_error {
            report.max_relative_error = err;
            report.worst = Some(name.clone());
        }
        report.tensors.push(TensorCheck { name, diff_norm, analytic_norm, numeric_norm, relative_error: err });
    }
    Ok(report)
}
