use alloc::vec;

use super::{NnError, Real, Tensor};

/// One-hot encoding of class indices as `[N, classes]`.
pub fn one_hot<T: Real>(labels: &[usize], classes: usize) -> Result<Tensor<T>, NnError> {
    let mut t = Tensor::zeros(&[labels.len(), classes]);
    for (row, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(NnError::ShapeMismatch { context: "label index", expected: vec![classes], got: vec![y] });
        }
        t.data_mut()[row * classes + y] = T::one();
    }
    Ok(t)
}

/// Class-weighted softmax cross-entropy, fused with its gradient.
///
/// Per sample the loss is `-w_y * log softmax(z)_y`; the batch loss is the
/// plain mean over samples and the gradient is `w_y * (p - t) / N`. The loss
/// value itself is accumulated in `f64`.
pub fn softmax_cross_entropy<T: Real>(logits: &Tensor<T>, targets: &Tensor<T>, class_weights: &[f64]) -> Result<(f64, Tensor<T>), NnError> {
    let [n, k] = logits.dims2("logits")?;
    if targets.shape() != logits.shape() || class_weights.len() != k {
        return Err(NnError::ShapeMismatch { context: "loss targets", expected: vec![n, k], got: targets.shape().to_vec() });
    }
    if n == 0 {
        return Err(NnError::ZeroBatch);
    }
    let mut grad = Tensor::zeros(&[n, k]);
    let mut total = 0.0f64;
    let inv_n = 1.0 / n as f64;
    for (row, (z, t)) in logits.data().chunks(k).zip(targets.data().chunks(k)).enumerate() {
        let target = t.iter().position(|&v| v == T::one()).ok_or(NnError::ShapeMismatch {
            context: "one-hot target row",
            expected: vec![k],
            got: vec![row],
        })?;
        let w = class_weights[target];
        let m = z.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = z.iter().map(|v| libm::exp(v.as_f64() - m)).sum();
        let log_z = m + libm::log(sum);
        total += -w * (z[target].as_f64() - log_z);
        let g = &mut grad.data_mut()[row * k..(row + 1) * k];
        for j in 0..k {
            let p = libm::exp(z[j].as_f64() - log_z);
            let tj = if j == target { 1.0 } else { 0.0 };
            g[j] = T::lit(w * (p - tj) * inv_n);
        }
    }
    Ok((total * inv_n, grad))
}
