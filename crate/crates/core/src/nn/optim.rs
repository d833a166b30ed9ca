use super::{NnError, Real, Sequential};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        Self::Adam { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
}

impl Default for Optimizer {
    fn default() -> Self {
        Self { kind: OptimizerKind::adam(), learning_rate: 1e-3 }
    }
}

impl Optimizer {
    pub fn sgd(learning_rate: f64) -> Self {
        Self { kind: OptimizerKind::Sgd, learning_rate }
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self { kind: OptimizerKind::adam(), learning_rate }
    }

    /// Updates one parameter buffer in place. `step` is 1-based.
    pub fn update<T: Real>(&self, value: &mut [T], grad: &[T], m: &mut [T], v: &mut [T], step: u64) {
        let lr = T::lit(self.learning_rate);
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, &g) in value.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam { beta1, beta2, epsilon } => {
                let t = step.max(1) as i32;
                let c1 = T::lit(1.0 / (1.0 - libm::pow(beta1, t as f64)));
                let c2 = T::lit(1.0 / (1.0 - libm::pow(beta2, t as f64)));
                let (b1, b2, eps) = (T::lit(beta1), T::lit(beta2), T::lit(epsilon));
                let one = T::one();
                for i in 0..value.len() {
                    let g = grad[i];
                    m[i] = b1 * m[i] + (one - b1) * g;
                    v[i] = b2 * v[i] + (one - b2) * g * g;
                    let m_hat = m[i] * c1;
                    let v_hat = v[i] * c2;
                    value[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }

    /// Applies the stored gradients of every parameter. Refuses (without
    /// touching any parameter) when a gradient is NaN or infinite.
    pub fn step<T: Real>(&self, model: &mut Sequential<T>, step: u64) -> Result<(), NnError> {
        if model.params().any(|p| !p.grad.all_finite()) {
            return Err(NnError::NonFiniteGradient);
        }
        for p in model.params_mut() {
            let (value, grad) = (p.value.data_mut(), p.grad.data());
            self.update(value, grad, &mut p.first_moment, &mut p.second_moment, step);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(opt: &Optimizer, theta: f64, g: f64, step: u64) -> f64 {
        let mut v = [theta];
        let (mut m1, mut m2) = ([0.0], [0.0]);
        opt.update(&mut v, &[g], &mut m1, &mut m2, step);
        v[0]
    }

    #[test]
    fn sgd_step() {
        assert!((one(&Optimizer::sgd(0.1), 1.0, 0.5, 1) - 0.95).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step() {
        let theta = one(&Optimizer::adam(0.1), 0.0, 2.0, 1);
        assert!((theta + 0.1 * 2.0 / (2.0 + 1e-8)).abs() < 1e-15);
        assert!((theta + 0.1).abs() < 1e-8);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        for opt in [Optimizer::sgd(0.5), Optimizer::adam(0.5)] {
            assert_eq!(one(&opt, 3.25, 0.0, 1), 3.25);
        }
    }
}
