use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::ops::{self, BatchNormCache, BatchNormParams, DropoutVariant};
use super::{ForwardMode, LayerSpec, NnError, Real, Tensor};
use crate::rng::XorShift64;

/// A learnable tensor with its gradient and Adam moment buffers.
#[derive(Debug, Clone)]
pub struct Param<T> {
    pub name: &'static str,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub(crate) first_moment: Vec<T>,
    pub(crate) second_moment: Vec<T>,
}

impl<T: Real> Param<T> {
    fn new(name: &'static str, value: Tensor<T>) -> Self {
        let n = value.len();
        let grad = Tensor::zeros(value.shape());
        Self { name, value, grad, first_moment: vec![T::zero(); n], second_moment: vec![T::zero(); n] }
    }

    fn cast<U: Real>(&self) -> Param<U> {
        let c = |v: &[T]| v.iter().map(|x| U::lit(x.as_f64())).collect();
        Param {
            name: self.name,
            value: self.value.cast(),
            grad: self.grad.cast(),
            first_moment: c(&self.first_moment),
            second_moment: c(&self.second_moment),
        }
    }
}

#[derive(Debug, Clone)]
enum Cache<T> {
    Input(Tensor<T>),
    Pool { input_shape: Vec<usize>, argmax: Vec<usize> },
    Mask(Vec<T>),
    Output(Tensor<T>),
    Norm(BatchNormCache<T>),
    Shape(Vec<usize>),
}

/// Named raw buffer used for persistence.
#[derive(Debug, Clone, PartialEq)]
pub struct StateBlob<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct Layer<T> {
    pub spec: LayerSpec,
    /// Per-sample input and output shapes.
    pub input_shape: Vec<usize>,
    pub output_shape: Vec<usize>,
    pub params: Vec<Param<T>>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    cache: Option<Cache<T>>,
}

impl<T: Real> Layer<T> {
    fn param(&self, i: usize) -> &Tensor<T> {
        &self.params[i].value
    }

    fn forward_infer(&self, x: Tensor<T>) -> Result<Tensor<T>, NnError> {
        Ok(match &self.spec {
            LayerSpec::Conv2d { stride, padding, .. } => {
                ops::conv2d_forward(&x, self.param(0), self.param(1).data(), *stride, *padding)?
            }
            LayerSpec::MaxPool2d { pool, stride } => ops::maxpool2d_forward(&x, *pool, *stride)?.0,
            LayerSpec::SpatialDropout { .. } | LayerSpec::Dropout { .. } => x,
            LayerSpec::Flatten => flatten(x)?,
            LayerSpec::Dense { .. } => ops::dense_forward(&x, self.param(0), self.param(1).data())?,
            LayerSpec::BatchNorm { epsilon, momentum } => {
                let mut rm = self.running_mean.clone();
                let mut rv = self.running_var.clone();
                let p = BatchNormParams {
                    gamma: self.param(0).data(),
                    beta: self.param(1).data(),
                    running_mean: &mut rm,
                    running_var: &mut rv,
                    epsilon: T::lit(*epsilon),
                    momentum: T::lit(*momentum),
                };
                ops::batchnorm_forward(&x, p, ForwardMode::Infer)?.0
            }
            LayerSpec::Relu => ops::relu_forward(&x),
            LayerSpec::Softmax => ops::softmax_rows(&x),
        })
    }

    fn forward_train(&mut self, x: Tensor<T>, rng: &mut XorShift64, dropout: bool) -> Result<Tensor<T>, NnError> {
        let (out, cache) = match &self.spec {
            LayerSpec::Conv2d { stride, padding, .. } => {
                let y = ops::conv2d_forward(&x, self.param(0), self.param(1).data(), *stride, *padding)?;
                (y, Cache::Input(x))
            }
            LayerSpec::MaxPool2d { pool, stride } => {
                let (y, argmax) = ops::maxpool2d_forward(&x, *pool, *stride)?;
                (y, Cache::Pool { input_shape: x.shape().to_vec(), argmax })
            }
            LayerSpec::SpatialDropout { rate } | LayerSpec::Dropout { rate } => {
                let variant = if matches!(self.spec, LayerSpec::SpatialDropout { .. }) {
                    DropoutVariant::Spatial
                } else {
                    DropoutVariant::Element
                };
                let mode = if dropout { ForwardMode::Train } else { ForwardMode::Infer };
                let (y, mask) = ops::dropout_forward(&x, *rate, mode, variant, rng)?;
                (y, Cache::Mask(mask))
            }
            LayerSpec::Flatten => {
                let shape = x.shape().to_vec();
                (flatten(x)?, Cache::Shape(shape))
            }
            LayerSpec::Dense { .. } => {
                let y = ops::dense_forward(&x, self.param(0), self.param(1).data())?;
                (y, Cache::Input(x))
            }
            LayerSpec::BatchNorm { epsilon, momentum } => {
                let (gamma, beta) = (self.params[0].value.data(), self.params[1].value.data());
                let p = BatchNormParams {
                    gamma,
                    beta,
                    running_mean: &mut self.running_mean,
                    running_var: &mut self.running_var,
                    epsilon: T::lit(*epsilon),
                    momentum: T::lit(*momentum),
                };
                let (y, c) = ops::batchnorm_forward(&x, p, ForwardMode::Train)?;
                (y, Cache::Norm(c))
            }
            LayerSpec::Relu => {
                let y = ops::relu_forward(&x);
                (y.clone(), Cache::Output(y))
            }
            LayerSpec::Softmax => {
                let y = ops::softmax_rows(&x);
                (y.clone(), Cache::Output(y))
            }
        };
        self.cache = Some(cache);
        Ok(out)
    }

    fn backward(&mut self, upstream: Tensor<T>) -> Result<Tensor<T>, NnError> {
        let cache = self.cache.take().ok_or(NnError::StaleCache)?;
        Ok(match (&self.spec, cache) {
            (LayerSpec::Conv2d { stride, padding, .. }, Cache::Input(x)) => {
                let g = ops::conv2d_backward(&x, self.param(0), &upstream, *stride, *padding)?;
                self.params[0].grad = g.weight;
                self.params[1].grad = Tensor::from_vec(&[g.bias.len()], g.bias)?;
                g.input
            }
            (LayerSpec::MaxPool2d { .. }, Cache::Pool { input_shape, argmax }) => {
                ops::maxpool2d_backward(&input_shape, &argmax, &upstream)?
            }
            (LayerSpec::SpatialDropout { .. } | LayerSpec::Dropout { .. }, Cache::Mask(mask)) => {
                ops::dropout_backward(&mask, &upstream)
            }
            (LayerSpec::Flatten, Cache::Shape(shape)) => upstream.reshape(&shape)?,
            (LayerSpec::Dense { .. }, Cache::Input(x)) => {
                let g = ops::dense_backward(&x, self.param(0), &upstream)?;
                self.params[0].grad = g.weight;
                self.params[1].grad = Tensor::from_vec(&[g.bias.len()], g.bias)?;
                g.input
            }
            (LayerSpec::BatchNorm { .. }, Cache::Norm(c)) => {
                let g = ops::batchnorm_backward(&c, self.param(0).data(), &upstream)?;
                let d = g.gamma.len();
                self.params[0].grad = Tensor::from_vec(&[d], g.gamma)?;
                self.params[1].grad = Tensor::from_vec(&[d], g.beta)?;
                g.input
            }
            (LayerSpec::Relu, Cache::Output(y)) => ops::relu_backward(&y, &upstream),
            (LayerSpec::Softmax, Cache::Output(y)) => ops::softmax_backward(&y, &upstream),
            _ => return Err(NnError::StaleCache),
        })
    }
}

fn flatten<T: Real>(x: Tensor<T>) -> Result<Tensor<T>, NnError> {
    let n = x.batch();
    let per = x.len().checked_div(n).unwrap_or(0);
    x.reshape(&[n, per])
}

/// He-uniform initializer limit for a given fan-in.
pub fn he_uniform_limit(fan_in: usize) -> f64 {
    libm::sqrt(6.0 / fan_in.max(1) as f64)
}

/// A fixed sequential stack of layers with its own dropout stream.
#[derive(Debug, Clone)]
pub struct Sequential<T> {
    layers: Vec<Layer<T>>,
    input_shape: Vec<usize>,
    rng: XorShift64,
    dropout_enabled: bool,
    cached_layers: Option<usize>,
}

impl<T: Real> Sequential<T> {
    /// Builds the stack for per-sample `input_shape` and initializes
    /// parameters (He-uniform weights, zero biases, unit gamma) from `seed`.
    pub fn new(specs: &[LayerSpec], input_shape: &[usize], seed: u64) -> Result<Self, NnError> {
        let mut layers = Vec::with_capacity(specs.len());
        let mut shape = input_shape.to_vec();
        for (idx, spec) in specs.iter().enumerate() {
            let out = spec.output_shape(&shape)?;
            let mut rng = XorShift64::derive(seed, idx as u64);
            let mut params = Vec::new();
            for (name, pshape) in spec.param_shapes(&shape) {
                let value = match (spec, name) {
                    (LayerSpec::Conv2d { .. } | LayerSpec::Dense { .. }, "weight") => {
                        let fan_in: usize = pshape[..pshape.len() - 1].iter().product();
                        let limit = he_uniform_limit(fan_in);
                        Tensor::from_fn(&pshape, |_| T::lit(rng.uniform(-limit, limit)))
                    }
                    (LayerSpec::BatchNorm { .. }, "gamma") => Tensor::from_fn(&pshape, |_| T::one()),
                    _ => Tensor::zeros(&pshape),
                };
                params.push(Param::new(name, value));
            }
            let (running_mean, running_var) = if matches!(spec, LayerSpec::BatchNorm { .. }) {
                let d = *shape.last().unwrap_or(&0);
                (vec![T::zero(); d], vec![T::one(); d])
            } else {
                (Vec::new(), Vec::new())
            };
            layers.push(Layer {
                spec: spec.clone(),
                input_shape: shape.clone(),
                output_shape: out.clone(),
                params,
                running_mean,
                running_var,
                cache: None,
            });
            shape = out;
        }
        Ok(Self {
            layers,
            input_shape: input_shape.to_vec(),
            rng: XorShift64::derive(seed, u64::MAX),
            dropout_enabled: true,
            cached_layers: None,
        })
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec.clone()).collect()
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.layers.last().map(|l| l.output_shape.as_slice()).unwrap_or(&self.input_shape)
    }

    pub fn param_count(&self) -> usize {
        self.params().map(|p| p.value.len()).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &Param<T>> {
        self.layers.iter().flat_map(|l| l.params.iter())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.layers.iter_mut().flat_map(|l| l.params.iter_mut())
    }

    /// Dropout layers act as the identity while disabled, even in train mode.
    pub fn set_dropout_enabled(&mut self, enabled: bool) {
        self.dropout_enabled = enabled;
    }

    pub fn dropout_enabled(&self) -> bool {
        self.dropout_enabled
    }

    /// Number of layers before a trailing softmax.
    fn logit_layers(&self) -> usize {
        match self.layers.last() {
            Some(l) if l.spec == LayerSpec::Softmax => self.layers.len() - 1,
            _ => self.layers.len(),
        }
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<(), NnError> {
        if x.shape().len() != self.input_shape.len() + 1 || x.shape()[1..] != self.input_shape[..] {
            let mut expected = vec![x.batch()];
            expected.extend_from_slice(&self.input_shape);
            return Err(NnError::ShapeMismatch { context: "model input", expected, got: x.shape().to_vec() });
        }
        Ok(())
    }

    fn run(&mut self, x: &Tensor<T>, mode: ForwardMode, upto: usize) -> Result<Tensor<T>, NnError> {
        self.check_input(x)?;
        self.cached_layers = None;
        let mut act = x.clone();
        match mode {
            ForwardMode::Infer => {
                for layer in &self.layers[..upto] {
                    act = layer.forward_infer(act)?;
                }
            }
            ForwardMode::Train => {
                for layer in &mut self.layers[..upto] {
                    act = layer.forward_train(act, &mut self.rng, self.dropout_enabled)?;
                }
                self.cached_layers = Some(upto);
            }
        }
        Ok(act)
    }

    /// Full forward pass (softmax probabilities for a softmax-headed stack).
    /// Train mode caches activations for [`Self::backward`] and updates
    /// batch-norm running statistics.
    pub fn forward(&mut self, x: &Tensor<T>, mode: ForwardMode) -> Result<Tensor<T>, NnError> {
        self.run(x, mode, self.layers.len())
    }

    /// Forward pass stopping before a trailing softmax.
    pub fn forward_logits(&mut self, x: &Tensor<T>, mode: ForwardMode) -> Result<Tensor<T>, NnError> {
        self.run(x, mode, self.logit_layers())
    }

    /// Side-effect-free inference returning logits.
    pub fn infer_logits(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        self.check_input(x)?;
        let mut act = x.clone();
        for layer in &self.layers[..self.logit_layers()] {
            act = layer.forward_infer(act)?;
        }
        Ok(act)
    }

    /// Side-effect-free inference returning class probabilities.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        Ok(ops::softmax_rows(&self.infer_logits(x)?))
    }

    /// Back-propagates the gradient of the loss with respect to the output of
    /// the most recent train-mode forward, storing parameter gradients and
    /// returning the gradient with respect to the model input.
    pub fn backward(&mut self, upstream: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let upto = self.cached_layers.take().ok_or(NnError::StaleCache)?;
        let mut grad = upstream.clone();
        for layer in self.layers[..upto].iter_mut().rev() {
            grad = layer.backward(grad)?;
        }
        Ok(grad)
    }

    /// Every persisted buffer in a stable order: learnable parameters plus
    /// batch-norm running statistics.
    pub fn state_blobs(&self) -> Vec<StateBlob<T>> {
        let mut blobs = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            for p in &layer.params {
                blobs.push(StateBlob { name: format!("{i}.{}", p.name), shape: p.value.shape().to_vec(), data: p.value.data().to_vec() });
            }
            if !layer.running_mean.is_empty() {
                let d = layer.running_mean.len();
                blobs.push(StateBlob { name: format!("{i}.running_mean"), shape: vec![d], data: layer.running_mean.clone() });
                blobs.push(StateBlob { name: format!("{i}.running_var"), shape: vec![d], data: layer.running_var.clone() });
            }
        }
        blobs
    }

    /// Replaces all state from blobs produced by [`Self::state_blobs`] of an
    /// identically shaped model. Nothing is modified on error.
    pub fn load_state(&mut self, blobs: &[StateBlob<T>]) -> Result<(), NnError> {
        let expected = self.state_blobs();
        if expected.len() != blobs.len() {
            return Err(NnError::ShapeMismatch { context: "state blob count", expected: vec![expected.len()], got: vec![blobs.len()] });
        }
        for (e, b) in expected.iter().zip(blobs) {
            if e.name != b.name || e.shape != b.shape || b.data.len() != e.data.len() {
                return Err(NnError::ShapeMismatch { context: "state blob", expected: e.shape.clone(), got: b.shape.clone() });
            }
        }
        let mut it = blobs.iter();
        for layer in &mut self.layers {
            for p in &mut layer.params {
                p.value.data_mut().copy_from_slice(&it.next().expect("counted").data);
            }
            if !layer.running_mean.is_empty() {
                layer.running_mean.copy_from_slice(&it.next().expect("counted").data);
                layer.running_var.copy_from_slice(&it.next().expect("counted").data);
            }
        }
        Ok(())
    }

    /// Same model in another scalar type (caches are dropped).
    pub fn cast<U: Real>(&self) -> Sequential<U> {
        let c = |v: &[T]| v.iter().map(|x| U::lit(x.as_f64())).collect();
        Sequential {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    spec: l.spec.clone(),
                    input_shape: l.input_shape.clone(),
                    output_shape: l.output_shape.clone(),
                    params: l.params.iter().map(Param::cast).collect(),
                    running_mean: c(&l.running_mean),
                    running_var: c(&l.running_var),
                    cache: None,
                })
                .collect(),
            input_shape: self.input_shape.clone(),
            rng: self.rng.clone(),
            dropout_enabled: self.dropout_enabled,
            cached_layers: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Padding;

    fn small_specs() -> Vec<LayerSpec> {
        vec![
            LayerSpec::Conv2d { filters: 3, kernel: (3, 3), stride: 1, padding: Padding::Same },
            LayerSpec::Relu,
            LayerSpec::pool(2),
            LayerSpec::SpatialDropout { rate: 0.3 },
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 4 },
            LayerSpec::Relu,
            LayerSpec::BatchNorm { epsilon: 1e-3, momentum: 0.99 },
            LayerSpec::Dense { units: 2 },
            LayerSpec::Softmax,
        ]
    }

    #[test]
    fn build_and_infer() {
        let m = Sequential::<f32>::new(&small_specs(), &[6, 6, 1], 1).unwrap();
        assert_eq!(m.output_shape(), &[2]);
        assert_eq!(m.param_count(), (9 * 3 + 3) + (27 * 4 + 4) + 8 + (4 * 2 + 2));
        let x = Tensor::from_fn(&[3, 6, 6, 1], |i| (i as f32 * 0.37).sin());
        let p = m.infer(&x).unwrap();
        for row in p.data().chunks(2) {
            assert!((row[0] + row[1] - 1.0).abs() < 1e-6);
        }
        assert!(m.infer(&Tensor::zeros(&[1, 5, 6, 1])).is_err());
    }

    #[test]
    fn backward_requires_forward() {
        let mut m = Sequential::<f64>::new(&small_specs(), &[6, 6, 1], 1).unwrap();
        let up = Tensor::zeros(&[2, 2]);
        assert!(matches!(m.backward(&up), Err(NnError::StaleCache)));
        let x = Tensor::from_fn(&[2, 6, 6, 1], |i| i as f64 / 72.0);
        m.forward_logits(&x, ForwardMode::Train).unwrap();
        m.backward(&up).unwrap();
        assert!(matches!(m.backward(&up), Err(NnError::StaleCache)));
        m.forward_logits(&x, ForwardMode::Infer).unwrap();
        assert!(matches!(m.backward(&up), Err(NnError::StaleCache)));
    }

    #[test]
    fn infer_is_side_effect_free() {
        let mut m = Sequential::<f32>::new(&small_specs(), &[6, 6, 1], 4).unwrap();
        let x = Tensor::from_fn(&[2, 6, 6, 1], |i| (i % 7) as f32);
        let before = m.state_blobs();
        let a = m.forward(&x, ForwardMode::Infer).unwrap();
        let b = m.infer(&x).unwrap();
        assert_eq!(a, b);
        assert_eq!(before, m.state_blobs());
        m.forward(&x, ForwardMode::Train).unwrap();
        assert_ne!(before, m.state_blobs());
    }

    #[test]
    fn state_round_trip() {
        let a = Sequential::<f32>::new(&small_specs(), &[6, 6, 1], 1).unwrap();
        let mut b = Sequential::<f32>::new(&small_specs(), &[6, 6, 1], 2).unwrap();
        let x = Tensor::from_fn(&[2, 6, 6, 1], |i| (i % 5) as f32);
        assert_ne!(a.infer(&x).unwrap(), b.infer(&x).unwrap());
        b.load_state(&a.state_blobs()).unwrap();
        assert_eq!(a.infer(&x).unwrap(), b.infer(&x).unwrap());
        let mut other = Sequential::<f32>::new(&small_specs(), &[8, 8, 1], 1).unwrap();
        assert!(other.load_state(&a.state_blobs()).is_err());
    }
}
