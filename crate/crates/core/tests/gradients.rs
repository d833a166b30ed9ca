//! Back-propagation against central finite differences, plus optimizer
//! sanity checks on tiny problems.

use almond_core::almondnet::{build_almondnet20, ModelConfig};
use almond_core::nn::*;
use almond_core::rng::XorShift64;

fn random_images(n: usize, h: usize, w: usize, seed: u64) -> Tensor<f64> {
    let mut rng = XorShift64::new(seed);
    Tensor::from_fn(&[n, h, w, 1], |_| rng.uniform(0.0, 1.0))
}

fn alternating_targets<T: Real>(n: usize) -> Tensor<T> {
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    one_hot(&labels, 2).unwrap()
}

fn mini_check(seed: u64) -> GradCheckReport {
    let cfg = ModelConfig::mini();
    let specs = build_almondnet20(&cfg).unwrap();
    let mut model = Sequential::<f32>::new(&specs, &cfg.input_shape(), seed).unwrap();
    let x = random_images(4, 32, 32, seed + 100).cast::<f32>();
    let t = alternating_targets::<f32>(4);
    let config = GradCheckConfig { samples_per_param: 12, seed, precision: NumericPrecision::F64, ..Default::default() };
    gradient_check(&mut model, &x, &t, &[1.0, 1.0], config).unwrap()
}

#[test]
fn mini_almondnet_f32_matches_finite_differences() {
    for seed in 0..3 {
        let report = mini_check(seed);
        assert!(report.max_relative_error < 1e-3, "seed {seed}: {report:?}");
        assert_eq!(report.tensors.len(), 16);
    }
}

#[test]
fn head_substack_f64_matches_finite_differences() {
    let specs = [
        LayerSpec::Dense { units: 8 },
        LayerSpec::Relu,
        LayerSpec::BatchNorm { epsilon: 1e-3, momentum: 0.99 },
        LayerSpec::Dense { units: 2 },
        LayerSpec::Softmax,
    ];
    for seed in 0..3 {
        let mut model = Sequential::<f64>::new(&specs, &[24], seed).unwrap();
        let x = random_images(4, 24, 1, seed).reshape(&[4, 24]).unwrap();
        let t = alternating_targets::<f64>(4);
        let config = GradCheckConfig { samples_per_param: 64, seed, ..Default::default() };
        let report = gradient_check(&mut model, &x, &t, &[0.75, 1.5], config).unwrap();
        assert!(report.max_relative_error < 1e-6, "seed {seed}: {report:?}");
    }
}

#[test]
fn dense_softmax_f64_every_coordinate() {
    let specs = [LayerSpec::Dense { units: 2 }, LayerSpec::Softmax];
    let mut model = Sequential::<f64>::new(&specs, &[5], 3).unwrap();
    let x = random_images(4, 5, 1, 9).reshape(&[4, 5]).unwrap();
    let t = alternating_targets::<f64>(4);
    let config = GradCheckConfig { samples_per_param: 100, ..Default::default() };
    let report = gradient_check(&mut model, &x, &t, &[1.0, 1.0], config).unwrap();
    assert_eq!(report.checked, 12);
    assert!(report.max_coordinate_error < 1e-6, "{report:?}");
}

#[test]
fn gradient_check_leaves_model_untouched() {
    let specs = [LayerSpec::Dense { units: 3 }, LayerSpec::Dropout { rate: 0.5 }, LayerSpec::Dense { units: 2 }, LayerSpec::Softmax];
    let mut model = Sequential::<f64>::new(&specs, &[4], 1).unwrap();
    let before = model.state_blobs();
    let x = random_images(2, 4, 1, 2).reshape(&[2, 4]).unwrap();
    gradient_check(&mut model, &x, &alternating_targets(2), &[1.0, 1.0], GradCheckConfig::default()).unwrap();
    assert_eq!(model.state_blobs(), before);
    assert!(model.dropout_enabled());
}

fn separable_points(n: usize) -> (Tensor<f64>, Vec<usize>) {
    let mut rng = XorShift64::new(11);
    let mut data = Vec::with_capacity(n * 2);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 2;
        let centre = if class == 0 { -1.5 } else { 1.5 };
        data.push(centre + 0.4 * rng.normal());
        data.push(centre + 0.4 * rng.normal());
        labels.push(class);
    }
    (Tensor::from_vec(&[n, 2], data).unwrap(), labels)
}

fn train_losses(optimizer: Optimizer, steps: u64) -> Vec<f64> {
    let specs = [LayerSpec::Dense { units: 2 }, LayerSpec::Softmax];
    let mut model = Sequential::<f64>::new(&specs, &[2], 5).unwrap();
    let (x, labels) = separable_points(40);
    let t = one_hot::<f64>(&labels, 2).unwrap();
    let mut losses = Vec::new();
    for step in 1..=steps {
        let logits = model.forward_logits(&x, ForwardMode::Train).unwrap();
        let (loss, grad) = softmax_cross_entropy(&logits, &t, &[1.0, 1.0]).unwrap();
        losses.push(loss);
        model.backward(&grad).unwrap();
        optimizer.step(&mut model, step).unwrap();
    }
    losses
}

#[test]
fn sgd_decreases_loss_on_separable_points() {
    let losses = train_losses(Optimizer::sgd(0.1), 50);
    let rises = losses.windows(2).filter(|w| w[1] > w[0]).count();
    assert!(rises <= 2, "{losses:?}");
    assert!(losses[49] < losses[0] * 0.5, "{} -> {}", losses[0], losses[49]);
}

#[test]
fn adam_decreases_loss_on_separable_points() {
    let losses = train_losses(Optimizer::adam(0.05), 50);
    assert!(losses[49] < losses[0] * 0.5, "{} -> {}", losses[0], losses[49]);
}

#[test]
fn training_is_deterministic() {
    let a = train_losses(Optimizer::adam(0.05), 20);
    let b = train_losses(Optimizer::adam(0.05), 20);
    assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}

#[test]
fn stale_backward_is_rejected() {
    let specs = [LayerSpec::Dense { units: 2 }];
    let mut model = Sequential::<f64>::new(&specs, &[2], 0).unwrap();
    let grad = Tensor::zeros(&[1, 2]);
    assert!(matches!(model.backward(&grad), Err(NnError::StaleCache)));
}
