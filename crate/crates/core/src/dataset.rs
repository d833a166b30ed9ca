//! Dataset manifests, balanced class weights, stratified splitting and the
//! synthetic almond/shell generator.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::image::GrayImage;
use crate::rng::XorShift64;

pub const DEFAULT_CLASS_NAMES: [&str; 2] = ["almond", "shell"];

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetError {
    EmptyClass { class: usize },
    InvalidFraction { val: f64, test: f64 },
    TooFewSamples { class: String, count: usize, required: usize },
    InvalidSize { height: usize, width: usize },
    InvalidCount,
    DuplicateClass(String),
    LabelOutOfRange { index: usize, classes: usize },
}

impl fmt::Display for DatasetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EmptyClass { class } => write!(f, "class {class} has no samples"),
            Self::InvalidFraction { val, test } => {
                write!(f, "split fractions must lie in [0,1) and sum below 1 (val={val}, test={test})")
            }
            Self::TooFewSamples { class, count, required } => {
                write!(f, "class '{class}' has {count} samples, needs at least {required}")
            }
            Self::InvalidSize { height, width } => {
                write!(f, "synthetic images must be at least 16x16, got {height}x{width}")
            }
            Self::InvalidCount => f.write_str("need at least one sample per class"),
            Self::DuplicateClass(name) => write!(f, "duplicate class name '{name}'"),
            Self::LabelOutOfRange { index, classes } => {
                write!(f, "label index {index} out of range for {classes} classes")
            }
        }
    }
}

impl core::error::Error for DatasetError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SplitTag {
    #[default]
    Train,
    Val,
    Test,
}

impl SplitTag {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Val => "val",
            Self::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Self::Train),
            "val" => Some(Self::Val),
            "test" => Some(Self::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SampleSource {
    Path(String),
    Image(GrayImage),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub source: SampleSource,
    pub label_index: usize,
    pub label_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    pub class_names: Vec<String>,
    pub samples: Vec<Sample>,
    pub split: SplitTag,
}

impl DatasetManifest {
    pub fn new(class_names: Vec<String>, samples: Vec<Sample>, split: SplitTag) -> Result<Self, DatasetError> {
        let manifest = Self { class_names, samples, split };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        for (i, name) in self.class_names.iter().enumerate() {
            if self.class_names[..i].contains(name) {
                return Err(DatasetError::DuplicateClass(name.clone()));
            }
        }
        for s in &self.samples {
            if s.label_index >= self.class_names.len() {
                return Err(DatasetError::LabelOutOfRange { index: s.label_index, classes: self.class_names.len() });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_names.len()];
        for s in &self.samples {
            counts[s.label_index] += 1;
        }
        counts
    }

    fn with_samples(&self, samples: Vec<Sample>, split: SplitTag) -> Self {
        Self { class_names: self.class_names.clone(), samples, split }
    }
}

/// Per-class loss weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights(pub Vec<f64>);

impl ClassWeights {
    pub fn uniform(classes: usize) -> Self {
        Self(vec![1.0; classes])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// "Balanced" weighting: `n_total / (n_classes * count_c)`.
pub fn compute_class_weights(class_counts: &[usize]) -> Result<ClassWeights, DatasetError> {
    if let Some(class) = class_counts.iter().position(|&c| c == 0) {
        return Err(DatasetError::EmptyClass { class });
    }
    let total: usize = class_counts.iter().sum();
    let k = class_counts.len() as f64;
    Ok(ClassWeights(class_counts.iter().map(|&c| total as f64 / (k * c as f64)).collect()))
}

/// Nearest integer with exact halves rounded down.
pub fn round_half_down(x: f64) -> usize {
    let r = libm::ceil(x - 0.5);
    if r <= 0.0 {
        0
    } else {
        r as usize
    }
}

/// Per-class partition sizes `(train, val, test)` for a class of `count`.
/// The test share is taken from the full class, the validation share from
/// what remains after test removal.
pub fn split_counts(count: usize, val_fraction: f64, test_fraction: f64) -> (usize, usize, usize) {
    let test = round_half_down(test_fraction * count as f64).min(count);
    let val = round_half_down(val_fraction * (count - test) as f64).min(count - test);
    (count - test - val, val, test)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitOutput {
    pub train: DatasetManifest,
    pub val: DatasetManifest,
    pub test: DatasetManifest,
}

/// Stratified, seeded three-way split.
///
/// Within each class the samples are shuffled with a stream derived from
/// `(seed, class index)`, then cut test-first, then validation; the rest is
/// training data. Output order follows class order, then shuffled order.
pub fn split_dataset(
    manifest: &DatasetManifest,
    val_fraction: f64,
    test_fraction: f64,
    seed: u64,
) -> Result<SplitOutput, DatasetError> {
    let valid = |f: f64| (0.0..1.0).contains(&f);
    if !valid(val_fraction) || !valid(test_fraction) || val_fraction + test_fraction >= 1.0 {
        return Err(DatasetError::InvalidFraction { val: val_fraction, test: test_fraction });
    }
    let required = 1 + usize::from(val_fraction > 0.0) + usize::from(test_fraction > 0.0);
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for (class, name) in manifest.class_names.iter().enumerate() {
        let mut members: Vec<&Sample> = manifest.samples.iter().filter(|s| s.label_index == class).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < required {
            return Err(DatasetError::TooFewSamples { class: name.clone(), count: members.len(), required });
        }
        let (n_train, n_val, n_test) = split_counts(members.len(), val_fraction, test_fraction);
        if n_train == 0 {
            return Err(DatasetError::TooFewSamples { class: name.clone(), count: members.len(), required: members.len() + 1 });
        }
        XorShift64::derive(seed, class as u64).shuffle(&mut members);
        test.extend(members[..n_test].iter().map(|&s| s.clone()));
        val.extend(members[n_test..n_test + n_val].iter().map(|&s| s.clone()));
        train.extend(members[n_test + n_val..].iter().map(|&s| s.clone()));
    }
    Ok(SplitOutput {
        train: manifest.with_samples(train, SplitTag::Train),
        val: manifest.with_samples(val, SplitTag::Val),
        test: manifest.with_samples(test, SplitTag::Test),
    })
}

/// Shape parameters of one synthetic object.
#[derive(Debug, Clone, Copy)]
struct Blob {
    cy: f64,
    cx: f64,
    ry: f64,
    rx: f64,
    /// Inner radius as a fraction of the outer one; 0 for filled ellipses.
    hole: f64,
    background: f64,
    foreground: f64,
}

fn render_blob(blob: &Blob, height: usize, width: usize, noise_sd: f64, rng: &mut XorShift64) -> GrayImage {
    GrayImage::from_fn(width, height, |r, c| {
        let dy = (r as f64 + 0.5 - blob.cy) / blob.ry;
        let dx = (c as f64 + 0.5 - blob.cx) / blob.rx;
        let rho = libm::sqrt(dy * dy + dx * dx);
        let inside = rho <= 1.0 && rho >= blob.hole;
        let base = if inside { blob.foreground } else { blob.background };
        libm::round(base + noise_sd * rng.normal()).clamp(0.0, 255.0) as u8
    })
}

/// Synthetic stand-in for the almond/shell corpus: class 0 ("almond") is a
/// filled ellipse, class 1 ("shell") an elliptical ring, both on a darker
/// noisy background. Sample `i` of class `k` depends only on
/// `(seed, k, i)`.
pub fn generate_synthetic(n_per_class: usize, height: usize, width: usize, seed: u64) -> Result<DatasetManifest, DatasetError> {
    if n_per_class == 0 {
        return Err(DatasetError::InvalidCount);
    }
    if height < 16 || width < 16 {
        return Err(DatasetError::InvalidSize { height, width });
    }
    let (h, w) = (height as f64, width as f64);
    let mut samples = Vec::with_capacity(2 * n_per_class);
    for (class, name) in DEFAULT_CLASS_NAMES.iter().enumerate() {
        for i in 0..n_per_class {
            let mut rng = XorShift64::derive(seed, ((class as u64) << 32) | i as u64);
            let ry = rng.uniform(0.22, 0.38) * h;
            let rx = rng.uniform(0.22, 0.38) * w;
            let blob = Blob {
                cy: h / 2.0 + rng.uniform(-0.1, 0.1) * h,
                cx: w / 2.0 + rng.uniform(-0.1, 0.1) * w,
                ry,
                rx,
                hole: if class == 0 { 0.0 } else { rng.uniform(0.45, 0.65) },
                background: rng.uniform(30.0, 80.0),
                foreground: rng.uniform(150.0, 220.0),
            };
            let image = render_blob(&blob, height, width, 12.0, &mut rng);
            samples.push(Sample { source: SampleSource::Image(image), label_index: class, label_name: name.to_string() });
        }
    }
    DatasetManifest::new(DEFAULT_CLASS_NAMES.iter().map(|s| s.to_string()).collect(), samples, SplitTag::Train)
}

/// Stable file name for synthetic sample `index` of `label`.
pub fn synthetic_file_name(label: &str, index: usize) -> String {
    format!("{label}_{index:05}.pgm")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest_with_counts(counts: &[usize]) -> DatasetManifest {
        let names: Vec<String> = (0..counts.len()).map(|i| format!("c{i}")).collect();
        let mut samples = Vec::new();
        for (class, &n) in counts.iter().enumerate() {
            for i in 0..n {
                samples.push(Sample {
                    source: SampleSource::Path(format!("c{class}/{i}.pgm")),
                    label_index: class,
                    label_name: names[class].clone(),
                });
            }
        }
        DatasetManifest::new(names, samples, SplitTag::Train).unwrap()
    }

    #[test]
    fn class_weight_examples() {
        assert_eq!(compute_class_weights(&[300, 300]).unwrap().0, vec![1.0, 1.0]);
        assert_eq!(compute_class_weights(&[500, 100]).unwrap().0, vec![0.6, 3.0]);
        assert_eq!(compute_class_weights(&[17]).unwrap().0, vec![1.0]);
        assert_eq!(compute_class_weights(&[3, 0]), Err(DatasetError::EmptyClass { class: 1 }));
    }

    #[test]
    fn round_half_down_cases() {
        assert_eq!(round_half_down(2.5), 2);
        assert_eq!(round_half_down(2.51), 3);
        assert_eq!(round_half_down(0.5), 0);
        assert_eq!(round_half_down(0.0), 0);
        assert_eq!(round_half_down(63.0), 63);
    }

    #[test]
    fn full_dataset_sized_split() {
        let m = manifest_with_counts(&[368, 368]);
        let out = split_dataset(&m, 0.2, 106.0 / 736.0, 1).unwrap();
        assert_eq!((out.train.len(), out.val.len(), out.test.len()), (504, 126, 106));
        assert_eq!(out.train.class_counts(), vec![252, 252]);
        assert_eq!(out.val.class_counts(), vec![63, 63]);
        assert_eq!(out.test.class_counts(), vec![53, 53]);
        assert_eq!(out.test.split, SplitTag::Test);
    }

    #[test]
    fn zero_fractions_keep_everything_in_train() {
        let m = manifest_with_counts(&[4, 6]);
        let out = split_dataset(&m, 0.0, 0.0, 3).unwrap();
        assert_eq!(out.train.len(), 10);
        assert!(out.val.is_empty() && out.test.is_empty());
    }

    #[test]
    fn split_is_seeded() {
        let m = manifest_with_counts(&[40, 30]);
        let a = split_dataset(&m, 0.2, 0.2, 9).unwrap();
        let b = split_dataset(&m, 0.2, 0.2, 9).unwrap();
        let c = split_dataset(&m, 0.2, 0.2, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.train.samples, c.train.samples);
        assert_eq!(a.train.class_counts(), c.train.class_counts());
        assert_eq!(a.test.class_counts(), c.test.class_counts());
    }

    #[test]
    fn split_errors() {
        let m = manifest_with_counts(&[2, 5]);
        assert!(matches!(split_dataset(&m, 0.2, 0.2, 0), Err(DatasetError::TooFewSamples { .. })));
        assert!(matches!(split_dataset(&m, 0.6, 0.5, 0), Err(DatasetError::InvalidFraction { .. })));
        assert!(matches!(split_dataset(&m, -0.1, 0.0, 0), Err(DatasetError::InvalidFraction { .. })));
    }

    #[test]
    fn synthetic_basics() {
        let m = generate_synthetic(1, 16, 16, 5).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.class_counts(), vec![1, 1]);
        assert_eq!(m, generate_synthetic(1, 16, 16, 5).unwrap());
        assert_ne!(m, generate_synthetic(1, 16, 16, 6).unwrap());
        assert!(generate_synthetic(1, 15, 32, 5).is_err());
        assert!(generate_synthetic(0, 32, 32, 5).is_err());
    }

    #[test]
    fn synthetic_rings_have_dark_centers() {
        let m = generate_synthetic(20, 32, 32, 1).unwrap();
        let center_mean = |s: &Sample| match &s.source {
            SampleSource::Image(img) => {
                let mut acc = 0.0;
                for r in 14..18 {
                    for c in 14..18 {
                        acc += img.get(r, c) as f64;
                    }
                }
                acc / 16.0
            }
            _ => unreachable!(),
        };
        for s in &m.samples {
            let v = center_mean(s);
            if s.label_index == 0 {
                assert!(v > 120.0, "almond center {v}");
            } else {
                assert!(v < 120.0, "shell center {v}");
            }
        }
    }

    #[test]
    fn manifest_validation() {
        let dup = DatasetManifest::new(vec!["a".into(), "a".into()], vec![], SplitTag::Train);
        assert_eq!(dup, Err(DatasetError::DuplicateClass("a".into())));
        let bad = DatasetManifest::new(
            vec!["a".into()],
            vec![Sample { source: SampleSource::Path("x".into()), label_index: 1, label_name: "b".into() }],
            SplitTag::Train,
        );
        assert!(matches!(bad, Err(DatasetError::LabelOutOfRange { .. })));
    }
}
