//! End-to-end steps behind the CLI subcommands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use almond_core::almondnet::{build_almondnet20, ModelConfig};
use almond_core::annotation::CoordinateBase;
use almond_core::dataset::{
    compute_class_weights, generate_synthetic, split_dataset, synthetic_file_name, ClassWeights, DatasetManifest, Sample,
    SampleSource, SplitTag, DEFAULT_CLASS_NAMES,
};
use almond_core::imageproc::{preprocess_chain, preprocess_for_feed, PreprocessParams};
use almond_core::metrics::{argmax, metrics_from_confusion, ConfusionMatrix, EvalReport};
use almond_core::nn::{one_hot, softmax_cross_entropy, ForwardMode, NnError, Sequential, Tensor};
use almond_core::rng::XorShift64;
use almond_core::GrayImage;

use crate::checkpoint::Checkpoint;
use crate::config::{TrainConfig, Weighting};
use crate::error::{Error, Result};
use crate::imageio::{read_gray, read_rgb, write_atomic, write_pgm};
use crate::manifest::{resolve, ManifestFile};
use crate::report::{history_csv, EpochRecord};
use crate::voc::{crop_records_to_jsonl, export_crops, scan_dataset};

const EVAL_BATCH: usize = 128;

/// Model-ready inputs `[N, H, W, 1]` scaled to `[0, 1]`, with labels.
#[derive(Debug, Clone)]
pub struct LoadedSet {
    pub inputs: Tensor<f32>,
    pub labels: Vec<usize>,
}

impl LoadedSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Preprocesses to the feed stage, resizes (nearest neighbour) to the model
/// input and scales to `[0, 1]`.
pub fn prepare_image(gray: GrayImage, preprocess: &PreprocessParams, model: &ModelConfig) -> Result<Vec<f32>> {
    let fed = preprocess_for_feed(gray, preprocess)?;
    let (w, h) = (model.input_width, model.input_height);
    let sized = if (fed.width(), fed.height()) == (w, h) { fed } else { fed.resize_nearest(w, h) };
    Ok(sized.pixels().iter().map(|&p| p as f32 / 255.0).collect())
}

pub fn load_set(manifest: &DatasetManifest, base: &Path, preprocess: &PreprocessParams, model: &ModelConfig) -> Result<LoadedSet> {
    let mut data = Vec::with_capacity(manifest.len() * model.input_height * model.input_width);
    for sample in &manifest.samples {
        let gray = match &sample.source {
            SampleSource::Image(img) => img.clone(),
            SampleSource::Path(p) => read_gray(&resolve(base, p))?,
        };
        data.extend(prepare_image(gray, preprocess, model)?);
    }
    let [h, w, c] = model.input_shape();
    let inputs = Tensor::from_vec(&[manifest.len(), h, w, c], data)?;
    Ok(LoadedSet { inputs, labels: manifest.samples.iter().map(|s| s.label_index).collect() })
}

/// Infer-mode mean (class-weighted) loss and accuracy over a whole set.
pub fn evaluate_set(model: &Sequential<f32>, set: &LoadedSet, weights: &[f64]) -> Result<(f64, f64)> {
    if set.is_empty() {
        return Ok((0.0, 0.0));
    }
    let classes = weights.len();
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    let mut start = 0;
    while start < set.len() {
        let end = (start + EVAL_BATCH).min(set.len());
        let x = set.inputs.batch_slice(start, end);
        let labels = &set.labels[start..end];
        let logits = model.infer_logits(&x)?;
        let (loss, _) = softmax_cross_entropy(&logits, &one_hot(labels, classes)?, weights)?;
        loss_sum += loss * (end - start) as f64;
        for (row, &label) in logits.data().chunks(classes).zip(labels) {
            correct += usize::from(argmax(row) == label);
        }
        start = end;
    }
    Ok((loss_sum / set.len() as f64, correct as f64 / set.len() as f64))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_checkpoint: PathBuf,
    pub last_checkpoint: PathBuf,
    pub history_path: PathBuf,
}

fn class_weights(cfg: &TrainConfig, train: &LoadedSet, classes: usize) -> Result<ClassWeights> {
    Ok(match cfg.class_weighting {
        Weighting::None => ClassWeights::uniform(classes),
        Weighting::Balanced => {
            let mut counts = vec![0; classes];
            for &l in &train.labels {
                counts[l] += 1;
            }
            compute_class_weights(&counts)?
        }
    })
}

/// Mini-batch training with per-epoch infer-mode metrics.
///
/// Writes `history.csv`, `best.ckpt` (highest validation accuracy, earliest
/// epoch on ties; training accuracy when there is no validation data) and
/// `last.ckpt` into `out_dir`. A non-finite loss stops training with
/// [`Error::DivergedLoss`] after recording the abort in the history file;
/// checkpoints from earlier epochs are left in place.
pub fn train(
    cfg: &TrainConfig,
    class_names: &[String],
    train_set: &LoadedSet,
    val_set: &LoadedSet,
    out_dir: &Path,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyManifest("train on"));
    }
    let classes = class_names.len();
    let weights = class_weights(cfg, train_set, classes)?;
    let specs = build_almondnet20(&cfg.model)?;
    let mut model = Sequential::<f32>::new(&specs, &cfg.model.input_shape(), cfg.seed)?;
    let targets = one_hot::<f32>(&train_set.labels, classes)?;

    let history_path = out_dir.join("history.csv");
    let best_checkpoint = out_dir.join("best.ckpt");
    let last_checkpoint = out_dir.join("last.ckpt");
    let snapshot = |model: &Sequential<f32>, epoch: usize, rec: Option<&EpochRecord>| {
        let mut ckpt = Checkpoint::from_model(model, &cfg.model, &cfg.preprocess, class_names);
        ckpt.metadata.insert("epoch".into(), epoch.to_string());
        ckpt.metadata.insert("seed".into(), cfg.seed.to_string());
        if let Some(r) = rec {
            ckpt.metadata.insert("train_loss".into(), format!("{:.6}", r.train_loss));
            ckpt.metadata.insert("val_accuracy".into(), format!("{:.6}", r.val_accuracy));
        }
        ckpt
    };

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize)> = None;
    let mut step = 0u64;
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        XorShift64::derive(cfg.seed, 0x5348_5546_0000_0000 | epoch as u64).shuffle(&mut order);
        for batch in order.chunks(cfg.batch_size) {
            let x = train_set.inputs.gather(batch);
            let t = targets.gather(batch);
            let logits = model.forward_logits(&x, ForwardMode::Train)?;
            let (loss, grad) = softmax_cross_entropy(&logits, &t, weights.as_slice())?;
            step += 1;
            let stepped = if loss.is_finite() {
                model.backward(&grad)?;
                cfg.optimizer.step(&mut model, step)
            } else {
                Err(NnError::NonFiniteGradient)
            };
            if let Err(e) = stepped {
                if matches!(e, NnError::NonFiniteGradient) {
                    write_atomic(&history_path, history_csv(&history, Some(epoch)).as_bytes())?;
                    return Err(Error::DivergedLoss { epoch });
                }
                return Err(e.into());
            }
        }
        let (train_loss, train_accuracy) = evaluate_set(&model, train_set, weights.as_slice())?;
        let (val_loss, val_accuracy) = evaluate_set(&model, val_set, weights.as_slice())?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            write_atomic(&history_path, history_csv(&history, Some(epoch)).as_bytes())?;
            return Err(Error::DivergedLoss { epoch });
        }
        let seconds = if cfg.record_time { started.elapsed().as_secs_f64() } else { 0.0 };
        let record = EpochRecord { epoch, train_loss, train_accuracy, val_loss, val_accuracy, seconds };
        let score = if val_set.is_empty() { train_accuracy } else { val_accuracy };
        if best.is_none_or(|(b, _)| score > b) {
            best = Some((score, epoch));
            snapshot(&model, epoch, Some(&record)).save(&best_checkpoint)?;
        }
        if cfg.checkpoint_every_epoch {
            snapshot(&model, epoch, Some(&record)).save(&out_dir.join(format!("epoch_{epoch:03}.ckpt")))?;
        }
        on_epoch(&record);
        history.push(record);
    }
    snapshot(&model, cfg.epochs, history.last()).save(&last_checkpoint)?;
    write_atomic(&history_path, history_csv(&history, None).as_bytes())?;
    Ok(TrainOutcome {
        history,
        best_epoch: best.map(|(_, e)| e).unwrap_or(cfg.epochs),
        best_checkpoint,
        last_checkpoint,
        history_path,
    })
}

/// Infer-mode confusion matrix and report of a checkpoint on a manifest.
pub fn evaluate(ckpt: &Checkpoint, manifest: &DatasetManifest, base: &Path) -> Result<(ConfusionMatrix, EvalReport)> {
    if manifest.is_empty() {
        return Err(Error::EmptyManifest("evaluate"));
    }
    if manifest.class_names != ckpt.class_names {
        return Err(Error::LabelMismatch { checkpoint: ckpt.class_names.clone(), manifest: manifest.class_names.clone() });
    }
    let model = ckpt.to_model()?;
    let set = load_set(manifest, base, &ckpt.preprocess, &ckpt.model)?;
    let classes = ckpt.class_names.len();
    let mut matrix = ConfusionMatrix::new(classes);
    let mut start = 0;
    while start < set.len() {
        let end = (start + EVAL_BATCH).min(set.len());
        let logits = model.infer_logits(&set.inputs.batch_slice(start, end))?;
        for (row, &label) in logits.data().chunks(classes).zip(&set.labels[start..end]) {
            matrix.record(label, argmax(row))?;
        }
        start = end;
    }
    let report = metrics_from_confusion(&matrix)?;
    Ok((matrix, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: String,
    pub class_index: usize,
    pub probabilities: Vec<f64>,
}

pub fn predict_image(ckpt: &Checkpoint, model: &Sequential<f32>, gray: GrayImage) -> Result<Prediction> {
    let [h, w, c] = ckpt.model.input_shape();
    let x = Tensor::from_vec(&[1, h, w, c], prepare_image(gray, &ckpt.preprocess, &ckpt.model)?)?;
    let probabilities: Vec<f64> = model.infer(&x)?.data().iter().map(|&p| p as f64).collect();
    let class_index = argmax(&probabilities);
    let label = ckpt.class_names.get(class_index).cloned().unwrap_or_else(|| class_index.to_string());
    Ok(Prediction { label, class_index, probabilities })
}

pub fn predict(ckpt: &Checkpoint, image: &Path) -> Result<Prediction> {
    predict_image(ckpt, &ckpt.to_model()?, read_gray(image)?)
}

/// Writes every chain stage of `input` as `<stem>_<stage>.pgm`.
pub fn preprocess_file(input: &Path, params: &PreprocessParams, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let stages = preprocess_chain(&read_rgb(input)?, params)?;
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
    let mut written = Vec::new();
    for (stage, img) in stages.iter() {
        let path = out_dir.join(format!("{stem}_{}.pgm", stage.name()));
        write_pgm(&path, img)?;
        written.push(path);
    }
    Ok(written)
}

/// Renders the synthetic set to `out_dir/images/*.pgm` and writes
/// `out_dir/manifest.txt` (all records tagged `train`).
pub fn synth(n_per_class: usize, height: usize, width: usize, seed: u64, out_dir: &Path) -> Result<PathBuf> {
    let generated = generate_synthetic(n_per_class, height, width, seed)?;
    let mut counters = vec![0usize; generated.num_classes()];
    let mut samples = Vec::with_capacity(generated.len());
    for s in generated.samples {
        let SampleSource::Image(img) = &s.source else { unreachable!("generator returns images") };
        let rel = format!("images/{}", synthetic_file_name(&s.label_name, counters[s.label_index]));
        counters[s.label_index] += 1;
        write_pgm(&out_dir.join(&rel), img)?;
        samples.push(Sample { source: SampleSource::Path(rel), ..s });
    }
    let manifest = DatasetManifest::new(generated.class_names, samples, SplitTag::Train)?;
    let path = out_dir.join("manifest.txt");
    ManifestFile::from_manifest(&manifest).save(&path)?;
    Ok(path)
}

/// Re-expresses sample paths relative to `to_dir` when they live under it.
fn rebase(manifest: &mut DatasetManifest, from_dir: &Path, to_dir: &Path) {
    for s in &mut manifest.samples {
        if let SampleSource::Path(p) = &mut s.source {
            if from_dir == to_dir {
                continue;
            }
            let full = resolve(from_dir, p);
            *p = match full.strip_prefix(to_dir) {
                Ok(rel) => rel.to_string_lossy().replace('\\', "/"),
                Err(_) => full.to_string_lossy().into_owned(),
            };
        }
    }
}

/// Stratified split of every record in `input`, saved as one manifest with
/// per-record split tags.
pub fn split_file(input: &Path, val_fraction: f64, test_fraction: f64, seed: u64, output: &Path) -> Result<ManifestFile> {
    let file = ManifestFile::load(input)?;
    let mut pool = DatasetManifest {
        class_names: file.class_names.clone(),
        samples: file.records.into_iter().map(|(_, s)| s).collect(),
        split: SplitTag::Train,
    };
    rebase(&mut pool, &parent_dir(input), &parent_dir(output));
    let split = split_dataset(&pool, val_fraction, test_fraction, seed)?;
    let out = ManifestFile::from_split(&split);
    out.save(output)?;
    Ok(out)
}

pub fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

#[derive(Debug)]
pub struct IngestSummary {
    pub crops: usize,
    pub manifest: PathBuf,
    pub crop_index: PathBuf,
    pub skipped: Vec<(PathBuf, Error)>,
}

/// VOC directory pair to crop PGMs, `crops.jsonl` and `manifest.txt`.
/// Class order is the default almond/shell order when the labels fit it,
/// otherwise sorted label order.
pub fn ingest(image_dir: &Path, annotation_dir: &Path, out_dir: &Path, base: CoordinateBase, whole_image: bool) -> Result<IngestSummary> {
    let scan = scan_dataset(image_dir, annotation_dir, base)?;
    let records = export_crops(&scan.pairs, out_dir, whole_image)?;
    let mut labels: Vec<String> = records.iter().map(|r| r.label.clone()).collect();
    labels.sort();
    labels.dedup();
    let class_names: Vec<String> = if labels.iter().all(|l| DEFAULT_CLASS_NAMES.contains(&l.as_str())) {
        DEFAULT_CLASS_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        labels
    };
    let samples = records
        .iter()
        .map(|r| Sample {
            source: SampleSource::Path(r.crop.clone()),
            label_index: class_names.iter().position(|c| *c == r.label).expect("collected above"),
            label_name: r.label.clone(),
        })
        .collect();
    let manifest = DatasetManifest::new(class_names, samples, SplitTag::Train)?;
    let manifest_path = out_dir.join("manifest.txt");
    ManifestFile::from_manifest(&manifest).save(&manifest_path)?;
    let crop_index = out_dir.join("crops.jsonl");
    write_atomic(&crop_index, crop_records_to_jsonl(&records).as_bytes())?;
    Ok(IngestSummary { crops: records.len(), manifest: manifest_path, crop_index, skipped: scan.errors })
}
