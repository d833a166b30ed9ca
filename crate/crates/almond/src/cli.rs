//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 runtime
//! error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use almond_core::almondnet::{build_almondnet20, shape_trace, ModelConfig};
use almond_core::annotation::CoordinateBase;
use almond_core::dataset::SplitTag;
use clap::{Args, Parser, Subcommand};

use crate::checkpoint::Checkpoint;
use crate::config::{apply_model_key, TrainConfig};
use crate::error::{Error, Result};
use crate::imageio::write_atomic;
use crate::manifest::ManifestFile;
use crate::pipeline;
use crate::report::classification_report;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "almond", version, about = "Almond/shell image classification pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the five-stage preprocessing chain and write every stage as PGM.
    Preprocess(PreprocessArgs),
    /// Render the synthetic two-class dataset.
    Synth(SynthArgs),
    /// Stratified train/val/test split of a manifest.
    Split(SplitArgs),
    /// Train a model on the train/val records of a manifest.
    Train(TrainArgs),
    /// Confusion matrix and classification report of a checkpoint.
    Evaluate(EvaluateArgs),
    /// Classify single images.
    Predict(PredictArgs),
    /// Print the layer-by-layer shape table of a model configuration.
    Trace(TraceArgs),
    /// Cut labelled crops out of a Pascal-VOC annotated image folder.
    Ingest(IngestArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Extra `key=value` override, applied after the file and the flags.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ModelFlags {
    /// `almondnet20` or `mini-v1`.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    /// Channel multiplier applied to every filter count and the dense width.
    #[arg(long)]
    pub multiplier: Option<f64>,
}

impl ModelFlags {
    fn overrides(&self) -> Vec<(String, String)> {
        let mut o = Vec::new();
        push(&mut o, "model.variant", &self.variant);
        push(&mut o, "model.height", &self.height);
        push(&mut o, "model.width", &self.width);
        push(&mut o, "model.multiplier", &self.multiplier);
        o
    }
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    pub per_class: usize,
    #[arg(long, default_value_t = 32)]
    pub height: usize,
    #[arg(long, default_value_t = 32)]
    pub width: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output directory (receives `images/` and `manifest.txt`).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 0.2)]
    pub val: f64,
    #[arg(long, default_value_t = 0.2)]
    pub test: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output manifest file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Manifest with `train` (and optionally `val`) records.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory for checkpoints and history.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// gray, blur, denoise, thresh or canny.
    #[arg(long)]
    pub feed_stage: Option<String>,
    /// Store wall-clock seconds per epoch in the history file.
    #[arg(long)]
    pub record_time: bool,
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Which records to evaluate: train, val, test or all.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Report file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long = "image", required = true)]
    pub images: Vec<PathBuf>,
    /// Tab-separated predictions file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Treat box coordinates as 1-based inclusive.
    #[arg(long)]
    pub one_based: bool,
    /// Keep whole images (labelled by their first object) instead of crops.
    #[arg(long)]
    pub whole_image: bool,
}

fn push<T: ToString>(o: &mut Vec<(String, String)>, key: &str, value: &Option<T>) {
    if let Some(v) = value {
        o.push((key.to_string(), v.to_string()));
    }
}

fn set_pairs(set: &[String]) -> Result<Vec<(String, String)>> {
    set.iter()
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, found {kv:?}")))
        })
        .collect()
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    if let Some(path) = out {
        write_atomic(path, text.as_bytes())?;
    }
    print!("{text}");
    Ok(())
}

fn run_command(command: Command) -> Result<()> {
    match command {
        Command::Preprocess(a) => {
            let cfg = TrainConfig::load(a.config.config.as_deref(), &set_pairs(&a.config.set)?)?;
            for path in pipeline::preprocess_file(&a.input, &cfg.preprocess, &a.out)? {
                println!("{}", path.display());
            }
        }
        Command::Synth(a) => {
            let path = pipeline::synth(a.per_class, a.height, a.width, a.seed, &a.out)?;
            println!("{}", path.display());
        }
        Command::Split(a) => {
            let file = pipeline::split_file(&a.manifest, a.val, a.test, a.seed, &a.out)?;
            for tag in [SplitTag::Train, SplitTag::Val, SplitTag::Test] {
                println!("{}\t{}", tag.as_str(), file.count(tag));
            }
        }
        Command::Train(a) => {
            let mut overrides = Vec::new();
            push(&mut overrides, "epochs", &a.epochs);
            push(&mut overrides, "seed", &a.seed);
            push(&mut overrides, "batch_size", &a.batch_size);
            push(&mut overrides, "learning_rate", &a.learning_rate);
            push(&mut overrides, "feed_stage", &a.feed_stage);
            if a.record_time {
                overrides.push(("record_time".into(), "true".into()));
            }
            overrides.extend(a.model.overrides());
            overrides.extend(set_pairs(&a.config.set)?);
            let cfg = TrainConfig::load(a.config.config.as_deref(), &overrides)?;
            let file = ManifestFile::load(&a.manifest)?;
            let base = pipeline::parent_dir(&a.manifest);
            let train = pipeline::load_set(&file.select(SplitTag::Train), &base, &cfg.preprocess, &cfg.model)?;
            let val = pipeline::load_set(&file.select(SplitTag::Val), &base, &cfg.preprocess, &cfg.model)?;
            let outcome = pipeline::train(&cfg, &file.class_names, &train, &val, &a.out, |r| {
                eprintln!(
                    "epoch {:>4}  train loss {:.4} acc {:.4}  val loss {:.4} acc {:.4}",
                    r.epoch, r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy
                );
            })?;
            println!("best epoch {} -> {}", outcome.best_epoch, outcome.best_checkpoint.display());
            println!("history -> {}", outcome.history_path.display());
        }
        Command::Evaluate(a) => {
            let ckpt = Checkpoint::load(&a.checkpoint)?;
            let file = ManifestFile::load(&a.manifest)?;
            let manifest = match a.split.as_str() {
                "all" => almond_core::dataset::DatasetManifest {
                    class_names: file.class_names.clone(),
                    samples: file.records.iter().map(|(_, s)| s.clone()).collect(),
                    split: SplitTag::Test,
                },
                other => file.select(SplitTag::parse(other).ok_or_else(|| Error::Config(format!("unknown split {other:?}")))?),
            };
            let (matrix, report) = pipeline::evaluate(&ckpt, &manifest, &pipeline::parent_dir(&a.manifest))?;
            emit(a.out.as_deref(), &classification_report(&ckpt.class_names, &matrix, &report))?;
        }
        Command::Predict(a) => {
            let ckpt = Checkpoint::load(&a.checkpoint)?;
            let model = ckpt.to_model()?;
            let mut text = String::new();
            for image in &a.images {
                let p = pipeline::predict_image(&ckpt, &model, crate::imageio::read_gray(image)?)?;
                let probs: Vec<String> = p.probabilities.iter().map(|v| format!("{v:.6}")).collect();
                text += &format!("{}\t{}\t{}\n", image.display(), p.label, probs.join("\t"));
            }
            emit(a.out.as_deref(), &text)?;
        }
        Command::Trace(a) => {
            let mut model = match &a.config.config {
                Some(path) => TrainConfig::load(Some(path), &[])?.model,
                None => ModelConfig::full(),
            };
            for (k, v) in a.model.overrides().into_iter().chain(set_pairs(&a.config.set)?) {
                if !apply_model_key(&mut model, &k, &v)? {
                    return Err(Error::Config(format!("trace only accepts model.* keys, found `{k}`")));
                }
            }
            let specs = build_almondnet20(&model)?;
            let trace = shape_trace(&specs, &model.input_shape())?;
            let mut text = format!("model {} ({}x{}x1, multiplier {})\n", model.name(), model.input_height, model.input_width, model.channel_multiplier);
            text += &format!("{trace}\n");
            let cascade: Vec<String> = trace.pool_cascade().iter().map(|(h, w)| format!("{h}x{w}")).collect();
            text += &format!("pool cascade: {}\n", cascade.join(" -> "));
            if let Some(f) = trace.flatten_width() {
                text += &format!("flatten: {f}\n");
            }
            emit(a.out.as_deref(), &text)?;
        }
        Command::Ingest(a) => {
            let base = if a.one_based { CoordinateBase::OneBased } else { CoordinateBase::ZeroBased };
            let summary = pipeline::ingest(&a.images, &a.annotations, &a.out, base, a.whole_image)?;
            for (path, err) in &summary.skipped {
                eprintln!("skipped {}: {err}", path.display());
            }
            println!("{} crops -> {}", summary.crops, summary.manifest.display());
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match run_command(cli.command) {
        Ok(()) => {
            let _ = std::io::stdout().flush();
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}
