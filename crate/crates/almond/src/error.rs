use std::path::PathBuf;

use almond_core::annotation::AnnotationError;
use almond_core::dataset::DatasetError;
use almond_core::imageproc::ImageProcError;
use almond_core::metrics::MetricsError;
use almond_core::nn::NnError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: cannot decode image: {message}")]
    ImageDecode { path: PathBuf, message: String },
    #[error("malformed XML: {0}")]
    MalformedXml(String),
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("annotation {annotation} references missing image {image}")]
    MissingImage { annotation: PathBuf, image: PathBuf },
    #[error("unsupported manifest schema `{0}`")]
    SchemaMismatch(String),
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint version `{found}` is not supported (expected `{expected}`)")]
    VersionMismatch { found: String, expected: String },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("checkpoint blob `{name}` has shape {found:?}, model expects {expected:?}")]
    ShapeMismatch { name: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("class labels differ: checkpoint {checkpoint:?}, manifest {manifest:?}")]
    LabelMismatch { checkpoint: Vec<String>, manifest: Vec<String> },
    #[error("no samples to {0}")]
    EmptyManifest(&'static str),
    #[error("training diverged in epoch {epoch}: loss became non-finite")]
    DivergedLoss { epoch: usize },
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    ImageProc(#[from] ImageProcError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Attaches a path to an IO error.
pub(crate) trait IoContext<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T> {
        self.map_err(|source| Error::Io { path: path.into(), source })
    }
}
