use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("file truncated: header declares {expected} bytes of samples, payload has {actual}")]
    TruncatedFile { expected: usize, actual: usize },
    #[error("malformed header field `{field}`: {detail}")]
    MalformedHeader { field: String, detail: String },
    #[error(
        "only {found} of the {required} montage electrodes are present (missing: {missing:?})"
    )]
    NoOverlapWithMontage {
        found: usize,
        required: usize,
        missing: Vec<String>,
    },
    #[error("missing channels: {0:?}")]
    MissingChannels(Vec<String>),
    #[error("recording `{id}` too short: {samples} samples available, {required} required")]
    TooShort {
        id: String,
        samples: usize,
        required: usize,
    },
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("unknown architecture `{0}` (expected eegnet, shallownet, deep4net or tcn)")]
    UnknownArch(String),
    #[error(
        "input window of {window} samples is shorter than the receptive field ({receptive_field})"
    )]
    WindowTooShort {
        window: usize,
        receptive_field: usize,
    },
    #[error("crop of {len} samples too short for {transform} (needs {required})")]
    CropTooShort {
        transform: &'static str,
        len: usize,
        required: usize,
    },
    #[error("sampler bucket ({dataset}, {label}) is empty")]
    EmptyBucket { dataset: String, label: String },
    #[error("loss diverged (non-finite) at epoch {epoch}, step {step}")]
    DivergedLoss { epoch: usize, step: usize },
    #[error("checkpoint architecture `{found}` does not match plan architecture `{expected}`")]
    ArchMismatch { expected: String, found: String },
    #[error("parameter names differ: missing {missing:?}, unexpected {unexpected:?}")]
    NameMismatch {
        missing: Vec<String>,
        unexpected: Vec<String>,
    },
    #[error("unknown layer `{0}`")]
    UnknownLayer(String),
    #[error("class {0} absent from ground truth")]
    MissingClass(usize),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid checkpoint: {0}")]
    InvalidCheckpoint(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Numeric(#[from] numcore::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
