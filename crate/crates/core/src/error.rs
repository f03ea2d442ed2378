use std::path::PathBuf;

/// Errors raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("path does not exist: {0}")]
    MissingPath(PathBuf),
    #[error("no documents found in {0}")]
    NoDocuments(PathBuf),
    #[error("{path}: line {line}: {message}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{0} is not valid UTF-8")]
    NotUtf8(PathBuf),
    #[error("invalid window: overlap {overlap} must be smaller than window_len {window_len}")]
    InvalidWindow { window_len: usize, overlap: usize },
    #[error("vocabulary: {0}")]
    Vocab(String),
    #[error("token id {id} out of range for vocabulary of size {size}")]
    TokenOutOfRange { id: usize, size: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("no supervised positions")]
    NoSupervisedPositions,
    #[error("backward called on a non-scalar node of shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("learning rate must be positive, got {0}")]
    InvalidLearningRate(f64),
    #[error("invalid model config: {0}")]
    InvalidModelConfig(String),
    #[error("sequence length {len} exceeds max_positions {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("empty text after normalization")]
    EmptyText,
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{0} out of range")]
    OutOfRange(&'static str),
    #[error("vocabulary hash mismatch: checkpoint has {checkpoint}, tokenizer has {tokenizer}")]
    VocabMismatch {
        checkpoint: String,
        tokenizer: String,
    },
    #[error("vocabulary size mismatch: model expects {model}, tokenizer has {tokenizer}")]
    VocabSizeMismatch { model: usize, tokenizer: usize },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("training set must contain both classes")]
    SingleClass,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("length mismatch: {0} predictions vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("payload length mismatch: manifest describes {expected} bytes, file holds {actual}")]
    PayloadLength { expected: usize, actual: usize },
    #[error("unparseable response: {0:?}")]
    Unparseable(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
