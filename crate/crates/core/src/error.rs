use crate::lrc::LrcError;
use crate::numeric::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Lrc(#[from] LrcError),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("numeric abort at step {step}: {detail}")]
    NumericAbort { step: usize, detail: String },
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
