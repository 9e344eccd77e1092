use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dim(String),
    #[error("polynomial: {0}")]
    Poly(String),
    #[error("domain: {0}")]
    Domain(String),
    #[error("operator: {0}")]
    Op(String),
    #[error("not invertible: {0}")]
    Singular(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{stage}: {source}")]
    Stage { stage: String, source: Box<Error> },
    #[error("problem too large: {0}")]
    TooLarge(String),
    #[error("sdp: {0}")]
    Sdp(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn at(self, stage: impl Into<String>) -> Error {
        Error::Stage { stage: stage.into(), source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
