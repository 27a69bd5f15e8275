use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    Mesh(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("non-finite kernel value on panels ({0}, {1})")]
    NonFinite(usize, usize),
    #[error("singular system at s = {s}: {detail}")]
    Singular { s: String, detail: String },
    #[error("evaluation point on surface: {0}")]
    OnSurface(String),
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
