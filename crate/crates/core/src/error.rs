use thiserror::Error;

use crate::expr::{EvalError, ParseError};

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error in {context}: {source}")]
    Parse {
        context: String,
        #[source]
        source: ParseError,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("unsupported strategy: {0}")]
    Unsupported(String),
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("factorization error: {0}")]
    Factorization(String),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numerical fault at step {step} (t = {time}): {detail}")]
    NumericalFault { step: u64, time: f64, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
