//! Crate-wide error type with a stable mapping to CLI exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("schema error at {pointer}: {message}")]
    Schema { pointer: String, message: String },

    #[error("syntax error at {line}:{col}: {message}")]
    Parse { line: usize, col: usize, message: String },

    #[error("evaluation error at t = {time}: {message}")]
    Eval { time: f64, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("divergence: {0}")]
    Divergence(String),

    #[error("undefined direction at t = {0}: measure vanishes there")]
    UndefinedDirection(f64),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Exit code contract: 0 success, 2 configuration/schema, 3 evaluation,
    /// 4 infeasibility, 5 divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Schema { .. } | Error::Parse { .. } | Error::Domain(_) => 2,
            Error::Eval { .. } | Error::UndefinedDirection(_) => 3,
            Error::Infeasible(_) => 4,
            Error::Divergence(_) => 5,
            Error::Io(_) | Error::Json(_) => 2,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn schema(pointer: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Schema { pointer: pointer.into(), message: msg.into() }
    }

    pub fn eval(time: f64, msg: impl Into<String>) -> Self {
        Error::Eval { time, message: msg.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
