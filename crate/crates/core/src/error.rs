use thiserror::Error;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("slot {slot} is outside the horizon [0, {horizon}]")]
    SlotOutOfRange { slot: usize, horizon: usize },

    #[error("unknown session index {0}")]
    UnknownSession(usize),

    #[error("invalid instance: {}", summarize(.0))]
    InvalidInstance(Vec<Violation>),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("{0}")]
    Generation(String),

    #[error("no finite augmentation found up to eps = {0}")]
    NoFiniteEps(f64),

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unsupported schema version `{found}` (expected `{expected}`)")]
    SchemaVersion { found: String, expected: String },

    #[error("unknown algorithm `{0}` (valid: sllf, llf, edf, es, rep, olp)")]
    UnknownAlgorithm(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn summarize(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
