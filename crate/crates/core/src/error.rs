use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("normalisation statistics have not been fitted")]
    StatsNotFitted,

    #[error("non-finite state at rollout step {step}")]
    NonFinite { step: usize },

    #[error("missing gradient for parameter `{0}`")]
    MissingGrad(String),

    #[error("contact set supplied to contact-free family {0}")]
    UnexpectedContact(String),

    #[error("stability bound violated: inner dt {dt} exceeds 2/omega_max = {bound}")]
    Unstable { dt: f64, bound: f64 },

    #[error("split gate not met after {attempts} attempts (best max KS {best_ks:.4} > {threshold})")]
    SplitGate {
        attempts: usize,
        best_ks: f64,
        threshold: f64,
        best: Box<crate::split::SplitReport>,
    },

    #[error("training diverged at epoch {epoch}, step {step}")]
    Diverged { epoch: usize, step: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("sample {sample}: {source}")]
    Sample {
        sample: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> Error {
    Error::Shape {
        op,
        detail: detail.into(),
    }
}
