use thiserror::Error;

#[derive(Debug, Error)]
pub enum BssError {
    /// The model lacks a capability (analytic pdf, gradient, sampler marginals) the caller needs.
    #[error("capability unavailable for model `{model}`: {what}")]
    Capability { model: String, what: &'static str },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("density profile `{0}` is not normalizable")]
    NotNormalizable(String),

    #[error("non-finite value from {0}")]
    NonFinite(String),

    #[error("iteration diverged at step {step}")]
    Diverged { step: u64 },

    #[error("matrix has an all-zero row or column")]
    ZeroLine,

    #[error("no root found in bracket [{lo}, {hi}]: {detail}")]
    NoRoot { lo: f64, hi: f64, detail: String },

    #[error("unknown {kind} name `{name}`")]
    UnknownName { kind: &'static str, name: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = BssError> = std::result::Result<T, E>;
