use thiserror::Error;

/// Errors raised by the orbit pipeline.
///
/// Variants are grouped by the stage that detects them; callers that only
/// care about the stage can use [`Error::stage`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("sublevel set does not split at c = {c}: {reason}")]
    NoSplit { c: f64, reason: String },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("non-finite potential value at node {node}")]
    Evaluation { node: usize },

    #[error("constraint V > c violated at node {node} (V - c = {excess:.3e})")]
    Constraint { node: usize, excess: f64 },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("iterate left the coercivity ball |q| <= {radius} (max |q| = {reached:.4})")]
    Coercivity { radius: f64, reached: f64 },

    #[error("translation normalization failed: {0}")]
    Normalization(String),

    #[error("path does not connect the two sublevel components: {0}")]
    Connection(String),

    #[error("inconsistent classification: {0}")]
    Inconsistency(String),

    #[error("precondition not met: {0}")]
    Precondition(String),

    #[error("multiplicity procedure stagnated: {0}")]
    Stagnation(String),

    #[error("integration blew up at t = {t_last}")]
    BlowUp { t_last: f64 },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }

    /// Short name of the pipeline stage an error belongs to.
    pub fn stage(&self) -> &'static str {
        match self {
            Error::Parameter { .. } | Error::Input(_) => "input",
            Error::NoSplit { .. } | Error::Geometry(_) => "partition",
            Error::Evaluation { .. } | Error::Constraint { .. } => "action",
            Error::Coercivity { .. } | Error::Normalization(_) | Error::Precondition(_) => "solve",
            Error::Connection(_) | Error::Inconsistency(_) => "classify",
            Error::Stagnation(_) => "studies",
            Error::BlowUp { .. } => "verify",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
