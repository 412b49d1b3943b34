use std::path::PathBuf;

use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Kappa value for one rating dimension; `None` when undefined because both
/// annotators used the same single category throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionKappa {
    pub dimension: String,
    pub kappa: Option<f64>,
}

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-side precondition was not met.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("empty subscale {instrument}/{subscale}")]
    EmptySubscale {
        instrument: String,
        subscale: String,
    },

    #[error("no sessions")]
    NoSessions,

    #[error("kappa undefined: both annotators used one identical category throughout")]
    KappaUndefined,

    #[error("zero-variance {0}")]
    ZeroVariance(&'static str),

    #[error("no nonzero pairs")]
    NoNonzeroPairs,

    #[error("benchmark-only study has no benchmark specification")]
    MissingBenchmark,

    #[error("re-annotation required: {}", format_kappas(.kappas))]
    ReAnnotationRequired { kappas: Vec<DimensionKappa> },

    #[error("missing summary ratings for sessions: {}", .0.join(", "))]
    MissingRatings(Vec<String>),

    #[error("annotated targets without a section: {}", .0.join(", "))]
    UnmappedTargets(Vec<String>),

    #[error("study `{0}` already exists")]
    AlreadyExists(String),

    #[error("{location}: {message}")]
    Parse { location: String, message: String },

    #[error("study is invalid:\n{0}")]
    Validation(ValidationReport),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the failure is the inter-rater agreement gate.
    pub fn is_gating_failure(&self) -> bool {
        matches!(self, Error::ReAnnotationRequired { .. })
    }
}

fn format_kappas(kappas: &[DimensionKappa]) -> String {
    kappas
        .iter()
        .map(|k| match k.kappa {
            Some(v) => format!("{}={v:.4}", k.dimension),
            None => format!("{}=undefined", k.dimension),
        })
        .collect::<Vec<_>>()
        .join(", ")
}
