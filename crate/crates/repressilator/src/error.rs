//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration or argument violated a documented precondition.
    #[error("invalid {what}: {why}")]
    InvalidInput { what: &'static str, why: String },

    /// A state component left the representable range during integration.
    #[error("component {component} became non-finite at step {step}")]
    NonFinite { component: &'static str, step: usize },

    /// Every particle weight underflowed to zero at an observation tick.
    #[error("all particle weights vanished at tick {tick}")]
    DegenerateWeights { tick: usize },

    /// Weight normalization was asked for an empty or all-zero vector.
    #[error("cannot normalize weights: {why}")]
    EmptyWeights { why: &'static str },

    /// Proposal fitting requires at least two samples with positive weight.
    #[error("proposal fit degenerate: {got} samples with positive weight")]
    DegenerateProposal { got: usize },

    /// A covariance matrix was not positive definite.
    #[error("{what} is not positive definite")]
    NotPositiveDefinite { what: &'static str },

    /// Every importance weight in a sampler iteration was zero.
    #[error(
        "all {n_samples} importance weights were zero at iteration {iteration} \
         ({out_of_support} out of support, {filter_failures} filter failures)"
    )]
    AllWeightsZero {
        iteration: usize,
        n_samples: usize,
        out_of_support: usize,
        filter_failures: usize,
    },

    /// An ABC stage exhausted its draw budget without a single acceptance.
    #[error(
        "ABC stage {stage} (tolerance {tolerance}) accepted no samples in {draws} draws; \
         smallest distance seen {best_distance}"
    )]
    AbcStageFailed {
        stage: usize,
        tolerance: f64,
        draws: usize,
        best_distance: f64,
    },

    /// An output artifact already exists and overwrite was not requested.
    #[error("refusing to overwrite existing output {path}")]
    WouldOverwrite { path: String },

    /// A required input artifact is missing.
    #[error("missing input {what}: {path}")]
    MissingInput { what: &'static str, path: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what}: {why}")]
    Parse { what: &'static str, why: String },
}

impl Error {
    /// Process exit code: 1 for validation problems, 2 for runtime or
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput { .. }
            | Error::WouldOverwrite { .. }
            | Error::MissingInput { .. }
            | Error::Parse { .. } => 1,
            _ => 2,
        }
    }

    pub fn invalid(what: &'static str, why: impl Into<String>) -> Self {
        Error::InvalidInput {
            what,
            why: why.into(),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
