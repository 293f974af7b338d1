use std::path::PathBuf;

use thiserror::Error;

use crate::matching::PruneStats;

/// Rejections raised while constructing domain values.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum InvalidInput {
    #[error("normal {index} has norm {norm}, expected 1")]
    NonUnitNormal { index: usize, norm: f64 },
    #[error("keypoint {index} has descriptor length {found}, set uses {expected}")]
    DescriptorLength {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("descriptor length must be positive")]
    ZeroDescriptorLength,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("matrix is not a rotation: |R^T R - I|_F = {orthogonality_error:e}, det = {determinant}")]
    NotARotation {
        orthogonality_error: f64,
        determinant: f64,
    },
    #[error("expected {expected} values for {field}, got {found}")]
    WrongLength {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("keypoint set is empty")]
    EmptySet,
    #[error("invalid parameter {name}: {reason}")]
    Parameter { name: &'static str, reason: String },
}

impl InvalidInput {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        InvalidInput::Parameter {
            name,
            reason: reason.into(),
        }
    }
}

/// Failure of the weighted closed-form fit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least 3 positively weighted correspondences, got {0}")]
    TooFewWeighted(usize),
    #[error("weights must be finite and non-negative")]
    BadWeights,
    #[error("degenerate geometry: cross-covariance has rank <= 1")]
    RankDeficient,
}

/// Outcome of [`crate::solver::solve`] when no transform can be produced.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error(transparent)]
    Invalid(#[from] InvalidInput),
    #[error("unmatchable: no candidate survived pruning ({0})")]
    Unmatchable(PruneStats),
    #[error("degenerate instance: {0}")]
    Degenerate(String),
}

impl From<FitError> for SolveError {
    fn from(e: FitError) -> Self {
        SolveError::Degenerate(e.to_string())
    }
}

impl SolveError {
    /// True for the outcomes the CLI reports with exit code 2.
    pub fn is_degenerate(&self) -> bool {
        matches!(self, SolveError::Unmatchable(_) | SolveError::Degenerate(_))
    }
}

/// File and format errors surfaced by the I/O helpers and the CLI.
#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed JSON at `{field}`: {message}")]
    Json {
        path: PathBuf,
        field: String,
        message: String,
    },
    #[error("{0}")]
    Other(String),
}
