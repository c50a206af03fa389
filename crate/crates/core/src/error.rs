use std::path::PathBuf;

use thiserror::Error;

use crate::models::BrillouinPoint;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter for model `{model}`: {message}")]
    InvalidParameter { model: String, message: String },

    #[error("model `{model}` is missing parameter `{name}`")]
    MissingParameter { model: String, name: String },

    #[error("model `{model}` does not take parameter `{name}`")]
    UnknownParameter { model: String, name: String },

    #[error("unknown model `{0}` (expected sphere, torus or nh_torus)")]
    UnknownModel(String),

    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("band gap closes at k = ({:.6}, {:.6}): |h·h| = {hh_norm:.3e}", .k.kx, .k.ky)]
    Singular { k: BrillouinPoint, hh_norm: f64 },

    #[error("zero refinement did not converge for {} candidate(s)", .candidates.len())]
    NonConvergence { candidates: Vec<FailedCandidate> },

    #[error(
        "field vanishes on the whole scan mesh (max |v| = {max_norm:.3e}); zeros are not isolated"
    )]
    NonIsolated { max_norm: f64 },

    #[error("ill-conditioned loop around ({:.6}, {:.6}): {reason}", .k.kx, .k.ky)]
    IllConditionedLoop { k: BrillouinPoint, reason: String },

    #[error("model is gapless on the mesh (min gap {min_gap:.3e})")]
    Gapless { min_gap: f64 },

    #[error("operation requires a Hermitian model, `{0}` is non-Hermitian")]
    NotHermitian(String),

    #[error("{0}")]
    Precondition(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A seeded zero candidate that neither Newton nor bisection could pin down.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct FailedCandidate {
    pub kx: f64,
    pub ky: f64,
    pub residual: f64,
}

impl Error {
    /// Numerical failures (as opposed to bad input) map to a distinct CLI exit code.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::NonIsolated { .. }
                | Error::IllConditionedLoop { .. }
                | Error::Singular { .. }
                | Error::Gapless { .. }
        )
    }
}
