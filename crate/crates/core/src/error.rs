use thiserror::Error;

use crate::qstate::DensityMatrix;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(String),

    #[error("unknown state label `{0}` (expected one of H, V, D, A, R, L)")]
    UnknownLabel(String),

    #[error("state is not normalized: |h|^2 + |v|^2 = {norm_sq}")]
    Unnormalized { norm_sq: f64 },

    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),

    #[error("invalid process matrix: {0}")]
    InvalidProcess(String),

    #[error("Kraus set is not complete: ||sum K^dag K - I|| = {deviation:e}")]
    IncompleteKraus { deviation: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("no clicks recorded: normalized probability undefined")]
    ZeroCounts,

    #[error("tomography dataset incomplete: {0}")]
    IncompleteDataset(String),

    #[error("process inputs are rank deficient: {0}")]
    RankDeficient(String),

    #[error("degenerate fit design: {0}")]
    DegenerateFit(String),

    #[error("maximum-likelihood reconstruction did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NonConvergence {
        iterations: usize,
        gradient_norm: f64,
        best: Box<DensityMatrix>,
    },
}
