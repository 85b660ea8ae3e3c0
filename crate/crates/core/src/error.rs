use thiserror::Error;

/// Errors raised across the design pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:.3e})")]
    NotPsd { min_eig: f64 },

    #[error("matrix is not positive definite: {0}")]
    NotPd(String),

    #[error("closed loop is unstable (spectral radius {spectral_radius:.6})")]
    Unstable { spectral_radius: f64 },

    #[error("iteration did not converge after {iterations} iterations (last change {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("persistent excitation violated: rank {rank} < required {required}")]
    PeViolation { rank: usize, required: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("insufficient samples: N = {n}, need at least {required}")]
    InsufficientSamples { n: usize, required: usize },

    #[error("SDP solver returned {status:?}")]
    Solver { status: crate::sdp::SdpStatus },

    #[error("ill-conditioned gain recovery (cond(Sigma) = {cond:.3e})")]
    IllConditionedRecovery { cond: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
