use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("quadrature did not converge: {what} (last change {last_change:.3e} at order {order})")]
    QuadratureDivergence {
        what: String,
        order: usize,
        last_change: f64,
    },
    #[error("operator basis is empty")]
    EmptyBasis,
    #[error("every basis element is degenerate under the prior-averaged state")]
    DegenerateBasis,
    #[error("symbol is not a polynomial in a single rotated quadrature; use the Fock-oracle PVM path")]
    NotSingleQuadrature,
    #[error("basis element {index} is not a real symbol")]
    NonHermitian { index: usize },
    #[error("Fock truncation d={dim} loses {deficit:.3e} of the trace; increase d")]
    TruncationDeficit { dim: usize, deficit: f64 },
    #[error("oracle did not converge: {reason} (last estimate {last_value:.12e}, change {last_change:.3e} at d={dim})")]
    OracleNotConverged {
        reason: String,
        dim: usize,
        last_value: f64,
        last_change: f64,
    },
    #[error("eigendecomposition of the averaged state failed at d={dim}")]
    EigenFailure { dim: usize },
    #[error("marginal likelihood vanishes at outcome {outcome}")]
    VanishingMarginal { outcome: f64 },
    #[error("relative MSL needs a positive reference, got {0}")]
    NonPositiveGlobal(f64),
    #[error("unsupported moment: {0}")]
    UnsupportedMoment(String),
    #[error("no usable grid points above the Wigner floor")]
    EmptyFitGrid,
    #[error("parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
