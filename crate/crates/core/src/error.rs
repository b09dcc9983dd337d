use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("polynomial is identically zero")]
    IdenticallyZero,
    #[error("cofactor expansion limited to size {limit}, got {size}")]
    SizeExceeded { size: usize, limit: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("(H.1) block sizes must satisfy d_h >= 1 and d_p >= 1")]
    H1Violated,
    #[error("(H.3) diffusion block has an eigenvalue with non-positive real part ({0})")]
    H3Violated(f64),
    #[error("(H.4) transport block is not diagonalizable with real spectrum: {0}")]
    H4Violated(String),
    #[error("control region must be a nonempty open subset of the circle")]
    EmptyRegion,
    #[error("no spectral gap at mode {mode}")]
    GapNotFound { mode: i64 },
    #[error("propagator norm {norm:.3e} exceeds budget")]
    OverflowRisk { norm: f64 },
    #[error("adaptive quadrature did not converge on [{a}, {b}]")]
    QuadratureFailure { a: f64, b: f64 },
    #[error("input map has numerical rank zero")]
    RankCollapse,
    #[error("Kalman matrix is rank deficient at mode {mode}")]
    RankDeficientMode { mode: i64 },
    #[error("initial datum violates the range constraint at mode {mode}")]
    NotInE { mode: i64 },
    #[error("horizon {t:.6} does not exceed minimal time plus stage margins ({bound:.6})")]
    TimeTooShort { t: f64, bound: f64 },
    #[error("phase derivative vanishes")]
    PhaseDegenerate,
    #[error("grid of {have} points too coarse, need at least {need}")]
    GridTooCoarse { have: usize, need: usize },
    #[error("control region leaves no gap of length {need:.6}")]
    GeometryMismatch { need: f64 },
    #[error("no unobservable direction for transport eigenvalue {mu}")]
    NoObstructionWitness { mu: f64 },
    #[error("{mu} is not an eigenvalue of the transport block")]
    EigenvalueNotInSpectrum { mu: f64 },
    #[error("backward evolution requested for a vector outside the hyperbolic range at mode {mode}")]
    BackwardParabolic { mode: i64 },
    #[error("eigenvalue iteration did not converge")]
    EigenFailure,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
