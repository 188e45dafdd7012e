use thiserror::Error;

/// A named way in which a candidate initial profile fails admissibility.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProfileViolation {
    #[error("unknown profile family `{0}`")]
    UnknownFamily(String),
    #[error("invalid parameters for family `{family}`: {reason}")]
    BadParams { family: String, reason: String },
    #[error("theta0 is negative at y = {y:e}")]
    Negative { y: f64 },
    #[error("theta0 is increasing at y = {y:e} (slope {slope:e})")]
    Increasing { y: f64, slope: f64 },
    #[error("theta0'(0) = {0:e}, expected 0")]
    SlopeAtOrigin(f64),
    #[error("theta0''(0) = {0:e}, expected a strictly negative curvature at the maximum")]
    CurvatureAtOrigin(f64),
    #[error("theta0 is not C2 at the support edge: theta0'(R) = {d1:e}, theta0''(R) = {d2:e}")]
    NotC2AtSupportEdge { d1: f64, d2: f64 },
    #[error("theta0 does not vanish at the support edge (theta0(R) = {0:e})")]
    NonzeroAtSupportEdge(f64),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("inadmissible profile: {0}")]
    Profile(#[from] ProfileViolation),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("K-bounds infeasible: inf of -g'(z)/(eps0^2 z) on (0,1] is {k0:e} <= 0 (eps0 = {eps0})")]
    KBoundsInfeasible { k0: f64, eps0: f64 },

    #[error("no beta < 1 - 1e-3 satisfies condition 3 for K0 = {k0}, K1 = {k1}")]
    ConstantsInfeasible { k0: f64, k1: f64 },

    #[error("certification conditions fail: {0}")]
    ConditionsFail(String),

    #[error("invalid flow state: {0}")]
    InvalidState(String),

    #[error("fit unavailable: {0}")]
    FitUnavailable(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
