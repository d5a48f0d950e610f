use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("resolution too coarse: axis {axis} has {count} nodes (minimum {minimum})")]
    ResolutionTooCoarse {
        axis: usize,
        count: usize,
        minimum: usize,
    },

    #[error("level {t} outside the admissible range ({lo}, {hi})")]
    LevelOutOfRange { t: f64, lo: f64, hi: f64 },

    #[error("degenerate gradient: |grad h| below {threshold} ({detail})")]
    DegenerateGradient { threshold: f64, detail: String },

    #[error("no catalog entry: {0}")]
    NoCatalogEntry(String),

    #[error("indeterminate tail after {doublings} doublings: value {value}, last relative growth {growth}")]
    IndeterminateTail {
        doublings: usize,
        value: f64,
        growth: f64,
    },

    #[error("solver did not converge in {iterations} iterations (gradient ratio {gradient_ratio:e})")]
    NonConvergence {
        iterations: usize,
        gradient_ratio: f64,
    },

    #[error("exhaustion function failed verification: {0}")]
    UnverifiedExhaustion(String),

    #[error("zero denominator in the epsilon ratio at tau = {tau}")]
    ZeroDenominator { tau: f64 },

    #[error("every member of the test family has a vanishing denominator")]
    AllDenominatorsZero,

    #[error("boundary condition violated: {0}")]
    BoundaryConditionViolated(String),

    #[error("window too short: {samples} samples (need at least {required})")]
    WindowTooShort { samples: usize, required: usize },

    #[error("empty family")]
    EmptyFamily,

    #[error("tracts {first} and {second} share node {node}")]
    DisjointnessViolated {
        first: usize,
        second: usize,
        node: usize,
    },

    #[error("support of the flux field reaches boundary node {node}")]
    SupportTouchesBoundary { node: usize },

    #[error("invalid condenser: {0}")]
    InvalidCondenser(String),

    #[error("structure field has no energy potential; only PLaplace and AnisotropicDiagonal presets can be solved")]
    NoPotential,

    #[error("unsupported shell dimension {0} (level shells need 2 or 3 grid axes)")]
    UnsupportedDimension(usize),

    #[error("config field `{field}`: {reason}")]
    ConfigInvalid { field: String, reason: String },

    #[error("report carries no curve payload")]
    NoCurvePayload,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::ConfigInvalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
