use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CssError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("grid kind mismatch: {0}")]
    GridKindMismatch(String),
    #[error("plan mismatch: {0}")]
    PlanMismatch(String),
    #[error("integration diverged at t = {t}")]
    IntegrationDiverged { t: f64 },
    #[error("nonuniform sampling in trajectory")]
    NonuniformSampling,
    #[error("not enough samples: need {need}, have {have}")]
    TooFewSamples { need: usize, have: usize },
    #[error("second moment {value} exceeds cap {cap}")]
    MomentOverflow { value: f64, cap: f64 },
    #[error("wrong coupling: expected g = {expected}, got {got}")]
    WrongCoupling { expected: f64, got: f64 },
    #[error("J(alpha u) > 0 on the whole bracket (0, {alpha_hi}]")]
    NoSignChange { alpha_hi: f64 },
    #[error("no bracket found: {0}")]
    BracketNotFound(String),
    #[error("undecided-dominated: {undecided} of {total} probes undecided")]
    UndecidedDominated { undecided: usize, total: usize },
    #[error("no convergence after {iterations} iterations")]
    NonConvergence { iterations: usize },
}

impl CssError {
    /// Stable machine-readable category, used for CLI exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            CssError::InvalidArgument(_) => "invalid-argument",
            CssError::LengthMismatch { .. } => "length-mismatch",
            CssError::GridKindMismatch(_) => "grid-kind-mismatch",
            CssError::PlanMismatch(_) => "plan-mismatch",
            CssError::IntegrationDiverged { .. } => "integration-diverged",
            CssError::NonuniformSampling => "nonuniform-sampling",
            CssError::TooFewSamples { .. } => "too-few-samples",
            CssError::MomentOverflow { .. } => "moment-overflow",
            CssError::WrongCoupling { .. } => "wrong-coupling",
            CssError::NoSignChange { .. } => "no-sign-change",
            CssError::BracketNotFound(_) => "bracket-not-found",
            CssError::UndecidedDominated { .. } => "undecided-dominated",
            CssError::NonConvergence { .. } => "nonconvergence",
        }
    }
}

pub type Result<T> = std::result::Result<T, CssError>;
