use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid n = {n} is too coarse for the retained modes (need n >= {needed})")]
    GridTooCoarse { n: usize, needed: usize },

    #[error("implicit step matrix is singular at step {step}")]
    SingularStep { step: usize },

    #[error("quadratic program is infeasible (constraint residual {residual:.3e})")]
    Infeasible { residual: f64 },

    #[error("invalid quadratic program: {0}")]
    InvalidProgram(String),

    #[error("target unreachable with M = {m} for N = {n} (relative residual {residual:.3e}); raise M")]
    Unreachable { m: usize, n: usize, residual: f64 },

    #[error("no listed M reaches D(M) <= {slack} * D(inf); estimated M needed: {estimate:?}")]
    InsufficientM { slack: f64, estimate: Option<usize> },

    #[error("observability constant is infinite: {0}")]
    Unobservable(String),

    #[error("no admissible N below the truncation K = {k} (best contraction factor {best:.4})")]
    ResolutionTooSmall { k: usize, best: f64 },

    #[error("Riccati solution exceeded cap {cap:.3e} at t = {t:.4}; not stabilizable with M = {m}")]
    NotStabilizable { t: f64, m: usize, cap: f64 },

    #[error("Picard map is not contracting at |v0|_V = {amplitude:.3e} (ratio {gamma:.3}); lower epsilon_star")]
    GateTooLarge { amplitude: f64, gamma: f64 },

    #[error("config error at `{path}`: {reason}")]
    Config { path: String, reason: String },

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
