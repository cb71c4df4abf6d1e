use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate market-clearing system at M = {capacity}: |g1^2 - g2^2| = {determinant:e}")]
    DegenerateSystem { capacity: f64, determinant: f64 },

    #[error("vanishing diffusion at M = {capacity}: Sigma^2 = {variance:e}")]
    VanishingDiffusion { capacity: f64, variance: f64 },

    #[error("negative individual reserves m = {0}")]
    NegativeReserves(f64),

    #[error("shooting objective does not change sign over [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },

    #[error("no equilibrium: `{invariant}` failed ({detail})")]
    NoEquilibrium { invariant: String, detail: String },

    #[error("invalid equilibrium solution: {0}")]
    InvalidSolution(String),

    #[error("singular tridiagonal system (pivot {pivot:e} at row {row})")]
    SingularSystem { row: usize, pivot: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn no_equilibrium(invariant: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::NoEquilibrium {
            invariant: invariant.into(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
