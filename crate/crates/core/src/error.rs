use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// `d < alpha * p` fails, so the local time does not exist.
    #[error("local time does not exist: need d < alpha*p, got d={d}, alpha={alpha}, p={p} (alpha*p = {})", alpha * (*p as f64))]
    ExistenceCondition { d: usize, p: usize, alpha: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("sheet value {value:?} at time indices {indices:?} lies outside the spatial grid (half width {half_width})")]
    OutOfGrid {
        indices: Vec<usize>,
        value: Vec<f64>,
        half_width: f64,
    },

    #[error("truncation tail {tail:.3e} exceeds {limit:.1}% of the value {value:.6e}")]
    TailTooLarge { tail: f64, value: f64, limit: f64 },

    #[error("enumeration budget exceeded: estimated cost {cost:.3e} > budget {budget:.3e}")]
    BudgetExceeded { cost: f64, budget: f64 },

    #[error("insufficient exceedances: only thresholds {usable:?} have at least {min_count} exceedances (need {needed})")]
    InsufficientExceedances {
        usable: Vec<f64>,
        min_count: usize,
        needed: usize,
    },

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
