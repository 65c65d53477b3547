use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("market has no groups")]
    EmptyMarket,

    #[error("group {index}: willingness to pay must be positive and finite, got {value}")]
    InvalidTheta { index: usize, value: f64 },

    #[error("group {index}: population must be at least 1")]
    InvalidPopulation { index: usize },

    #[error("supply must be nonnegative and finite, got {0}")]
    InvalidSupply(f64),

    /// Indices refer to the caller's original (unsorted) order.
    #[error("groups {first} and {second} share the same willingness to pay {theta}")]
    DuplicateTheta { first: usize, second: usize, theta: f64 },

    #[error("{0}")]
    Domain(String),

    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("solution does not belong to this market: {0}")]
    MismatchedSolution(&'static str),

    #[error("root not bracketed on [{lo}, {hi}]")]
    RootNotBracketed { lo: f64, hi: f64 },

    /// `q` is the zero-based adjacent pair `(q, q + 1)` whose ratio falls short.
    #[error("menu infeasible: pair ({q}, {}) misses its threshold by {margin}", q + 1)]
    Infeasible { q: usize, margin: f64 },

    #[error("menu violates incentive compatibility at step {step}: s*={intended} exceeds {indifference}")]
    IncentiveViolation { step: usize, intended: f64, indifference: f64 },

    #[error("invalid menu: {0}")]
    InvalidMenu(String),

    #[error("oracle refuses: {0}")]
    OracleCap(String),
}
