use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("minorization P >= s⊗ν violated at ({i}, {j}) by {deficit:.3e}")]
    MinorizationViolated { i: usize, j: usize, deficit: f64 },

    #[error("row {row} of the transition matrix is not a probability vector")]
    NotStochastic { row: usize },

    #[error("atom measure ν is not a probability vector")]
    InvalidMeasure,

    #[error("small function s must lie in [0, 1]; entry {index} is {value}")]
    InvalidSmallFunction { index: usize, value: f64 },

    #[error("transition graph is not irreducible: components {components:?}")]
    NotIrreducible { components: Vec<Vec<usize>> },

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("fundamental kernel series diverges (I − H is numerically singular)")]
    SeriesDiverges,

    #[error("moment order {m} exceeds the supported maximum {max}")]
    OrderTooLarge { m: usize, max: usize },

    #[error("truncated series tail bound {tail_bound:.3e} exceeds tolerance {tol:.3e}")]
    TruncationInsufficient { tail_bound: f64, tol: f64 },

    #[error("regeneration gap distribution has mass {mass} < 1 (X model is not recurrent)")]
    CoefficientMassDeficit { mass: f64 },

    #[error("negative block variance {0:.3e}")]
    NegativeVariance(f64),

    #[error("atom halfwidth must lie in (0, 1], got {0}")]
    InvalidHalfwidth(f64),

    #[error("unknown process family: {0}")]
    UnknownProcessFamily(String),

    #[error("invalid process spec: {0}")]
    InvalidSpec(String),

    #[error("operation requires family {expected}, found {found}")]
    WrongFamily {
        expected: &'static str,
        found: String,
    },

    #[error("empty kernel neighborhood at x = {x_eval} with h = {h}")]
    EmptyNeighborhood { x_eval: f64, h: f64 },

    #[error("no observations in the occupation set")]
    EmptyOccupation,

    #[error("every leave-one-out neighborhood is empty")]
    AllNeighborhoodsEmpty,

    #[error("all {reps} replications were rejected")]
    AllRejected { reps: usize },

    #[error("need at least {needed} values, found {found}")]
    TooFewValues { found: usize, needed: usize },

    #[error("results are not comparable: {0}")]
    IncomparableProtocols(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}
