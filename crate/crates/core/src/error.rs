use thiserror::Error;

/// Failures raised by the solver, observer, and inversion stages.
///
/// Times and magnitudes are carried as `f64` regardless of the working
/// precision so the error type stays non-generic.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("field length {found} does not match grid size {expected}")]
    GridMismatch { expected: usize, found: usize },

    #[error("non-finite value in {field}")]
    NonFiniteInput { field: String },

    #[error("non-finite value in `{field}` at t = {time}")]
    BlowUp { time: f64, field: &'static str },

    #[error("symbol is invalid at wavenumber {k}: {reason}")]
    InvalidSymbol { k: i64, reason: &'static str },

    #[error("bottom profile violates the no-island condition: min(zeta) = {min} <= -1")]
    NoIsland { min: f64 },

    #[error("infeasible observer parameters: {0}")]
    Infeasible(String),

    #[error("measurement stream exhausted: need {needed} records, stream holds {available}")]
    StreamExhausted { needed: usize, available: usize },

    #[error("measurement record too short: the decay threshold needs t_end >= {required}, got {provided}")]
    RecordTooShort { required: f64, provided: f64 },

    #[error("time {time} is not on the step lattice of spacing {step}")]
    OffLattice { time: f64, step: f64 },

    #[error("inversion operator is singular to working precision (|lambda|min / |lambda|max = {ratio:e}); use more snapshots or a different data window")]
    Singular { ratio: f64 },

    #[error("inversion operator vanishes identically: every snapshot has q_x = 0")]
    DegenerateData,

    #[error("need at least {needed} samples in the fit window, found {found}")]
    InsufficientSamples { needed: usize, found: usize },

    #[error("snapshot series is invalid: {0}")]
    InvalidSeries(String),
}

pub type Result<T> = std::result::Result<T, Error>;
