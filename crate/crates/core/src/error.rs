use std::path::PathBuf;

/// Errors produced by the solver, the models and the benchmark harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("density must be positive, got {0}")]
    NonPositiveDensity(f64),

    #[error("geometry dimensions {dims:?} are too small: {reason}")]
    InvalidDimensions { dims: [usize; 3], reason: String },

    #[error("geometry contains no fluid nodes")]
    EmptyGeometry,

    #[error("target solid fraction {0} is unreachable by random sequential insertion (max 0.55)")]
    UnreachableSolidFraction(f64),

    #[error("scheme mismatch: {0}")]
    SchemeMismatch(String),

    #[error("AA propagation needs an even step count, got {0}")]
    OddAaSteps(u64),

    #[error("state holds {state} nodes but the lattice has {lattice}")]
    SizeMismatch { state: usize, lattice: usize },

    #[error("no bandwidth data for {0} GHz and interpolation is disabled")]
    MissingBandwidth(f64),

    #[error("empty table: {0}")]
    EmptyTable(String),

    #[error("{ranks} ranks requested for {nodes} fluid nodes")]
    TooManyRanks { ranks: usize, nodes: usize },

    #[error("working set of {working_set} bytes is below the required {required} bytes (4x last-level cache)")]
    WorkingSetTooSmall { working_set: usize, required: usize },

    #[error("measurement took {0:.3} s, below the 0.2 s timer floor")]
    TimerResolution(f64),

    #[error("malformed geometry file {path}: {reason}")]
    GeometryFormat { path: PathBuf, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
