use thiserror::Error;

/// Errors surfaced by the solvers and the bi-fidelity machinery.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("CFL violation: dt = {dt:.3e} exceeds stable limit {limit:.3e} ({context})")]
    CflViolation { dt: f64, limit: f64, context: String },

    #[error("projection solver did not converge: residual {residual:.3e} after {iters} iterations")]
    ProjectionFailure { residual: f64, iters: usize },

    #[error("NaN detected in solver state ({0})")]
    NanDetected(String),

    #[error("snapshot layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("candidate set is rank deficient: achieved rank {achieved} < requested {requested} (residual {residual:.3e})")]
    RankDeficient { achieved: usize, requested: usize, residual: f64 },

    #[error("Gramian is numerically singular (condition estimate {cond_estimate:.3e})")]
    SingularGramian { cond_estimate: f64 },

    #[error("coefficient length {got} does not match basis size {expected}")]
    CoefficientLength { got: usize, expected: usize },

    #[error("grids are not nested: {0}")]
    NonNestedGrids(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("eigensolver failure: {0}")]
    EigenFailure(String),

    #[error("fit skipped: {0}")]
    FitSkipped(String),

    #[error("missing offline artifact: {0}")]
    MissingArtifact(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("sample {sample_id} failed: {source}")]
    SampleFailed {
        sample_id: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("too many sample failures: {failed} of {total}")]
    SweepAborted { failed: usize, total: usize },

    #[error("checksum mismatch for {path}")]
    ChecksumMismatch { path: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
