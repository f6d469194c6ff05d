use std::path::PathBuf;

/// Every failure the library can report.
///
/// Variants are grouped by the exit code the CLI maps them to: configuration
/// problems (2) versus problems with the data being processed (3).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("format error at row {row}: {message}")]
    Format { row: usize, message: String },

    #[error("timing error: sample spacing not uniform at {fs} Hz, worst gap {worst_gap:.6} s at row {row} (expected {expected:.6} s)")]
    Timing {
        fs: f64,
        worst_gap: f64,
        expected: f64,
        row: usize,
    },

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("column {index} has zero norm")]
    DegenerateColumn { index: usize },

    #[error("size error: {0}")]
    Size(String),

    #[error("solver diverged at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("projection operator was built from a different dictionary")]
    StaleOperator,

    #[error("training error: class `{class}` ended up empty")]
    EmptyClass { class: String },

    #[error("ambiguous cluster-to-class mapping, cluster durations (s): {durations:?}")]
    AmbiguousMapping { durations: Vec<f64> },

    #[error("training error: {0}")]
    Training(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by configuration rather than input data.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Parameter(_) | Error::StaleOperator | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
