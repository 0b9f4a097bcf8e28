use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column `{column}`: cannot read {value:?}")]
    Parse { row: usize, column: String, value: String },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("dataset too small: {0}")]
    TooSmall(String),

    #[error("dimensionality error: {0}")]
    Dimensionality(String),

    #[error("training diverged at epoch {epoch} (non-finite gradient); try a lower learning_rate")]
    Divergence { epoch: usize },

    #[error("empty Rashomon set: all {dropped} scorers exceed epsilon = {epsilon} (best loss {best_loss})")]
    EmptyRashomon {
        dropped: usize,
        epsilon: f64,
        best_loss: f64,
    },

    #[error("undefined rate: group {group} has no samples with label {label}")]
    UndefinedRate { group: usize, label: u8 },

    #[error("score std is undefined for a pool of {0} model(s); need at least 2")]
    UndefinedStd(usize),

    #[error("unsupported group count: {0} (this operation needs exactly 2 groups)")]
    UnsupportedGroupCount(usize),

    #[error("stale rule: fitted on dataset {expected}, applied to {actual}")]
    StaleRule { expected: String, actual: String },

    #[error("infeasible group {group}: floor({size} * {epsilon}) = 0, cannot give every model an error")]
    InfeasibleGroup { group: usize, size: usize, epsilon: f64 },

    #[error("infeasible norm cap: alpha = {alpha} < 1/sqrt(m) = {min}")]
    InfeasibleCap { alpha: f64, min: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("inconclusive certification: none of {trials} trials met the confidence precondition (mean mass in band {mean_mass_in_band})")]
    Inconclusive { trials: usize, mean_mass_in_band: f64 },

    #[error("index {index} out of bounds for {len} rows")]
    IndexOutOfBounds { index: usize, len: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("missing artifact {}: run `{producer}` first", path.display())]
    MissingArtifact { path: PathBuf, producer: &'static str },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

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

    /// True for errors caused by invalid user configuration rather than a
    /// failing computation.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) => true,
            Error::Stage { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
