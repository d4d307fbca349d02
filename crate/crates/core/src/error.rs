use thiserror::Error;

/// Errors produced by the ordcare library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("missing column `{0}` in header")]
    MissingColumn(String),

    #[error("row {row}: `{value}` in column `{column}` is not an integer")]
    NotInteger {
        row: u64,
        column: String,
        value: String,
    },

    #[error("{file} row {row}: `{value}` in column `{column}` is not a number")]
    NotNumber {
        file: String,
        row: u64,
        column: String,
        value: String,
    },

    #[error("row {row}: level {value} in column `{column}` outside [0, {max}]")]
    LevelOutOfRange {
        row: u64,
        column: String,
        value: i64,
        max: usize,
    },

    #[error("row {row}: negative count {value}")]
    NegativeCount { row: u64, value: i64 },

    #[error("dataset has zero total count")]
    EmptyDataset,

    #[error("invalid level count K={0} (need K >= 2)")]
    InvalidLevelCount(usize),

    #[error("predictor column `{0}` is constant (sd = 0)")]
    DegenerateColumn(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    #[error("invalid sampler config: {0}")]
    InvalidConfig(String),

    #[error("no finite posterior density found after {0} initialization attempts")]
    Initialization(usize),

    #[error(
        "chain {chain}: block `{block}` rejected every proposal in a window of {window} iterations"
    )]
    Divergence {
        chain: usize,
        block: String,
        window: usize,
    },

    #[error("insufficient draws: {0}")]
    InsufficientDraws(String),

    #[error("no threshold curve: {0}")]
    NoCurve(String),

    #[error("stale posterior artifact: {0}")]
    StaleArtifact(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for errors caused by the input data rather than the caller's configuration.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Csv(_)
                | Error::MissingColumn(_)
                | Error::NotInteger { .. }
                | Error::LevelOutOfRange { .. }
                | Error::NegativeCount { .. }
                | Error::EmptyDataset
                | Error::DegenerateColumn(_)
                | Error::StaleArtifact(_)
        )
    }

    /// True for sampler failures (non-finite initialization, stuck blocks).
    pub fn is_convergence_error(&self) -> bool {
        matches!(self, Error::Initialization(_) | Error::Divergence { .. })
    }
}
