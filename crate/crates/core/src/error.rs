use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: `{field}` {reason}")]
    Config { field: String, reason: String },

    #[error("design error: {0}")]
    Design(String),

    #[error("response calibration failed at level {level}: {reason}")]
    Calibration { level: String, reason: String },

    #[error("index out of range: {what} {index} (limit {limit})")]
    OutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("numerical error in columns [{}]: {reason}", columns.join(", "))]
    Numerical { columns: Vec<String>, reason: String },

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("variance undefined: {0}")]
    VarianceUndefined(String),

    #[error("pooling error: {0}")]
    Pooling(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("{step}: {source}")]
    Step {
        step: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn in_step(self, step: &'static str) -> Self {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }
}
