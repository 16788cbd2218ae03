use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors produced by the cohort pipeline, the miners, and the report
/// emitters. Variants are grouped so callers can map them onto exit
/// codes: `is_config` covers bad configuration, everything else that is
/// not an oracle mismatch is a data/IO problem.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema: {0}")]
    Schema(String),

    #[error("config: {0}")]
    Config(String),

    #[error("line {line}: {msg}")]
    MalformedRow { line: u64, msg: String },

    #[error("unknown variable '{0}'")]
    UnknownVariable(String),

    #[error("unknown column '{0}'")]
    UnknownColumn(String),

    #[error("unknown stratum variable '{0}'")]
    UnknownStratumVariable(String),

    #[error("duplicate stratum name '{0}'")]
    DuplicateStratum(String),

    #[error("empty cohort")]
    EmptyCohort,

    #[error("no features")]
    NoFeatures,

    #[error("inconsistent feature sets across patient rows")]
    InconsistentRows,

    #[error("candidate budget exceeded: {candidates} candidates, budget {budget}")]
    BudgetExceeded { candidates: u128, budget: u64 },

    #[error("setting {setting}: {source}")]
    Setting {
        setting: String,
        #[source]
        source: Box<Error>,
    },

    #[error("data: {0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for errors caused by configuration (schema files, specs,
    /// flag values) rather than by the data being processed.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Schema(_) | Error::Config(_) | Error::BudgetExceeded { .. } => true,
            Error::Setting { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
