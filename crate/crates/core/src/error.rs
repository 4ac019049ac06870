use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema mismatch in {file}: {detail}")]
    Schema { file: String, detail: String },

    #[error("referential integrity violation: {detail}")]
    Integrity { detail: String },

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("rank deficiency: collinear columns {columns:?}")]
    RankDeficient { columns: Vec<String> },

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {file}: {source}")]
    Csv {
        file: String,
        #[source]
        source: csv::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn csv(file: impl Into<String>, source: csv::Error) -> Self {
        Error::Csv {
            file: file.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
