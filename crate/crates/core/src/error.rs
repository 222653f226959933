use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("validation: {0}")]
    Validation(String),

    #[error("storage failure persisting seq {seq}: {source}")]
    Storage {
        seq: u64,
        #[source]
        source: std::io::Error,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("configuration: {0}")]
    Config(String),

    #[error("backend: {message} (after {attempts} attempt(s))")]
    Backend { message: String, attempts: u32 },

    #[error("capability: {0}")]
    Capability(String),

    #[error("decode: {0}")]
    Decode(String),

    #[error("query {query:?}: {source}")]
    Query {
        query: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse_line(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            location: format!("line {line}"),
            message: message.into(),
        }
    }

    pub(crate) fn parse_record(index: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            location: format!("record {index}"),
            message: message.into(),
        }
    }

    /// Attach the pipeline stage name to an error.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Name the query an error belongs to.
    pub fn for_query(self, query: &str) -> Self {
        Error::Query {
            query: query.to_string(),
            source: Box::new(self),
        }
    }

    /// Short machine-readable kind, used by the CLI and the server.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Validation(_) => "validation",
            Error::Storage { .. } => "storage",
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Config(_) => "config",
            Error::Backend { .. } => "backend",
            Error::Capability(_) => "capability",
            Error::Decode(_) => "decode",
            Error::Query { source, .. } | Error::Stage { source, .. } => source.kind(),
        }
    }
}
