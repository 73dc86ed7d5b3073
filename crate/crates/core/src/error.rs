use std::path::PathBuf;

/// Errors produced by panosphere operations.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied argument violates a precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A raster or grid index fell outside its bounds.
    #[error("index ({i}, {j}) out of range for {width}x{height}")]
    Index {
        i: usize,
        j: usize,
        width: usize,
        height: usize,
    },

    /// Input data is malformed or inconsistent with the model that consumes it.
    #[error("data error: {0}")]
    Data(String),

    /// An operation was applied to a value in the wrong state.
    #[error("state error: {0}")]
    State(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// The run configuration is unreadable or invalid.
    #[error("config error: {0}")]
    Config(String),

    /// Failure inside a named pipeline stage.
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error class: 2 for configuration and
    /// argument problems, 3 for data problems, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Argument(_) | Error::State(_) | Error::Config(_) => 2,
            Error::Index { .. } | Error::Data(_) | Error::Json(_) => 3,
            Error::Io { .. } | Error::Image { .. } => 4,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }

    /// Tags the error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            tagged @ Error::Stage { .. } => tagged,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
