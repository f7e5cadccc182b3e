use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violated a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Integer arithmetic overflowed the platform word.
    #[error("integer overflow while computing {0}")]
    Overflow(String),

    /// A point fell outside the domain of a kernel or objective.
    #[error("domain error: {0}")]
    Domain(String),

    /// A structurally singular configuration (coincident points or a
    /// non-monotone p/q sample) was detected at the given index.
    #[error("singular configuration at index {index}: {message}")]
    Singular { index: usize, message: String },

    /// An iterative solver or a floating-point identity failed beyond
    /// the tolerance it was contracted to meet.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Configuration file problems, reported with a field path.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    /// An objective evaluation failed during an optimization run.
    #[error("simulator failure at iteration {iteration}: {source}")]
    Simulation {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
