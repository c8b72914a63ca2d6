use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by every stage of the library.
///
/// [`Error::is_input_error`] separates I/O and parse failures from domain
/// and validation failures; the CLI maps them to distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("duplicate identifier `{0}`")]
    DuplicateId(String),

    #[error("unknown identifier `{0}`")]
    UnknownId(String),

    #[error("empty identifier")]
    EmptyId,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("taxonomy: {0}")]
    Taxonomy(String),

    #[error("unrelatable novel category `{0}`")]
    UnrelatableCategory(String),

    #[error("degenerate AUC: need at least one positive and one negative")]
    DegenerateAuc,

    #[error("category `{0}` has no positive instances")]
    NoPositives(String),

    #[error("closed form requires unclamped seeds")]
    ClampedClosedForm,

    #[error("isolated nodes in similarity graph: {}", .0.join(", "))]
    IsolatedNodes(Vec<String>),

    #[error("linear system is singular")]
    Singular,

    #[error("infeasible corpus plan: {0}")]
    InfeasiblePlan(String),

    #[error("signature space too small: 2^{attributes} < {categories} categories")]
    SignatureSpace { attributes: usize, categories: usize },
}

impl Error {
    pub fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by unreadable or malformed input files.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Parse { .. })
    }
}
