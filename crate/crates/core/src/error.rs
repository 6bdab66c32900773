use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("obj parse error at line {line}: {message}")]
    Obj { line: usize, message: String },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("node count {nodes} exceeds the all-pairs guard of {limit}")]
    TooLarge { nodes: usize, limit: usize },

    #[error("annotation schema error: {0}")]
    Schema(String),

    #[error("unknown model id `{0}`")]
    UnknownModel(String),

    #[error("annotation on model `{model}` lies {distance:.4} from the nearest cloud point (limit {limit})")]
    Attachment {
        model: String,
        distance: f64,
        limit: f64,
    },

    #[error("correspondence sets {a} and {b} share no model")]
    NoSharedModel { a: u32, b: u32 },

    #[error("unknown shape family `{0}` (valid: tables, rockets, mugs)")]
    UnknownFamily(String),

    #[error("embedding error: {0}")]
    Embedding(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("model file error: {0}")]
    ModelFormat(String),

    #[error("registration error: {0}")]
    Registration(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable short name for machine-readable error reporting.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Obj { .. } => "obj",
            Error::InvalidMesh(_) => "invalid_mesh",
            Error::Degenerate(_) => "degenerate",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::TooLarge { .. } => "too_large",
            Error::Schema(_) => "schema",
            Error::UnknownModel(_) => "unknown_model",
            Error::Attachment { .. } => "attachment",
            Error::NoSharedModel { .. } => "no_shared_model",
            Error::UnknownFamily(_) => "unknown_family",
            Error::Embedding(_) => "embedding",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::ModelFormat(_) => "model_format",
            Error::Registration(_) => "registration",
            Error::Json(_) => "json",
        }
    }
}
