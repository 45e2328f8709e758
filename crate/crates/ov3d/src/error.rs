use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("invalid 2D box: {0}")]
    InvalidBox2d(String),

    #[error("invalid 3D box: {0}")]
    InvalidBox3d(String),

    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("template must contain the {{class}} placeholder exactly once: {0:?}")]
    BadTemplate(String),

    #[error("no features for category {0:?}")]
    UnknownCategory(String),

    #[error("embedding id not found: {0}")]
    MissingId(String),

    #[error("dimension mismatch for {id:?}: expected {expected}, got {got}")]
    DimensionMismatch { id: String, expected: usize, got: usize },

    #[error("non-finite value in embedding {id:?} at index {index}")]
    BadVector { id: String, index: usize },

    #[error("duplicate id in manifest: {0:?}")]
    DuplicateId(String),

    #[error("empty positive set for anchor {0}")]
    EmptyPositives(usize),

    #[error("positive index {index} out of range for batch of {len}")]
    PositiveOutOfRange { index: usize, len: usize },

    #[error("temperature must be positive, got {0}")]
    BadTemperature(f64),

    #[error("schema error in {path}: {message}")]
    Schema { path: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("embedding provider error: {0}")]
    Provider(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema { path: path.into(), message: message.into() }
    }
}
