use thiserror::Error;

/// Errors raised by black-box models, in-process or across the bridge.
#[derive(Debug, Error)]
pub enum BlackBoxError {
    #[error("expected {expected} features, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// The peer answered a request with `{"id": k, "error": msg}`.
    #[error("peer error for request {id}: {message}")]
    Peer { id: u64, message: String },

    #[error("unsupported bridge protocol version {found} (expected {expected})")]
    VersionMismatch { found: i64, expected: i64 },

    #[error("malformed bridge message: {0}")]
    Malformed(String),

    #[error("no response from peer within {0:?}")]
    Timeout(std::time::Duration),

    #[error("bridge peer closed the connection")]
    Disconnected,

    #[error("unknown class label {0:?}")]
    UnknownClass(String),

    #[error("bridge i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("expected dimension {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("input kind mismatch: {0}")]
    KindMismatch(String),

    #[error("non-finite value at position {0}")]
    NonFinite(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dataset is empty")]
    EmptyDataset,

    /// No training point lies within `r` of the explained instance.
    #[error("no training points within r = {r}; nearest is at distance {min_distance}")]
    NeighborhoodEmpty { r: f64, min_distance: f64 },

    #[error("token {0:?} is not in the embedding vocabulary")]
    OutOfVocabulary(String),

    #[error("sample {index} differs from the explained instance in {changed} features (expected exactly 1)")]
    IncompatiblePerturbation { index: usize, changed: usize },

    #[error("black box failed on batch {batch}: {source}")]
    BlackBox {
        batch: usize,
        #[source]
        source: BlackBoxError,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
