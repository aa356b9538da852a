use thiserror::Error;

use crate::hashing::Digest64;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("slice stream out of order: expected index {expected}, got {got}")]
    SliceOutOfOrder { expected: u32, got: u32 },

    #[error("slice size changed mid-stream: expected {expected} bits, got {got}")]
    SliceSizeMismatch { expected: u64, got: u64 },

    #[error("cell stream out of order: expected index {expected}, got {got}")]
    CellOutOfOrder { expected: u64, got: u64 },

    /// The decoder peeled the same digest twice. Only possible under a digest
    /// or check-hash collision.
    #[error("digest {digest:?} peeled twice (signs {first:+} then {second:+}); hash collision suspected")]
    InconsistentPeel { digest: Digest64, first: i64, second: i64 },

    #[error("decoded digest {0:?} has no matching local element")]
    UnknownDigest(Digest64),

    #[error("{stream} exceeded the guard cap of {cap} items")]
    StreamCapExceeded { stream: &'static str, cap: u64 },

    #[error("malformed frame: {0}")]
    Malformed(String),

    #[error("reconciliation produced wrong sets: {0}")]
    Verification(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
