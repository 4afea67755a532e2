use thiserror::Error;

/// Argument errors reported by the snapshot queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Error)]
pub enum QueryError {
    #[error("index is 1-based; 0 is not a valid position")]
    ZeroIndex,
    #[error("empty interval: start is greater than end")]
    InvertedRange,
    #[error("successor count must be at least 1")]
    ZeroCount,
}
