use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed hex literal `{0}`")]
    ParseHex(String),
    #[error("operand `{literal}` does not fit in {width} bits")]
    WidthMismatch { literal: String, width: u32 },
    #[error("unknown format or mode `{0}`")]
    UnknownFormat(String),
    #[error("guard bits {0} outside supported range 0..={max}", max = crate::datapath::MAX_GUARD_BITS)]
    GuardBits(u32),
    #[error("exhaustive domain of {size} triples exceeds the limit of {limit}")]
    DomainTooLarge { size: u64, limit: u64 },
    #[error("line {line}: {reason}")]
    MalformedInput { line: usize, reason: String },
    #[error("a transaction was already issued in cycle {0}")]
    IssueConflict(u64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
