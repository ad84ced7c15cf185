use std::io;

use thiserror::Error;

/// Errors produced by the codecs, the block layer and the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("attempted to invert the zero element")]
    InversionOfZero,

    #[error("duplicate evaluation point {0:#04x}")]
    DuplicateEvaluationPoint(u8),

    #[error("more than 256 evaluation points requested ({0})")]
    TooManyPoints(usize),

    #[error("matrix is singular")]
    SingularMatrix,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid code parameters: {0}")]
    InvalidParams(String),

    #[error("insufficient symbols: need {needed}, have {available}")]
    InsufficientSymbols { needed: usize, available: usize },

    #[error("supplied symbols are not consistent with any codeword")]
    CorruptStripe,

    #[error("unrecoverable: {alive} alive units, {needed} required")]
    Unrecoverable { alive: usize, needed: usize },

    #[error("code has r = {0}; piggybacking needs at least two parities")]
    NoPiggybackParity(usize),

    #[error("invalid group partition: {0}")]
    InvalidPartition(String),

    #[error("repair plan is inconsistent: {0}")]
    InvalidPlan(String),

    #[error("repaired block {index} failed checksum (expected {expected:#010x}, got {actual:#010x})")]
    CorruptSource { index: usize, expected: u32, actual: u32 },

    #[error("placement infeasible: {racks} racks for stripes of width {width}")]
    PlacementInfeasible { racks: usize, width: usize },

    #[error("node capacity exceeded: {0}")]
    CapacityExceeded(String),

    #[error("trace parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("trace inconsistent for node {node} at line {line}: {message}")]
    TraceInconsistent { node: u32, line: usize, message: String },

    #[error("unknown node {0}")]
    UnknownNode(u32),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
