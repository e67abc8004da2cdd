use thiserror::Error;

/// Errors raised by tape ops, parameter stores, and checkpoint IO.
#[derive(Debug, Error)]
pub enum DiffError {
    /// Operand shapes are incompatible for the requested op.
    #[error("dimension mismatch in {op}: {detail}")]
    DimensionMismatch { op: &'static str, detail: String },

    /// An op produced a NaN or infinity; the graph is poisoned at this point.
    #[error("non-finite output of {op}")]
    NonFinite { op: &'static str },

    /// Input values violate an op precondition (e.g. non-positive variance).
    #[error("invalid value in {op}: {detail}")]
    InvalidValue { op: &'static str, detail: String },

    /// A tensor from one tape was fed into an op recording on another tape.
    #[error("tensor does not belong to the active tape (op {op})")]
    TapeMismatch { op: &'static str },

    /// Backward was asked to differentiate a value the tape never recorded.
    #[error("value is not attached to the tape: {detail}")]
    Detached { detail: String },

    /// Parameter-store bookkeeping errors (duplicate names, bad flat length).
    #[error("parameter store: {0}")]
    ParameterStore(String),

    /// Checkpoint (de)serialization failures.
    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
