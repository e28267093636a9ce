use alloc::string::String;
use core::fmt;

/// Errors raised by the tracking engine.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two operands had incompatible shapes.
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    /// A matrix or vector carried a NaN or infinite entry.
    NonFinite { op: &'static str },
    /// A probability row did not sum to one (or had a negative entry).
    Probability { op: &'static str, row: usize, sum: f64 },
    /// Index outside the valid ID range.
    InvalidId { id: usize, limit: usize },
    /// More distinct instances than the identity capacity allows.
    Capacity { needed: usize, available: usize },
    /// Lengths of parallel inputs disagree.
    Length {
        op: &'static str,
        expected: usize,
        found: usize,
    },
    /// Configuration is out of range or cannot be satisfied.
    Config(String),
    /// A detector returned output that breaks the detection contract.
    Detector { frame: usize, reason: String },
    /// Training produced a non-finite loss.
    Divergence { step: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { op, left, right } => write!(
                f,
                "{op}: shape mismatch {}x{} vs {}x{}",
                left.0, left.1, right.0, right.1
            ),
            Error::NonFinite { op } => write!(f, "{op}: non-finite value"),
            Error::Probability { op, row, sum } => {
                write!(f, "{op}: row {row} is not a probability vector (sum {sum})")
            }
            Error::InvalidId { id, limit } => write!(f, "id {id} out of range (limit {limit})"),
            Error::Capacity { needed, available } => write!(
                f,
                "capacity exceeded: {needed} instances but only {available} identities"
            ),
            Error::Length {
                op,
                expected,
                found,
            } => write!(f, "{op}: expected length {expected}, found {found}"),
            Error::Config(msg) => write!(f, "invalid configuration: {msg}"),
            Error::Detector { frame, reason } => {
                write!(f, "detector contract violated at frame {frame}: {reason}")
            }
            Error::Divergence { step } => write!(f, "training diverged at step {step}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
