use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A probability vector or preference matrix failed validation.
    InvalidProbability { what: &'static str, detail: String },
    /// Two inputs disagree on the number of contexts or actions.
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// An index is outside the space it refers to.
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },
    /// An identifier is not part of the space it was looked up in.
    UnknownId { kind: &'static str, id: String },
    /// A strictly positive reference probability was required.
    Support { context: usize, action: usize },
    /// A scalar parameter is outside its admissible range.
    Parameter(String),
    EmptyDataset,
    /// Iterative reward fitting stopped without reaching a finite optimum.
    NotConverged {
        steps: usize,
        grad_norm: f64,
        reward_spread: f64,
    },
    Unsupported(&'static str),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidProbability { what, detail } => write!(f, "invalid {what}: {detail}"),
            Error::Dimension {
                what,
                expected,
                found,
            } => write!(f, "{what}: expected size {expected}, found {found}"),
            Error::Index { what, index, len } => {
                write!(f, "{what} index {index} out of range (size {len})")
            }
            Error::UnknownId { kind, id } => write!(f, "unknown {kind} `{id}`"),
            Error::Support { context, action } => write!(
                f,
                "support violation: reference probability of action {action} in context {context} is zero"
            ),
            Error::Parameter(msg) => f.write_str(msg),
            Error::EmptyDataset => f.write_str("dataset is empty"),
            Error::NotConverged {
                steps,
                grad_norm,
                reward_spread,
            } => write!(
                f,
                "reward fit did not converge after {steps} steps (gradient norm {grad_norm:.3e}, reward spread {reward_spread:.3})"
            ),
            Error::Unsupported(what) => write!(f, "unsupported: {what}"),
        }
    }
}

impl core::error::Error for Error {}
