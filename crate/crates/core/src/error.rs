use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Everything that can go wrong inside the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two shapes that must agree do not.
    Shape { op: &'static str, detail: String },
    /// A value outside its documented domain.
    InvalidArgument { what: &'static str, detail: String },
    /// A computation produced NaN or infinity.
    NonFinite { op: &'static str },
    /// A loss passed to `grad` was not a scalar.
    NonScalarLoss { shape: alloc::vec::Vec<usize> },
    /// Inputs are too degenerate to proceed (single class, zero norm, ...).
    Degenerate { what: &'static str, detail: String },
    /// A strategy was asked to run without a dataset it needs.
    MissingDataset { strategy: &'static str, which: &'static str },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    pub(crate) fn invalid(what: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidArgument { what, detail: detail.into() }
    }

    pub(crate) fn degenerate(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Degenerate { what, detail: detail.into() }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { op, detail } => write!(f, "shape mismatch in {op}: {detail}"),
            Error::InvalidArgument { what, detail } => write!(f, "invalid {what}: {detail}"),
            Error::NonFinite { op } => write!(f, "non-finite value produced by {op}"),
            Error::NonScalarLoss { shape } => write!(f, "loss must be a scalar, got shape {shape:?}"),
            Error::Degenerate { what, detail } => write!(f, "degenerate {what}: {detail}"),
            Error::MissingDataset { strategy, which } => {
                write!(f, "strategy `{strategy}` requires a {which} dataset")
            }
        }
    }
}

impl core::error::Error for Error {}
