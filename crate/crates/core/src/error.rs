use core::fmt;

use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A row expected to lie on the unit sphere does not.
    NonUnitRow { row: usize, norm: f64 },
    /// A row with zero (or non-finite) norm cannot be projected onto the sphere.
    ZeroRow { row: usize },
    /// Shapes of two inputs disagree.
    Shape { expected: String, found: String },
    /// An index is outside `0..len`.
    IndexOutOfRange { index: usize, len: usize },
    /// Every label in the batch is identical, so an anchor has no noise partners.
    EmptyNoise { anchor: usize },
    /// An anchor has no same-class partner (strict aggregation only).
    EmptyPositives { anchor: usize },
    /// Instance-discrimination batches need exactly one augmented partner per anchor.
    NotInstancePaired { anchor: usize, positives: usize },
    /// A value violated a documented precondition.
    InvalidParameter { name: &'static str, reason: String },
    /// A target-density point received zero (or underflowed) noise density.
    SupportViolation { index: usize },
    /// Combinatorial enumeration refused because the problem is too large.
    TooLarge { n: usize, limit: usize },
    /// Non-finite loss encountered during optimisation.
    NonFinite { epoch: usize, batch: usize, max_logit: f64 },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NonUnitRow { row, norm } => {
                write!(f, "row {row} is not unit-norm (norm = {norm})")
            }
            Error::ZeroRow { row } => write!(f, "row {row} has zero norm and cannot be projected"),
            Error::Shape { expected, found } => {
                write!(f, "shape mismatch: expected {expected}, found {found}")
            }
            Error::IndexOutOfRange { index, len } => {
                write!(f, "index {index} out of range for length {len}")
            }
            Error::EmptyNoise { anchor } => write!(
                f,
                "degenerate batch: anchor {anchor} has no noise partners (all labels equal)"
            ),
            Error::EmptyPositives { anchor } => {
                write!(f, "anchor {anchor} has no same-class partner")
            }
            Error::NotInstancePaired { anchor, positives } => write!(
                f,
                "instance discrimination needs exactly one partner per anchor; anchor {anchor} has {positives}"
            ),
            Error::InvalidParameter { name, reason } => write!(f, "invalid {name}: {reason}"),
            Error::SupportViolation { index } => write!(
                f,
                "support violation: noise density is zero at sample {index} where the target density is not"
            ),
            Error::TooLarge { n, limit } => write!(
                f,
                "n = {n} exceeds the enumeration limit of {limit}; use the closed-form posterior instead"
            ),
            Error::NonFinite {
                epoch,
                batch,
                max_logit,
            } => write!(
                f,
                "non-finite loss at epoch {epoch}, batch {batch} (max logit {max_logit})"
            ),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
