//! Error type shared across the crate.

use thiserror::Error;

/// Convenience alias used by every fallible operation in this crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input: bad CSV/JSON shape, unparseable numbers, empty tables.
    #[error("parse error: {0}")]
    Parse(String),

    /// A numeric value is outside its documented range.
    #[error("domain error: {0}")]
    Domain(String),

    /// The same identifier appears twice where identifiers must be unique.
    #[error("duplicate identifier `{0}`")]
    DuplicateId(String),

    /// An index is out of bounds for the structure it addresses.
    #[error("{what} index {index} out of bounds (len {len})")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },

    /// Two structures that must agree on a dimension do not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Two feature tables carry different feature name sequences.
    #[error("feature name mismatch: {0}")]
    FeatureNameMismatch(String),

    /// The minority class is too small for the requested resampling.
    #[error("insufficient minority class: {0}")]
    InsufficientMinority(String),

    /// Training data holds a single class; a classifier cannot be fit.
    #[error("training data contains a single label class")]
    SingleClass,

    /// A feature value is NaN or infinite where finite values are required.
    #[error("non-finite feature value: {0}")]
    NonFiniteFeature(String),

    /// A unit identifier does not exist in the coverage matrix.
    #[error("unknown unit id `{0}`")]
    UnknownUnit(String),

    /// A test identifier does not exist in the suite under evaluation.
    #[error("unknown test id `{0}`")]
    UnknownTest(String),

    /// Requested cluster count is zero or exceeds the number of points.
    #[error("invalid cluster count: {0}")]
    InvalidK(String),

    /// Fault-proneness scores are required by the selected mode but absent.
    #[error("fault-proneness scores required: {0}")]
    MissingFaultProneness(String),

    /// Per-cluster orders do not form a partition of the test suite.
    #[error("inconsistent internal orders: {0}")]
    InconsistentOrderSet(String),

    /// A fault in the outcome record is detected by no test in the order.
    #[error("fault `{0}` is not detected by any test in the order")]
    UndetectedFault(String),

    /// Too few usable pairs for the requested statistical test.
    #[error("insufficient pairs: {0}")]
    InsufficientPairs(String),

    /// A (strategy, version) cell expected by report aggregation is absent.
    #[error("missing report cell: {0}")]
    MissingCell(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
