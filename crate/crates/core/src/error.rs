//! Error type shared across the calculus.

use crate::exponent::ExpPair;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CalcError {
    #[error("sector sign undefined: {pair} has non-integral difference n - nbar")]
    NonIntegralDifference { pair: ExpPair },

    #[error("product of distributions with conflicting sector tags ({0} vs {1})")]
    ConflictingSectors(String, String),

    #[error("coefficient at {key} requires infinitely many terms inside the window")]
    InfiniteCoefficientSum { key: String },

    #[error("no finite witness for diagonal evaluation at {key}; operand is not presented as monomial times power series")]
    NotInBracketSpace { key: String },

    #[error("fields {a} and {b} are not local within the window: {detail}")]
    NotLocal { a: String, b: String, detail: String },

    #[error("window too small: {0}")]
    WindowTooSmall(String),

    #[error("generators do not span the truncated space: {0}")]
    NotSpanning(String),

    #[error("invalid algebra specification: {0}")]
    InvalidSpec(String),

    #[error("internal inconsistency (certified hypotheses violated): {0}")]
    Inconsistent(String),

    #[error("unknown field name `{0}`")]
    UnknownField(String),
}

pub type Result<T> = std::result::Result<T, CalcError>;
