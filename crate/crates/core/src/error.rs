use alloc::string::String;

use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-positive or non-finite price {value} at day {day}, index {index}")]
    InvalidPrice { day: usize, index: usize, value: f64 },

    #[error("non-finite value in {what} at row {row}, column {col}")]
    NonFinite { what: &'static str, row: usize, col: usize },

    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("day {day} is missing its boundary entry at index {index}")]
    MissingBoundary { day: usize, index: usize },

    #[error("{what}: need at least {need}, got {got}")]
    InsufficientData {
        what: &'static str,
        need: usize,
        got: usize,
    },

    #[error("singular least-squares design (condition number {condition:e})")]
    SingularDesign { condition: f64 },

    #[error("rank-deficient observation matrix; use a positive shrinkage parameter")]
    RankDeficient,

    #[error("score VAR is not stationary (companion spectral radius {spectral_radius:.6})")]
    NonStationary { spectral_radius: f64 },

    #[error("moving-average expansion did not converge within {max_terms} terms")]
    PsiNotConverged { max_terms: usize },

    #[error("no identifiable VAR order up to {p_max}")]
    NoIdentifiableOrder { p_max: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// Whether the failure is numerical (as opposed to bad input data or configuration).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularDesign { .. }
                | Error::RankDeficient
                | Error::NonStationary { .. }
                | Error::PsiNotConverged { .. }
                | Error::NoIdentifiableOrder { .. }
        )
    }
}
