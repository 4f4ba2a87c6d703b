use thiserror::Error;

/// Errors raised by the numeric engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("vector norm {norm:e} is below the zero-norm threshold")]
    ZeroNorm { norm: f64 },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("empty vector or matrix")]
    Empty,

    #[error("normal equations are numerically singular (rank-deficient data?)")]
    SingularSystem,

    #[error("text-induced direction is degenerate (norm {norm:e})")]
    DegenerateDirection { norm: f64 },

    #[error("class index {class} out of range for {num_classes} classes")]
    InvalidClass { class: usize, num_classes: usize },

    #[error("concept bank is empty")]
    EmptyBank,

    #[error("every candidate in the concept bank has a degenerate direction")]
    AllDegenerate,

    #[error("requested {k} entries but only {available} are available")]
    KTooLarge { k: usize, available: usize },

    #[error("no items to aggregate")]
    EmptyInput,

    #[error("embedding of concept {index} has norm {norm}, expected unit norm")]
    NotUnitNorm { index: usize, norm: f64 },

    #[error("duplicate concept text {0:?} (case-insensitive)")]
    DuplicateConcept(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// Whether the error reflects malformed or inconsistent input, as opposed
    /// to a numeric failure on otherwise valid input.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::DimMismatch { .. }
                | Error::NonFinite { .. }
                | Error::Empty
                | Error::InvalidClass { .. }
                | Error::EmptyBank
                | Error::KTooLarge { .. }
                | Error::EmptyInput
                | Error::NotUnitNorm { .. }
                | Error::DuplicateConcept(_)
                | Error::InvalidConfig(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
