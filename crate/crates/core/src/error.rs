//! Error type shared by every module of the crate.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("divisor {0} is not invertible")]
    NonInvertibleDivisor(String),

    #[error("cannot combine values of different groups: {0} and {1}")]
    MixedGroup(String, String),

    #[error("operation `{op}` is not defined on {family} values")]
    UnsupportedOperation { op: &'static str, family: &'static str },

    #[error("duplicate coordinate name `{0}`")]
    DuplicateName(String),

    #[error("unknown coordinate `{0}`")]
    UnknownCoordinate(String),

    #[error("coordinate sets overlap on `{0}`")]
    OverlappingCoordinateSets(String),

    #[error("additive structure required on two coordinates")]
    NonAdditiveVariant,

    #[error("support of {atoms} atoms exceeds the cap of {cap}")]
    SupportOverflow { atoms: u128, cap: usize },

    #[error("probability denominators overflow 128 bits")]
    PrecisionOverflow,

    #[error("cross-check mismatch: {first} vs {second}")]
    CrossCheckMismatch { first: f64, second: f64 },

    #[error("support of size {size} exceeds the search guard of {cap}")]
    SupportTooLarge { size: usize, cap: usize },

    #[error("no closed form for {0}")]
    NoClosedForm(String),

    #[error("degenerate sample: all values coincide")]
    DegenerateSample,

    #[error("variable `{0}` is not bound")]
    UnboundVariable(String),

    #[error("division hazard: {fraction} of the divisor samples lie within eps of zero")]
    DivisionHazard { fraction: f64 },

    #[error("joint entropy of {0} has no supported evaluation route")]
    UnsupportedJoint(String),

    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown functional `{name}` at offset {offset}")]
    UnknownFunctional { name: String, offset: usize },

    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("genericity check failed: {0}")]
    GenericityCheckFailed(String),

    #[error("construction check failed: {0}")]
    ConstructionCheckFailed(String),

    #[error("evaluation failed at the initial point: {0}")]
    EvaluationFailure(String),

    #[error("line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("probabilities sum to 1 + ({residual})")]
    NotNormalized { residual: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown record `{0}`")]
    UnknownRecord(String),

    #[error("unknown name `{0}`")]
    UnknownLet(String),
}

impl Error {
    /// True for errors caused by malformed user input rather than by evaluation.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Syntax { .. }
                | Error::UnknownFunctional { .. }
                | Error::Format { .. }
                | Error::NotNormalized { .. }
                | Error::InvalidArgument(_)
                | Error::UnknownRecord(_)
                | Error::UnknownLet(_)
                | Error::UnboundVariable(_)
                | Error::DuplicateName(_)
                | Error::DomainMismatch(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
