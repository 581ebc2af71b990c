use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty measure: at least one atom is required")]
    EmptyMeasure,

    #[error("domain violation: {0}")]
    DomainViolation(String),

    #[error("shape mismatch: {0}")]
    ShapeError(String),

    #[error("numerical blowup at step {step}: {detail}")]
    NumericalBlowup { step: usize, detail: String },

    #[error("unsupported policy form: {0}")]
    UnsupportedPolicyForm(String),

    #[error("syntax error at line {line}, column {column}: expected {}, found {found}", .expected.join(" or "))]
    SyntaxError {
        line: usize,
        column: usize,
        expected: Vec<String>,
        found: String,
    },

    #[error("unknown variable `{name}` at line {line}, column {column}")]
    UnknownVariable {
        name: String,
        line: usize,
        column: usize,
    },

    #[error("unknown function `{name}` at line {line}, column {column}")]
    UnknownFunction {
        name: String,
        line: usize,
        column: usize,
    },

    #[error("{assumption} bound violated: {detail}")]
    AssumptionViolation {
        assumption: &'static str,
        detail: String,
    },

    #[error("unknown search method `{0}`")]
    UnknownMethod(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::DomainViolation(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeError(msg.into())
    }

    /// Reattach a step index to a blowup raised outside the time loop.
    pub fn at_step(self, step: usize) -> Self {
        match self {
            Error::NumericalBlowup { detail, .. } => Error::NumericalBlowup { step, detail },
            other => other,
        }
    }

    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NumericalBlowup { .. })
    }
}
