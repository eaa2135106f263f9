//! Crate-wide error type and exit-code mapping.

/// Errors produced across the device model, fitting, simulation and I/O layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A value is outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Configuration or input failed validation.
    #[error("validation error: {0}")]
    Validation(String),

    /// A fit has no solution for the given anchors.
    #[error("infeasible fit: {0}")]
    Infeasible(String),

    /// A matrix expected to be unitary is not.
    #[error("matrix is not unitary: ||U'U - I||_inf = {deviation:.3e} (tolerance {tolerance:.3e})")]
    NonUnitary { deviation: f64, tolerance: f64 },

    /// Malformed input file.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code contract: 2 validation/domain, 3 infeasible fit, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::Validation(_) | Error::NonUnitary { .. } => 2,
            Error::Infeasible(_) => 3,
            Error::Parse { .. } | Error::Io(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
