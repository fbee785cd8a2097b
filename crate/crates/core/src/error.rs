use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("index {index} out of range for {what} (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("nonpositive radicand Phi(w) + C0 = {radicand:e} at w = {w:e} (C0 = {c0:e})")]
    NonpositiveRadicand { w: f64, c0: f64, radicand: f64 },

    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },

    #[error("invalid tableau: {0}")]
    InvalidTableau(String),

    #[error("tableau `{name}` is not algebraically stable ({reason}); pass the override flag to run it anyway")]
    UncertifiedTableau { name: String, reason: String },

    #[error("linear solve failed: {reason} (relative residual {residual:e})")]
    SolverFailure { reason: String, residual: f64 },

    #[error("interpolation nodes coincide at t = {t} with different data")]
    CoincidentNodes { t: f64 },

    #[error("incompatible operands: {0}")]
    Incompatible(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
