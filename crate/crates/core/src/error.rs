use std::fmt;

use thiserror::Error;

use crate::model::expr::DomainFault;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}, column {column}: undeclared variable `{name}`")]
    UndeclaredVariable {
        line: usize,
        column: usize,
        name: String,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("unknown builtin model `{0}`")]
    UnknownBuiltin(String),
}

/// Which expression of the model an evaluation error came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExprRef {
    /// `f<i>` (zero-based).
    Dynamics(usize),
    /// `h<j>` (zero-based).
    Output(usize),
}

impl fmt::Display for ExprRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExprRef::Dynamics(i) => write!(f, "f{}", i + 1),
            ExprRef::Output(j) => write!(f, "h{}", j + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("{expr}: {fault}")]
    Domain { expr: ExprRef, fault: DomainFault },
    #[error("argument `{block}` has length {got}, expected {expected}")]
    Arity {
        block: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("sampling period must be positive, got {0}")]
    NonPositiveStep(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("grid line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("grid has {got} axes, model needs {expected}")]
    AxisCount { expected: usize, got: usize },
    #[error("axis {axis}: {message}")]
    InvalidAxis { axis: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CertError {
    #[error("matrix `{0}` has non-finite entries")]
    NonFinite(&'static str),
    #[error("matrix `{name}` is not positive definite (lambda_min = {lambda_min:e})")]
    NotPositiveDefinite { name: &'static str, lambda_min: f64 },
    #[error("factor kappa must be positive, got {0}")]
    NonPositiveKappa(f64),
    #[error("factor eta must lie in (0,1), got {0}")]
    EtaOutOfRange(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("malformed certificate: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransferError {
    #[error("sampling period {tau} is outside (0, tau1) with tau1 = {tau1} (binding: {binding})")]
    TauOutOfRange {
        tau: f64,
        tau1: f64,
        binding: &'static str,
    },
    #[error("invalid consistency constants: {0}")]
    InvalidConstants(String),
    #[error(transparent)]
    Cert(#[from] CertError),
}

/// Crate-wide error for operations that cross module boundaries.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Cert(#[from] CertError),
    #[error(transparent)]
    Transfer(#[from] TransferError),
    #[error("{0}")]
    Invalid(String),
    #[error("i/o error on `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
