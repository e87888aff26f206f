use std::path::PathBuf;

use thiserror::Error;

use crate::solver::SolverTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by callers that map failures onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("A is rank deficient (sigma_min = {sigma_min:e}, sigma_max = {sigma_max:e})")]
    RankDeficient { sigma_min: f64, sigma_max: f64 },
    #[error("assumption failed: {0}")]
    Assumption(String),
    #[error("Hessian is not positive definite (lambda_min = {lambda_min:e})")]
    NotPositiveDefinite { lambda_min: f64 },
    #[error("diagonal weight D[{index}] = {value:e} is not positive")]
    NonPositiveDiagonal { index: usize, value: f64 },
    #[error("sketched Hessian is singular with {nnz} sampled rows; increase the sample budget")]
    SingularSketch { nnz: usize },
    #[error("matrix is singular: {0}")]
    Singular(&'static str),
    #[error("descent oracle stopped at gradient norm {grad_norm:e} after {iterations} iterations")]
    OracleFailure { grad_norm: f64, iterations: usize },
    #[error("solver diverged at iteration {}: loss grew more than 5x", trace.records.len().saturating_sub(1))]
    Diverged { trace: Box<SolverTrace> },
    #[error("iteration cap of {cap} reached before the stopping rule was met")]
    IterationCap { cap: usize, trace: Box<SolverTrace> },
    #[error("{}", parse_message(*line, msg))]
    Parse { line: usize, msg: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },
}

fn parse_message(line: usize, msg: &str) -> String {
    if line == 0 {
        msg.to_string()
    } else {
        format!("line {line}: {msg}")
    }
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Dimension(_)
            | Error::NonFinite(_)
            | Error::InvalidParameter(_)
            | Error::RankDeficient { .. }
            | Error::Assumption(_)
            | Error::Parse { .. } => ErrorKind::Validation,
            Error::Io { .. } => ErrorKind::Io,
            Error::File { source, .. } => source.kind(),
            _ => ErrorKind::Numerical,
        }
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }

    /// Wraps the error with the file it came from.
    pub fn in_file(self, path: impl Into<PathBuf>) -> Self {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }
}
