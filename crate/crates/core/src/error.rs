use std::fmt;

/// Outcome record of a failed Newton solve.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonFailure {
    pub residual_history: Vec<f64>,
    pub iterations: usize,
}

impl fmt::Display for NewtonFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let last = self.residual_history.last().copied().unwrap_or(f64::NAN);
        write!(
            f,
            "{} iterations, last residual {:.3e}",
            self.iterations, last
        )
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("factorization failed at pivot {pivot} of {dimension}: {reason}")]
    Factorization {
        pivot: usize,
        dimension: usize,
        reason: String,
    },

    #[error("Newton iteration did not converge ({0})")]
    NonConvergence(NewtonFailure),

    #[error("step length fell below tau_min = {tau_min:e} after {attempts} attempts")]
    Stagnation {
        tau_min: f64,
        attempts: usize,
        history: Vec<crate::optimizer::IterationRecord>,
    },

    #[error("phase {phase} failed: {source}")]
    Phase {
        phase: usize,
        history: Vec<crate::optimizer::IterationRecord>,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    /// True for errors produced by the numerical kernels rather than by bad input or I/O.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Factorization { .. } | Error::NonConvergence(_) | Error::Stagnation { .. } => {
                true
            }
            Error::Phase { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
