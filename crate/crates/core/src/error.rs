use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A caller broke an operation's precondition (shape mismatch, non-finite input, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Invalid user-facing configuration; `key` names the offending parameter.
    #[error("invalid configuration `{key}`: {message}")]
    Config { key: String, message: String },

    /// An iterative solver stopped before reaching its tolerance.
    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// A simulation step failed; carries the step index and a state dump.
    #[error("simulation aborted at step {step}: {source}")]
    Simulation {
        step: usize,
        #[source]
        source: Box<Error>,
        dump: String,
    },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// True for failures of numerical routines, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Convergence { .. } | Error::Simulation { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
