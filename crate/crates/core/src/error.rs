use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("inconsistent tableau: {0}")]
    Tableau(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("solver diverged at iteration {iteration}: non-finite residual")]
    Diverged { iteration: usize },

    #[error("singular linear system (pivot ratio {condition:e})")]
    Singular { condition: f64 },

    #[error("conservation law not applicable: {0}")]
    NotApplicable(String),

    #[error("unknown {kind} `{name}` (available: {available})")]
    UnknownName {
        kind: &'static str,
        name: String,
        available: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
