use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input rejected before any numerics ran.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Configuration schema or value violation, located by JSON pointer.
    #[error("config error at {pointer}: {message}")]
    Config { pointer: String, message: String },

    #[error("{what} query {value} outside sampled domain [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("integrator step size underflow at z = {z} km (h = {step:e})")]
    Stiffness { z: f64, step: f64 },

    #[error("boundary-value shooting did not converge after {iterations} iterations (residual {residual:e})")]
    BvpNonConvergence { iterations: usize, residual: f64 },

    #[error("quadrature did not reach target: achieved relative error {achieved:e}, target {target:e}")]
    Quadrature { achieved: f64, target: f64 },

    #[error("net gain undefined for channel {channel}: zero launch power")]
    UndefinedGain { channel: usize },

    #[error("optimizer failure: {0}")]
    Optimizer(String),

    #[error("span {span}: {source}")]
    Span {
        span: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn config(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            pointer: pointer.into(),
            message: message.into(),
        }
    }

    /// True for failures of the numerical machinery, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Stiffness { .. }
            | Error::BvpNonConvergence { .. }
            | Error::Quadrature { .. }
            | Error::UndefinedGain { .. }
            | Error::Optimizer(_) => true,
            Error::Span { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
