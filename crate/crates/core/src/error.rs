use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A time or argument outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A path record that violates the representation invariants.
    #[error("invalid path: {0}")]
    InvalidPath(String),

    /// An input that breaks the documented contract of an operation
    /// (non-càdlàg integrand, decreasing integrator, non-adapted process, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Malformed market, strategy, claim or certificate data.
    #[error("{path}: {message}")]
    Spec { path: String, message: String },

    /// No consistent price system with the requested positivity exists.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// The hypotheses of the existence result are not met by the instance.
    #[error("hypothesis not met: {0}")]
    Hypothesis(String),

    /// Utility evaluated outside (0, ∞).
    #[error("liquidation value {value} <= 0 in model {theta}, scenario {scenario}")]
    NonPositiveWealth {
        theta: usize,
        scenario: usize,
        value: f64,
    },

    #[error("linear program: {0}")]
    Lp(String),

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub fn spec(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Spec {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
