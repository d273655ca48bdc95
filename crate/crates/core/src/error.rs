use thiserror::Error;

/// Errors raised by the solvers and the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter violates its documented invariant.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// The explicit scheme loses monotonicity unless `h < 1/(lambda_a + lambda_b)`.
    #[error(
        "time step h = {h} violates the monotonicity condition h < 1/(lambda_a + lambda_b) = {limit}; \
         increase n_t to at least {min_steps}"
    )]
    Cfl { h: f64, limit: f64, min_steps: usize },

    /// The Euler thinning of the simulator is only valid for small event probabilities.
    #[error("Euler step dt = {dt} gives (K + lambda_a + lambda_b) * dt = {load}, above the limit 0.2; reduce dt")]
    Thinning { dt: f64, load: f64 },

    /// A value layer handed to the scheme contains NaN or infinity.
    #[error("non-finite value {value} in value layer at inventory index {index}")]
    NonFinite { index: i64, value: f64 },

    /// The volume law handed to the discretizer does not define a probability distribution.
    #[error("invalid volume law: {0}")]
    InvalidLaw(String),

    /// The policy table handed to the simulator cannot serve the requested states.
    #[error("policy table does not cover the simulation: {0}")]
    PolicyCoverage(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
