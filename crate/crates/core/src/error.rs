use thiserror::Error;

/// Failures while reading or validating a model definition.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}: reference to undeclared identifier `{name}`")]
    Undeclared { line: usize, name: String },
    #[error("line {line}: duplicate right-hand side for state `{state}`")]
    DuplicateRhs { line: usize, state: String },
    #[error("state `{state}` has no right-hand side")]
    MissingRhs { state: String },
    #[error("line {line}: identifier `{name}` declared twice")]
    DuplicateName { line: usize, name: String },
    #[error("model declares no states")]
    NoStates,
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
}

/// Failures of the ODE integrator. Each carries the time at which it stopped.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrationError {
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("non-finite right-hand side at t = {t}")]
    NonFinite { t: f64 },
    #[error("maximum number of steps ({max_steps}) exceeded at t = {t}")]
    MaxSteps { t: f64, max_steps: usize },
    #[error("invalid integration request: {0}")]
    InvalidInput(String),
}

impl IntegrationError {
    pub fn time(&self) -> Option<f64> {
        match self {
            IntegrationError::StepUnderflow { t }
            | IntegrationError::NonFinite { t }
            | IntegrationError::MaxSteps { t, .. } => Some(*t),
            IntegrationError::InvalidInput(_) => None,
        }
    }
}

/// Failures of likelihood evaluation and maximum-likelihood fitting.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error(transparent)]
    Integration(#[from] IntegrationError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("degenerate fit: noise variance of state `{state}` is {sigma2:e} (perfect fit)")]
    DegenerateVariance { state: String, sigma2: f64 },
    #[error("no starting point could be evaluated")]
    NoFeasibleStart,
}

/// Failures of the pairwise test computations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TestError {
    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("log-density vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("regularized variance is not positive ({0:e}); both log-density sequences are constant")]
    DegenerateVariance(f64),
    #[error("significance level must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("regularization parameter must be non-negative, got {0}")]
    InvalidH(f64),
    #[error("sum of log-density variances is zero")]
    ZeroVarianceSum,
    #[error("Hessian of model {0} cannot be inverted")]
    SingularHessian(char),
}

/// Failures of the Monte Carlo drivers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error("invalid study configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("quadrature did not converge (estimate {estimate}, error {error:e})")]
    Quadrature { estimate: f64, error: f64 },
}

/// Failures when assembling a tournament.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TournamentError {
    #[error("a tournament needs at least two models, got {0}")]
    TooFewModels(usize),
    #[error("{models} models but {inits} starting vectors")]
    InitCount { models: usize, inits: usize },
    #[error("fewer than two models could be fitted")]
    TooFewFitted,
    #[error(transparent)]
    Test(#[from] TestError),
}
