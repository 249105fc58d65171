use thiserror::Error;

/// Errors produced by the transport solvers and their supporting modules.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed network, scenario, or prior input.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("dangling endpoint: edge ({from}, {to}) references a node outside 1..={n}")]
    DanglingEndpoint { from: usize, to: usize, n: usize },

    #[error("self-loop on node {node} must have kind storage, got {kind}")]
    NonStorageSelfLoop { node: usize, kind: String },

    #[error("cost model mode mismatch: expected {expected} mode")]
    ModeMismatch { expected: &'static str },

    #[error("infeasible path: no edge ({from}, {to}) at step {step}")]
    InfeasiblePath { from: usize, to: usize, step: usize },

    #[error("empty path space: no admissible path of horizon {horizon} joins the marginal supports")]
    EmptyPathSpace { horizon: usize },

    /// A parameter lies outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("graph is not strongly connected (node {node} unreachable {direction})")]
    NotStronglyConnected { node: usize, direction: &'static str },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// The marginals cannot be joined on the support of the prior.
    #[error("infeasible marginals: {0}")]
    Infeasible(String),

    /// An exact zero showed up where the iteration needs a positive value.
    #[error("positivity violated: {0}")]
    Positivity(String),

    #[error("support violation: {count} path(s) carry mass outside the reference support (first: {first:?})")]
    SupportViolation { count: usize, first: Vec<usize> },

    #[error("{method} did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence {
        method: &'static str,
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for numerical non-convergence, as opposed to modeling errors.
    pub fn is_convergence(&self) -> bool {
        matches!(self, Error::Convergence { .. })
    }

    pub(crate) fn support(paths: Vec<usize>) -> Self {
        let count = paths.len();
        let first = paths.into_iter().take(8).collect();
        Error::SupportViolation { count, first }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
