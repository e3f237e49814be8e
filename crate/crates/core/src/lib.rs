//! Decentralized proximal bundle method (DPBM) over message-passing networks.
//!
//! Each node holds a composite objective `phi_i = f_i + h_i` (smooth loss plus
//! proximable regularizer) and repeatedly minimizes a piecewise-linear bundle
//! model of `f_i` plus a proximal term and a consensus penalty built from
//! neighbor iterates. The crate provides:
//!
//! - [`problem`]: losses, regularizers, datasets, batch sampling;
//! - [`graph`]: topologies and symmetric doubly stochastic averaging matrices;
//! - [`bundle`]: cut storage and the four model policies;
//! - [`subproblem`]: the simplex-constrained dual solver for the per-node step;
//! - [`algorithms`]: node update rules, step-size policies, Prox-DGD baseline;
//! - [`sim`]: deterministic asynchronous execution (schedules, traces) and a
//!   thread-per-node runtime;
//! - [`metrics`]: reference solvers, error series, rate-envelope checks;
//! - [`verify`]: seeded property suites exposed to the CLI.

pub mod algorithms;
pub mod bundle;
pub mod graph;
pub mod metrics;
pub mod problem;
pub mod sim;
pub mod subproblem;
pub mod synthetic;
pub mod verify;

pub use nalgebra::{DMatrix, DVector};

/// Dense column vector used throughout the crate.
pub type Vector = DVector<f64>;
/// Dense matrix used throughout the crate.
pub type Matrix = DMatrix<f64>;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid batch: {0}")]
    InvalidBatch(String),

    #[error("step parameter must be positive, got {0}")]
    NonPositiveStep(f64),

    #[error("invalid regularizer: {0}")]
    InvalidRegularizer(String),

    #[error("graph error: {0}")]
    Graph(String),

    #[error("averaging matrix invalid: {0}")]
    InvalidAveraging(String),

    #[error("step-size for node {node} violates positivity: gamma={gamma}, bound={bound}")]
    HatWeightPositivity { node: usize, gamma: f64, bound: f64 },

    #[error("bundle model is empty")]
    EmptyModel,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("model policy mismatch: {0}")]
    PolicyMismatch(String),

    #[error("floor {floor} exceeds function value {value}")]
    FloorAboveValue { floor: f64, value: f64 },

    #[error("minorant violated: model value {model} above function value {value}")]
    MinorantViolation { model: f64, value: f64 },

    #[error("back-tracking attempt cap exceeded at node {node} (cap {cap})")]
    BacktrackingCap { node: usize, cap: usize },

    #[error("invalid step-size configuration: {0}")]
    InvalidStepConfig(String),

    #[error("node {node} update failed at iteration {iteration}: {source}")]
    NodeUpdate {
        node: usize,
        iteration: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("schedule horizon {horizon} shorter than iteration budget {budget}")]
    HorizonTooShort { horizon: usize, budget: usize },

    #[error("reference solver did not reach tolerance {tol} within {max_iter} iterations (residual {residual})")]
    SolverCap { tol: f64, residual: f64, max_iter: usize },

    #[error("trace format error: {0}")]
    TraceFormat(String),

    #[error("worker for node {0} panicked")]
    WorkerPanic(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
