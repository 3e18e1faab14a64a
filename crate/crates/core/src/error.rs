use thiserror::Error;

use crate::graph::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("axis {axis} out of range for tensor of rank {rank}")]
    AxisOutOfRange { axis: usize, rank: usize },

    #[error("matrix is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("matrix is not positive semi-definite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("{method} did not converge after {iterations} iterations")]
    NoConvergence { method: &'static str, iterations: usize },

    #[error("dominant eigenvalue estimate is not real: {re:e} + {im:e}i")]
    ComplexDominantEigenvalue { re: f64, im: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("graph has {} structural violation(s): {}", .0.len(), join_violations(.0))]
    Structure(Vec<Violation>),

    #[error("unknown edge `{0}`")]
    UnknownEdge(String),

    #[error("unknown factor `{0}`")]
    UnknownFactor(String),

    #[error("degenerate message on edge `{edge}` (iteration {iteration}): normalizer {normalizer:e}")]
    DegenerateMessage { edge: String, iteration: usize, normalizer: f64 },

    #[error("degenerate belief on edge `{edge}`: normalizer {normalizer:e}")]
    DegenerateBelief { edge: String, normalizer: f64 },

    #[error("message invariant violated on edge `{edge}` at iteration {iteration}: {detail}")]
    MessageInvariant { edge: String, iteration: usize, detail: String },

    #[error("Z_e vanishes on edge `{edge}` (|Z_e| = {magnitude:e})")]
    VanishingEdgeSum { edge: String, magnitude: f64 },

    #[error("enumeration budget exceeded: {total_terms} terms in the full sum, budget {budget}")]
    BudgetExceeded { total_terms: u128, budget: u64 },

    #[error("zero total mass in marginal of edge `{0}`")]
    ZeroMass(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}
