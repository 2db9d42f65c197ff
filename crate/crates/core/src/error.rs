use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("site {site} has no bonds and would carry no qubits")]
    DegenerateSite { site: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{n_qubits} qubits exceeds the limit of {limit} for this operation")]
    SizeGuard { n_qubits: usize, limit: usize },

    #[error("operation needs {requested} bytes, budget is {budget} bytes")]
    MemoryBudget { requested: u128, budget: u128 },

    #[error("sparse map grew to {entries} entries, budget is {budget}")]
    EntryBudget { entries: usize, budget: usize },

    #[error("coefficient {0} is not an exact integer")]
    NonIntegerCoefficient(f64),

    #[error("integer overflow in exact arithmetic")]
    Overflow,

    #[error("pauli term with x_mask {x_mask:#x} z_mask {z_mask:#x} needs an imaginary phase")]
    ComplexPhase { x_mask: u64, z_mask: u64 },

    #[error("eigensolver did not converge after {iterations} iterations (best residuals {residuals:?})")]
    NoConvergence { iterations: usize, residuals: Vec<f64> },

    #[error("graph has doubled site-pair bonds: {0}")]
    DoubledBonds(String),

    #[error("unsupported lattice family for this operation: {0}")]
    UnsupportedFamily(String),

    #[error("cannot force an outcome of probability {probability:e}")]
    ImprobableOutcome { probability: f64 },

    #[error("site {site} was already decoded")]
    AlreadyDecoded { site: usize },

    #[error("ill-conditioned projection onto the logical basis (smallest singular value {min_singular:e})")]
    IllConditioned { min_singular: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
