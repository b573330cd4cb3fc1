use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Invalid problem description or solver controls.
    #[error("configuration error: {0}")]
    Config(String),

    /// Initial data failing the admissibility condition at a node.
    #[error("inadmissible initial data at node {node} (x = {x}): {reason}")]
    Inadmissible { node: usize, x: f64, reason: String },

    /// A numerical routine did not converge or produced an invalid state.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Post-processing could not be carried out on the supplied trajectory.
    #[error("analysis error: {0}")]
    Analysis(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
}
