use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate cell {cell}: {reason}")]
    DegenerateCell { cell: usize, reason: String },

    #[error("non-manifold edge ({0}, {1}) shared by more than two cells")]
    NonManifoldEdge(usize, usize),

    #[error("cell {0} is not star-shaped with respect to any of its vertices")]
    NotStarShaped(usize),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("singular Gram matrix on {0}")]
    SingularGram(String),

    #[error("singular local mixed problem on cell {cell} (condition estimate {condition:.3e})")]
    SingularMixedProblem { cell: usize, condition: f64 },

    #[error("reconstruction residual {residual:.3e} exceeds tolerance on cell {cell}")]
    ReconstructionResidual { cell: usize, residual: f64 },

    #[error("singular static condensation block on cell {0}")]
    SingularCellBlock(usize),

    #[error("sparse factorization failed: {0}")]
    Factorization(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
