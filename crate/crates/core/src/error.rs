use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("mass matrix is not symmetric positive definite (pivot {pivot} = {value:e})")]
    MassNotSpd { pivot: usize, value: f64 },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("nonpositive Jacobian determinant {det:e} in cell {cell}")]
    NonPositiveJacobian { cell: usize, det: f64 },
    #[error("level mismatch: expected vector of length {expected}, got {got}")]
    LevelMismatch { expected: usize, got: usize },
    #[error("singular local solver: eigenvalue sum {0:e} is not positive")]
    SingularSolver(f64),
    #[error("dense assembly guard exceeded: {n} > {limit} degrees of freedom")]
    SizeGuard { n: usize, limit: usize },
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("coarse solver did not converge within {0} iterations")]
    CoarseSolverDiverged(usize),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
