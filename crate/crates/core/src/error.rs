use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("state is at a fixed point (rho00 = {rho00}), z is infinite")]
    AtFixedPoint { rho00: f64 },

    #[error("unknown eigenstate {index} for a {dim}-level system")]
    UnknownEigenstate { index: usize, dim: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("inconsistent input: d_{index}(0) = 0 but an off-diagonal entry in its row is nonzero")]
    InconsistentOffDiagonal { index: usize },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("z-form requires Born constraint g*S_xi = 1 (got {gsxi})")]
    BornConstraintRequired { gsxi: f64 },

    #[error("degenerate initial state x = {x}: use the delta-function limit")]
    Degenerate { x: f64 },

    #[error("evaluate at asymmetric state: rho00 = rho11 makes the geodesic side 0/0")]
    SymmetricState,
}

pub type Result<T> = std::result::Result<T, Error>;
