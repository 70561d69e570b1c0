use thiserror::Error;

/// Errors raised by the dynamical computations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("non-finite input")]
    NonFinite,
    #[error("point outside the escape region (|z| = {modulus}, radius {radius})")]
    OutsideEscapeRegion { modulus: f64, radius: f64 },
    #[error("map is degenerate (zero Jacobian): {0}")]
    Degenerate(String),
    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence { what: String, iterations: usize },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("numerical overflow: {0}")]
    Overflow(String),
    #[error("adaptive subdivision failed near box centered at ({re}, {im}) with side {side}")]
    Subdivision { re: f64, im: f64, side: f64 },
    #[error("anomaly: {0}")]
    Anomaly(String),
}

pub type Result<T> = std::result::Result<T, LabError>;
