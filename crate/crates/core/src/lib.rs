//! Numerical laboratory for complex Hénon maps and their one-dimensional
//! degenerations.

pub mod error;
pub mod exponents;
pub mod critical;
pub mod henon;
pub mod poly;
pub mod poly1d;
pub mod precision;
pub mod saddle;
pub mod scalar;

pub use error::{LabError, Result};
pub use poly::{CPoly, Poly1D};
pub use precision::{GreenOpts, Precision};
pub use scalar::{Jet, Scalar, C64};
