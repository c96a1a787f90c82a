//! Density bounds, an analytic oracle, boundary classification, Monte Carlo
//! simulation and density estimation for square-root type diffusions
//!
//! ```text
//! dX = (a(X) − b(X) X) dt + γ(X) X^α dW,   α ∈ [1/2, 1).
//! ```

// `!(x > 0.0)` is how NaN gets rejected along with the bad range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boundary;
pub mod bounds;
pub mod cir;
pub mod density;
pub mod error;
pub mod mc;
pub mod model;
pub mod quad;
pub mod special;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use model::{Coefficient, CoefficientSet, NormTable};
