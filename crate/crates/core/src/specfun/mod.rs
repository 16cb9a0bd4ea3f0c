//! Special-function and quadrature kernel shared by all analytic formulas.
//!
//! Everything here is a pure function of its inputs and safe to call from any
//! number of threads.

pub mod quad;
pub mod special;

pub use quad::{integrate_finite, integrate_semi_infinite, CompensatedSum, QuadratureSpec};
pub use special::{gauss_2f1_neg, gaussian_q, half_range_moment, laguerre, ln_tricomi_u, log_gamma, tricomi_u};
