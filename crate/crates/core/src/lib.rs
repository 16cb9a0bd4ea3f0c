//! Simulation and analysis engine for an underwater continuous-variable QKD
//! link with virtual photon subtraction.
//!
//! The crate models the post-selected non-Gaussian source, the underwater
//! channel (Beer–Lambert path loss plus turbulence fading), displaced
//! photon-number-resolving reception, and three detection schemes — homodyne
//! (HD), symbol-wise quantum maximum-likelihood (QMLD), and CSI-free
//! multiple-symbol detection (QMSD) — each with analytic accepted-only QBER
//! expressions validated by a Monte Carlo harness.

pub mod channel;
pub mod detect;
pub mod error;
pub mod likelihood;
pub mod link;
pub mod mc;
pub mod receiver;
pub mod source;
pub mod specfun;

pub use error::{Error, Result};
pub use link::LinkParams;
