//! Library surface of the experiment CLI, exposed for integration tests.

pub mod config;
pub mod csvout;
pub mod plot;
pub mod presets;
pub mod sweep;
