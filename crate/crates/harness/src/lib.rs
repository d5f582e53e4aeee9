//! Configuration-driven pipeline around `wf-core`: simulate the discrete
//! chain, evaluate candidate densities, fit the Beta-kernel reference
//! estimate, tabulate distances and draw figures.

pub mod config;
pub mod error;
pub mod figures;
pub mod pipeline;
pub mod svg;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
