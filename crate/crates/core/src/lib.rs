//! Transition densities for Wright-Fisher type diffusions.
//!
//! The crate covers four pieces that are used together when comparing
//! candidate densities against simulated allele frequencies:
//!
//! * [`diffusion`]: the diffusion `dX = X^a (1-X)^b dW` (plus optional
//!   mutation/selection drift in the W-F case), its Lamperti transform and
//!   the scalar functions that enter every density formula.
//! * [`bridge`] and [`densities`]: the Brownian-bridge Monte Carlo
//!   representation of the exact density and the closed-form candidates
//!   (AE, GaussA, moment-matched Gaussian and Beta, mutation/selection AE).
//! * [`wfsim`]: the discrete binomial Wright-Fisher chain.
//! * [`kde`] and [`metrics`]: the Beta-kernel adaptive estimator and the
//!   continuous Hellinger / L² distances.

pub mod bridge;
pub mod densities;
pub mod diffusion;
pub mod error;
pub mod io;
pub mod kde;
pub mod metrics;
pub mod quad;
pub mod seed;
pub mod wfsim;

pub use bridge::{BridgeEnsemble, BridgePath, McConfig, McEstimate};
pub use densities::{DensityModel, GridDensity, GridSpec};
pub use diffusion::{DiffusionSpec, TransformPoint};
pub use error::{Error, Result};
pub use kde::BetaKernelEstimate;
pub use metrics::DistanceRecord;
pub use wfsim::TrajectoryEnsemble;
