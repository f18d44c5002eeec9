//! Simulation-based detection and influence measurement of malicious raters.
//!
//! The crate contains a small generative model of users rating movies under a
//! mean-rating ranking ([`model`]), a trace recorder for running that model
//! forward, conditioned on an observed matrix, or under single-site replay
//! ([`trace`]), posterior inference by likelihood-weighted importance sampling
//! and lightweight Metropolis-Hastings ([`inference`]), and a counterfactual
//! influence measure based on the Jensen-Shannon distance between predictive
//! rating histograms ([`influence`]).

pub mod distributions;
pub mod error;
pub mod inference;
pub mod influence;
pub mod model;
pub mod rng;
pub mod scenario;
pub mod trace;

pub use error::{Error, Result};
pub use model::{DisarmMask, LatentAssignment, ModelConfig, RatingMatrix, RatingModel};
pub use rng::SimRng;
pub use trace::{Address, Trace};

/// Version string embedded in every output file.
pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));
