//! Sampling-based model predictive control for steering a partially actuated
//! population of bounded-confidence opinion agents toward a target opinion.
//!
//! The crate is organised bottom-up:
//!
//! - [`dynamics`]: the stochastic opinion model, neighbourhoods and rollouts.
//! - [`policies`]: open-loop, feedback and adaptive-feedback parameterisations,
//!   the hand-designed baseline, and sampling of policy parameters.
//! - [`optimizer`]: shape functions and the Gaussian / Bernoulli
//!   natural-parameter updates.
//! - [`mpc`]: the receding-horizon controller loop.
//! - [`experiments`]: scenarios, experiment records, metrics and output files.
//! - [`cli`]: the `opinion-steer` command line.

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod mpc;
pub mod optimizer;
pub mod policies;
pub mod rng;

pub use error::{Error, Result};
