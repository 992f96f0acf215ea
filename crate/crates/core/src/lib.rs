//! Multirotor simulation, sparse identification of the vehicle's dynamics,
//! and nonlinear model predictive control with spherical keep-out zones.
//!
//! The pipeline has three stages:
//!
//! 1. [`sim`] flies a ground-truth [`dynamics`] model under a cascade PID and
//!    logs snapshot matrices.
//! 2. [`sindy`] differentiates the logs, builds physics-informed candidate
//!    libraries, and fits sparse coefficients with sequential thresholded
//!    least squares.
//! 3. [`nmpc`] closes the loop with a Gauss–Newton single-shooting MPC over
//!    the identified model, penalizing intrusion into obstacle spheres.
//!
//! [`pipeline`] wires the stages together behind configuration files and is
//! what the `sindy-mpc` binary drives. Runnable walkthroughs of each stage
//! live in the crate's `examples/` directory.

pub mod dynamics;
pub mod error;
pub mod nmpc;
pub mod pipeline;
pub mod sim;
pub mod sindy;

pub use error::{Error, Result};
