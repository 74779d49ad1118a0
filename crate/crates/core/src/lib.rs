//! Simulation library for steering populations of no-regret learners in
//! finite-horizon mean-field games.

pub mod agents;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod mediator;
pub mod model;
pub mod planner;
pub mod polytope;
pub mod rng;
pub mod steering;
pub mod verify;

pub use error::{Error, Result};
