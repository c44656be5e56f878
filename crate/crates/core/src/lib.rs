//! Deterministic 2D semantic gridworld for embodied-agent benchmarks.
//!
//! The crate is `no_std` (with `alloc`) and holds every algorithmic piece of
//! the benchmark: ground-truth scenes and their occupancy projection, the
//! raycast sensor, belief maps and scene graphs, D* Lite / fast marching /
//! frontier planning, agent kinematics with adhesion pick and place, the
//! administrator and peer communication regimes, templated task generation,
//! the metric suite and scripted policies. The episode loop lives in
//! [`episode`]; file formats, CLI and the external policy bridge live in the
//! companion `gridbench` crate.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

use alloc::string::String;

pub mod agents;
pub mod episode;
pub mod grid;
pub mod interaction;
pub mod mapping;
pub mod metrics;
pub mod params;
pub mod planning;
pub mod policies;
pub mod sensing;
pub mod tasks;
#[cfg(test)]
mod testutil;
pub mod world;

pub use grid::{Cell, Occupancy, OccupancyGrid, Point};
pub use planning::PlanError;

/// Errors raised by core operations.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid value: {0}")]
    Invalid(String),
    #[error("scene generation failed: {0}")]
    Generation(String),
    #[error("scene validation failed: {0}")]
    Validation(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("cannot merge maps from different scenes ({left} vs {right})")]
    SceneMismatch { left: String, right: String },
    #[error("macro expansion failed: {0}")]
    Macro(String),
    #[error("task generation failed: {0}")]
    TaskGeneration(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("grid has no free cell")]
    NoFreeCell,
}

/// Seeded generator used for every random draw in the crate.
pub type Rng = rand_chacha::ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    <Rng as rand::SeedableRng>::seed_from_u64(seed)
}
