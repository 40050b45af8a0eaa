//! Surrogate-assisted prescriptor evolution for a simulated multi-node
//! chlorination network.
//!
//! The pipeline alternates four phases: collect rollout data from the real
//! simulator, fit a recurrent reward surrogate on the accumulated experience,
//! evolve NEAT prescriptors under NSGA-II selection scored by the surrogate,
//! then evaluate the elite prescriptors back on the simulator and fold the
//! new trajectories into the experience buffer. The terminal population is
//! summarized as a normalized two-objective Pareto report.
//!
//! Everything is seeded: a master seed fans out into named sub-streams
//! (environment, evolution, surrogate, sampling), so a run is reproducible
//! byte-for-byte.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod env;
pub mod error;
pub mod esp;
pub mod experience;
pub mod neat;
pub mod nsga2;
pub mod reward;
pub mod rng;
pub mod surrogate;

pub use error::{Error, Result};
