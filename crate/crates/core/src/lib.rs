//! Crowd-coordinated evolutionary computation.
//!
//! A cloud server coordinates a crowd of worker agents. Each worker holds a
//! single candidate solution and evaluates it under its own environmental
//! uncertainty. Workers only exchange uncertain fitness values with their
//! current neighbors and report win/lose/tie tuples to the server, which
//! turns the sparse comparison record into a priority vector, sorts the
//! crowd into four levels, removes workers that sit in the top or bottom
//! level for too long, and tells lower-level workers which neighbors to learn
//! from.
//!
//! Module map:
//!
//! - [`problems`]: objective interface and analytic benchmark functions.
//! - [`clustering`]: WCSS objective, datasets, per-worker data corruption and
//!   a Lloyd's k-means baseline.
//! - [`uncertainty`]: bound schedule, noise draws, noisy evaluation, budget.
//! - [`topology`]: time-varying random neighbor graphs.
//! - [`ranking`]: comparison matrix, competition ranking, levels, detection.
//! - [`optimizer`]: level-based learning swarm update restricted to neighbors.
//! - [`engine`]: the server/worker loop end to end.
//! - [`harness`]: configuration, multi-seed batches, sweeps and CSV output.

pub mod clustering;
pub mod config;
pub mod engine;
pub mod error;
pub mod harness;
pub mod optimizer;
pub mod problems;
pub mod ranking;
pub mod rng;
pub mod topology;
pub mod uncertainty;

pub use config::{NoiseMode, ProblemSpec, RunConfig};
pub use engine::{run, RunResult, Simulation};
pub use error::{ConfigError, Error, Result};
pub use problems::{make_benchmark, Objective, SearchDomain};

/// Identifier of a worker agent. Ids are dense and zero-based; the worker
/// index used by the uncertainty schedule and data corruption is `id + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentId(pub usize);

impl AgentId {
    /// One-based worker index.
    pub fn worker_index(self) -> usize {
        self.0 + 1
    }
}

impl std::fmt::Display for AgentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}
