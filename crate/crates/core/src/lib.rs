//! Progress-aware orchestration engine for LLM-driven evolutionary search.
//!
//! The engine runs one or more semi-isolated search processes ("islands"),
//! each looping through idea generation, idea selection, candidate
//! evaluation, and hierarchical context maintenance. A scale-invariant
//! momentum signal watches each island's trajectory; when it stagnates,
//! a self-adaptive policy either reverts the island to an ancestor
//! snapshot or imports a partner island's best solution. Runs are fully
//! deterministic under scripted providers: identical config and seed
//! reproduce the event log byte for byte, and checkpoints resume exactly.

pub mod checkpoint;
pub mod eval;
pub mod events;
pub mod explorer;
pub mod memory;
pub mod orchestrator;
pub mod policy;
pub mod progress;
pub mod provider;
pub mod report;
pub mod rng;

#[cfg(feature = "cli")]
pub mod cli;
#[cfg(feature = "native")]
pub mod config;

pub use policy::IslandId;
pub use progress::{Direction, ProgressTracker, ScoreSpec};
