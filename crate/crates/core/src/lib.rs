//! Recursive task decomposition with dependencies between sub-problems.

pub mod graph;
pub mod parser;
pub mod prompts;
pub mod benchmarks;
pub mod backends;
pub mod scheduler;
pub mod vote;
pub mod analysis;
pub mod experiment;
