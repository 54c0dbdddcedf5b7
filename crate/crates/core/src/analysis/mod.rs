//! Accuracy model for recursive decomposition: closed form, simulation,
//! theorem checks, trace scoring and compute accounting.

pub mod model;
pub mod montecarlo;
pub mod reference;
pub mod resources;
pub mod scoring;
pub mod theorems;
pub mod transition;

pub use model::{clamp01, phi_rdd_closed_form, FnAccuracies, ShapeNode, StepAccuracies, StepTriple, TableAccuracies};
pub use montecarlo::{monte_carlo_phi, monte_carlo_phi_with, Estimate, SimOptions};
pub use resources::{match_compute, matched_cost, ComputeMatch, ResourceReport, OUTPUT_TOKEN_WEIGHT};
pub use scoring::{estimate_step_accuracies, score_run, ScoredRun, ScoringContext, StepCount, StepEstimates};
pub use theorems::{check_theorem_conditions, NodeCheck, TheoremReport};
pub use transition::{find_transition_point, Series, TransitionPoint};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("runs lack verdicts; score them against a benchmark instance first")]
    MissingVerdicts,
    #[error("difficulty grids differ: {rdd:?} vs {baseline:?}")]
    GridMismatch { rdd: Vec<u64>, baseline: Vec<u64> },
}
