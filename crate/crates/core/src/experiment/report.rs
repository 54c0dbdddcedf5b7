use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{InstanceRecord, Manifest, Method};
use crate::analysis::{estimate_step_accuracies, ResourceReport, ScoredRun, StepEstimates};
use crate::graph::DecompositionGraph;

pub const CSV_HEADER: &str = "Method,n0,Accuracy,Time,Calls,ContextTokens,OutputTokens";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub method: Method,
    pub n0: usize,
    pub count: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub failures: usize,
    pub resources: ResourceReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<StepEstimates>,
}

fn scored(record: &InstanceRecord) -> Option<ScoredRun> {
    let o = record.outcome.as_ref()?;
    Some(ScoredRun {
        root: o.root,
        nodes: o.nodes.clone(),
        trace: record.trace.clone(),
        recovery: o.recovery,
        propagation: o.propagation,
    })
}

/// One summary per difficulty level, in first-seen order.
pub fn level_summaries(method: Method, instances: &[InstanceRecord]) -> Vec<LevelSummary> {
    let mut levels: Vec<usize> = Vec::new();
    for r in instances {
        if !levels.contains(&r.n0) {
            levels.push(r.n0);
        }
    }
    levels
        .into_iter()
        .map(|n0| {
            let group: Vec<&InstanceRecord> = instances.iter().filter(|r| r.n0 == n0).collect();
            let mut resources = ResourceReport::default();
            for r in &group {
                resources.add(&r.resources);
            }
            let correct = group.iter().filter(|r| r.score == 1).count();
            let steps = if method.is_rdd() {
                group
                    .iter()
                    .map(|r| scored(r))
                    .collect::<Option<Vec<_>>>()
                    .and_then(|runs| estimate_step_accuracies(&runs).ok())
            } else {
                None
            };
            LevelSummary {
                method,
                n0,
                count: group.len(),
                correct,
                accuracy: correct as f64 / group.len() as f64,
                failures: group.iter().filter(|r| r.error.is_some()).count(),
                resources,
                steps,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Table,
    Csv,
    Json,
    Dot,
}

impl std::str::FromStr for ReportFormat {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "table" => Ok(ReportFormat::Table),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "dot" => Ok(ReportFormat::Dot),
            other => Err(ReportError::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReportError {
    #[error("no instance with id {0:?} in the manifest")]
    UnknownInstanceId(String),
    #[error("dot output needs an instance id")]
    InstanceRequired,
    #[error("unknown report format {0:?}")]
    UnknownFormat(String),
}

fn summaries(manifest: &Manifest) -> Vec<LevelSummary> {
    manifest
        .summaries
        .clone()
        .unwrap_or_else(|| level_summaries(manifest.header.config.method, &manifest.instances))
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"))
}

pub fn render(manifest: &Manifest, format: ReportFormat, instance: Option<&str>) -> Result<String, ReportError> {
    let sums = summaries(manifest);
    Ok(match format {
        ReportFormat::Csv => {
            let mut out = format!("{CSV_HEADER}\n");
            for s in &sums {
                let r = &s.resources;
                writeln!(
                    out,
                    "{},{},{:.4},{:.3},{},{},{}",
                    s.method,
                    s.n0,
                    s.accuracy,
                    r.wall_time.as_secs_f64(),
                    r.calls,
                    r.context_tokens,
                    r.output_tokens
                )
                .unwrap();
            }
            out
        }
        ReportFormat::Json => serde_json::to_string_pretty(&sums).expect("summaries serialize") + "\n",
        ReportFormat::Table => {
            let mut out = format!(
                "{:<8} {:>5} {:>8} {:>9} {:>7} {:>14} {:>13}\n",
                "Method", "n0", "Accuracy", "Time(s)", "Calls", "ContextTokens", "OutputTokens"
            );
            for s in &sums {
                let r = &s.resources;
                writeln!(
                    out,
                    "{:<8} {:>5} {:>8.2} {:>9.2} {:>7} {:>14} {:>13}",
                    s.method.to_string(),
                    s.n0,
                    s.accuracy,
                    r.wall_time.as_secs_f64(),
                    r.calls,
                    r.context_tokens,
                    r.output_tokens
                )
                .unwrap();
            }
            if sums.iter().any(|s| s.steps.is_some()) {
                writeln!(out, "\n{:>5} {:>6} {:>6} {:>6} {:>6}", "n0", "φ_d", "φ_m", "φ_u", "φ_RDD").unwrap();
                for s in &sums {
                    if let Some(st) = &s.steps {
                        writeln!(
                            out,
                            "{:>5} {:>6} {:>6} {:>6} {:>6.2}",
                            s.n0,
                            opt(st.phi_d),
                            opt(st.phi_m),
                            opt(st.phi_u),
                            st.phi_rdd
                        )
                        .unwrap();
                    }
                }
            }
            out
        }
        ReportFormat::Dot => {
            let id = match instance {
                Some(id) => id,
                None if manifest.instances.len() == 1 => &manifest.instances[0].id,
                None => return Err(ReportError::InstanceRequired),
            };
            let record = manifest
                .instance(id)
                .ok_or_else(|| ReportError::UnknownInstanceId(id.to_string()))?;
            match &record.graph {
                Some(g) => g.to_dot(),
                None => DecompositionGraph::new(&record.instance.description).to_dot(),
            }
        }
    })
}
