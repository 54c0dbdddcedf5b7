//! Benchmark sweeps: run a method over difficulty levels, record every call
//! in an append-only manifest, and replay or report from it.

mod manifest;
mod report;

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

pub use manifest::{read_manifest, replay_turns, InstanceRecord, Manifest, ManifestHeader, ManifestRecord, RunOutcome};
pub use report::{level_summaries, render, LevelSummary, ReportError, ReportFormat};

use crate::analysis::{score_run, ResourceReport, ScoringContext};
use crate::backends::{
    Backend, BackendError, FaultInjector, FaultRates, OracleBackend, OracleConfig, RemoteBackend, RemoteConfig,
    ReplayBackend,
};
use crate::benchmarks::{generate, score, BenchmarkError, BenchmarkInstance, Task};
use crate::graph::DecompositionGraph;
use crate::prompts::{PromptSet, UnitMethod, ASSET_VERSION};
use crate::parser::DecompositionMode;
use crate::scheduler::{solve_graph, SchedulerConfig};
use crate::vote::{self_consistency, VoteConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "RDD+CoT")]
    RddCoT,
    #[serde(rename = "RDD+LtM")]
    RddLtM,
    #[serde(rename = "CoT+SC")]
    CoTSc,
    #[serde(rename = "LtM+SC")]
    LtMSc,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::RddCoT, Method::RddLtM, Method::CoTSc, Method::LtMSc];

    pub fn is_rdd(self) -> bool {
        matches!(self, Method::RddCoT | Method::RddLtM)
    }

    pub fn unit_method(self) -> UnitMethod {
        match self {
            Method::RddCoT | Method::CoTSc => UnitMethod::CoT,
            Method::RddLtM | Method::LtMSc => UnitMethod::LtM,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::RddCoT => "RDD+CoT",
            Method::RddLtM => "RDD+LtM",
            Method::CoTSc => "CoT+SC",
            Method::LtMSc => "LtM+SC",
        })
    }
}

impl FromStr for Method {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.to_ascii_lowercase().replace(['-', '_', ' '], "+");
        Method::ALL
            .into_iter()
            .find(|m| m.to_string().to_ascii_lowercase() == key)
            .ok_or_else(|| ExperimentError::InvalidConfig(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Oracle,
    /// Oracle with injected faults.
    Fault,
    Remote,
    Replay,
}

/// Backend selection as stored in a manifest. Secrets stay in the
/// environment and are never recorded.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub oracle: OracleConfig,
    pub faults: FaultRates,
    pub fault_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replay_manifest: Option<PathBuf>,
}

impl BackendConfig {
    pub fn build(&self) -> Result<Box<dyn Backend>, ExperimentError> {
        Ok(match self.kind {
            BackendKind::Oracle => Box::new(OracleBackend::new(self.oracle)),
            BackendKind::Fault => Box::new(FaultInjector::new(OracleBackend::new(self.oracle), self.faults, self.fault_seed)),
            BackendKind::Remote => {
                let mut config = match (&self.base_url, &self.model) {
                    (Some(base), Some(model)) => {
                        let mut c = RemoteConfig::new(base, model);
                        c.api_key = RemoteConfig::from_env().ok().and_then(|e| e.api_key);
                        c
                    }
                    _ => RemoteConfig::from_env()?,
                };
                if let Some(base) = &self.base_url {
                    config.base_url = base.clone();
                }
                if let Some(model) = &self.model {
                    config.model = model.clone();
                }
                Box::new(RemoteBackend::new(config))
            }
            BackendKind::Replay => {
                let path = self
                    .replay_manifest
                    .as_ref()
                    .ok_or_else(|| ExperimentError::InvalidConfig("replay backend needs a manifest path".into()))?;
                let file = std::fs::File::open(path).map_err(|e| ExperimentError::Io(format!("{}: {e}", path.display())))?;
                let manifest = read_manifest(std::io::BufReader::new(file))?;
                Box::new(ReplayBackend::new(replay_turns(&manifest)))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub task: Task,
    pub method: Method,
    pub levels: Vec<usize>,
    pub count: usize,
    pub seed: u64,
    /// Instances solved at the same time.
    pub instance_parallelism: usize,
    pub scheduler: SchedulerConfig,
    pub vote: VoteConfig,
    pub backend: BackendConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::for_task(Task::LetterConcat)
    }
}

impl RunConfig {
    /// Default difficulty grid and decomposition mode for a task.
    pub fn for_task(task: Task) -> Self {
        let (levels, mode) = match task {
            Task::LetterConcat => (vec![5, 10, 20, 50, 70, 90], DecompositionMode::Independent),
            Task::LengthReversal => (vec![3, 5, 7, 10, 15, 20], DecompositionMode::WithDependencies),
        };
        RunConfig {
            task,
            method: Method::RddCoT,
            levels,
            count: 100,
            seed: 0,
            instance_parallelism: 1,
            scheduler: SchedulerConfig { mode, ..Default::default() },
            vote: VoteConfig::default(),
            backend: BackendConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::InvalidConfig(m.to_string()));
        if self.levels.is_empty() {
            return bad("at least one difficulty level is required");
        }
        if self.levels.contains(&0) {
            return bad("difficulty levels must be positive");
        }
        if self.count == 0 {
            return bad("count must be at least 1");
        }
        if self.instance_parallelism == 0 {
            return bad("instance_parallelism must be at least 1");
        }
        if self.vote.k == 0 {
            return bad("vote.k must be at least 1");
        }
        self.scheduler
            .validate()
            .map_err(|e| ExperimentError::InvalidConfig(e.to_string()))
    }

    fn scheduler_config(&self) -> SchedulerConfig {
        SchedulerConfig {
            unit_method: self.method.unit_method(),
            ..self.scheduler.clone()
        }
    }

    fn prompts(&self) -> Result<PromptSet, ExperimentError> {
        self.scheduler_config()
            .prompt_set()
            .map_err(|e| ExperimentError::InvalidConfig(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },
    #[error(transparent)]
    Benchmark(#[from] BenchmarkError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

impl From<std::io::Error> for ExperimentError {
    fn from(e: std::io::Error) -> Self {
        ExperimentError::Io(e.to_string())
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Solves one instance with the configured method. Failures are recorded,
/// not returned.
pub fn run_instance(
    config: &RunConfig,
    prompts: &PromptSet,
    backend: &dyn Backend,
    instance: &BenchmarkInstance,
    ordinal: usize,
) -> InstanceRecord {
    let mut record = InstanceRecord {
        id: instance.key(),
        n0: instance.difficulty,
        ordinal,
        method: config.method,
        instance: instance.clone(),
        answer: None,
        score: 0,
        error: None,
        trace: Vec::new(),
        diagnostics: Vec::new(),
        graph: None,
        resources: ResourceReport::default(),
        outcome: None,
    };
    if config.method.is_rdd() {
        let mut graph = DecompositionGraph::new(&instance.description);
        if let Ok(root) = graph.node_mut(&graph.root().clone()) {
            root.class_tag = Some(instance.class_tag.clone());
            root.difficulty_tag = Some(instance.difficulty as u64);
        }
        let scheduler = config.scheduler_config();
        let (graph, trace, diagnostics) = match solve_graph(graph, backend, &scheduler, prompts) {
            Ok(out) => {
                record.answer = Some(out.solution);
                (out.graph, out.trace, out.diagnostics)
            }
            Err(failure) => {
                record.error = Some(failure.error.to_string());
                (failure.graph, failure.trace, failure.diagnostics)
            }
        };
        let ctx = ScoringContext {
            mode: scheduler.mode,
            width: scheduler.width,
        };
        let scored = score_run(&graph, &trace, Some(&instance.problem()), ctx);
        record.outcome = Some(RunOutcome {
            root: scored.root,
            nodes: scored.nodes,
            recovery: scored.recovery,
            propagation: scored.propagation,
        });
        record.trace = scored.trace;
        record.diagnostics = diagnostics;
        record.graph = Some(graph);
    } else {
        match self_consistency(&instance.description, backend, prompts, &config.vote) {
            Ok(out) => {
                record.answer = Some(out.answer);
                record.trace = out.trace;
                record.diagnostics = out.diagnostics;
            }
            Err(e) => record.error = Some(e.to_string()),
        }
    }
    record.resources = ResourceReport::from_usage(record.trace.iter().map(|e| &e.usage));
    record.score = record.answer.as_deref().map(|a| score(a, instance)).unwrap_or(0);
    record
}

/// Runs the sweep, writing each record to `sink` as soon as it is final.
pub fn run_experiment(
    config: &RunConfig,
    backend: &dyn Backend,
    mut sink: Option<&mut dyn Write>,
) -> Result<Manifest, ExperimentError> {
    config.validate()?;
    let prompts = config.prompts()?;
    let header = ManifestHeader {
        asset_version: ASSET_VERSION.to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        backend: backend.name(),
        config: config.clone(),
        started_at: unix_now(),
    };
    let mut emit = |record: &ManifestRecord| -> Result<(), ExperimentError> {
        if let Some(w) = sink.as_mut() {
            manifest::write_record(&mut **w, record)?;
        }
        Ok(())
    };
    emit(&ManifestRecord::Header(header.clone()))?;
    let mut instances = Vec::new();
    for &n0 in &config.levels {
        let batch = generate(config.task, n0, config.count, config.seed)?;
        for (chunk_no, chunk) in batch.chunks(config.instance_parallelism).enumerate() {
            let base = chunk_no * config.instance_parallelism;
            let records: Vec<InstanceRecord> = if chunk.len() == 1 {
                vec![run_instance(config, &prompts, backend, &chunk[0], base)]
            } else {
                std::thread::scope(|s| {
                    let handles: Vec<_> = chunk
                        .iter()
                        .enumerate()
                        .map(|(i, inst)| {
                            let prompts = &prompts;
                            s.spawn(move || run_instance(config, prompts, backend, inst, base + i))
                        })
                        .collect();
                    handles.into_iter().map(|h| h.join().expect("instance worker panicked")).collect()
                })
            };
            for record in records {
                emit(&ManifestRecord::Instance(Box::new(record.clone())))?;
                instances.push(record);
            }
        }
    }
    let summaries = level_summaries(config.method, &instances);
    let finished_at = unix_now();
    emit(&ManifestRecord::Footer {
        finished_at,
        summaries: summaries.clone(),
    })?;
    Ok(Manifest {
        header,
        instances,
        summaries: Some(summaries),
        finished_at: Some(finished_at),
    })
}

/// Re-runs a manifest's configuration against its own recorded completions.
pub fn replay_manifest(manifest: &Manifest, sink: Option<&mut dyn Write>) -> Result<Manifest, ExperimentError> {
    let backend = ReplayBackend::new(replay_turns(manifest));
    run_experiment(&manifest.header.config, &backend, sink)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(task: Task, method: Method) -> RunConfig {
        RunConfig {
            method,
            levels: vec![5, 12],
            count: 3,
            ..RunConfig::for_task(task)
        }
    }

    #[test]
    fn oracle_sweeps_are_perfect() {
        for method in Method::ALL {
            for task in [Task::LetterConcat, Task::LengthReversal] {
                let m = run_experiment(&small(task, method), &OracleBackend::default(), None).unwrap();
                let sums = m.summaries.unwrap();
                assert_eq!(sums.len(), 2);
                assert!(sums.iter().all(|s| s.accuracy == 1.0), "{method} {task:?}: {sums:?}");
            }
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert_eq!("rdd-cot".parse::<Method>().unwrap(), Method::RddCoT);
        assert!("magic".parse::<Method>().is_err());
    }

    #[test]
    fn invalid_configs() {
        let c = RunConfig { count: 0, ..RunConfig::default() };
        assert!(matches!(c.validate(), Err(ExperimentError::InvalidConfig(_))));
        let c = RunConfig { levels: vec![], ..RunConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn replay_reproduces_answers() {
        let config = small(Task::LengthReversal, Method::RddCoT);
        let first = run_experiment(&config, &OracleBackend::default(), None).unwrap();
        let again = replay_manifest(&first, None).unwrap();
        assert_eq!(first.instances, again.instances);
    }
}
