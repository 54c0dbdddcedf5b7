//! Breadth-first expansion and depth-first solving of the decomposition graph.
//!
//! [`Scheduler::schedule_bfs`] expands a problem level by level. Whenever a
//! problem depends on a sibling, that sibling is expanded and solved first
//! by a nested call with its own queue. Once expansion is done,
//! [`Scheduler::schedule_dfs`] unit-solves and merges in postorder.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{Backend, BackendError, Bounded, CompletionRequest, UsageRecord, DEFAULT_MAX_TOKENS};
use crate::graph::{Acyclicity, DecompositionGraph, GraphError, NodeKind, NodeStatus, ProblemId};
use crate::parser::{extract_answer_detailed, parse_decomposition, substitute_dependencies, DecompositionMode, SubstitutionError};
use crate::prompts::{PromptError, PromptSet, Regime, SubSolution, UnitMethod};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchedulerConfig {
    pub width: usize,
    pub max_depth: usize,
    pub mode: DecompositionMode,
    pub recovery_sentence_enabled: bool,
    pub parallelism: usize,
    pub regime: Regime,
    pub unit_method: UnitMethod,
    /// Extra decomposition attempts after a malformed completion.
    pub retry_budget: u32,
    /// Treat a node as a unit once the retry budget is spent, instead of failing.
    pub fallback_to_unit: bool,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            width: 4,
            max_depth: 3,
            mode: DecompositionMode::Independent,
            recovery_sentence_enabled: true,
            parallelism: 1,
            regime: Regime::Generic,
            unit_method: UnitMethod::CoT,
            retry_budget: 1,
            fallback_to_unit: true,
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<(), SchedulerError> {
        let bad = |m: &str| Err(SchedulerError::InvalidConfig(m.to_string()));
        if self.width == 0 {
            return bad("width must be at least 1");
        }
        if self.max_depth == 0 {
            return bad("max_depth must be at least 1");
        }
        if self.parallelism == 0 {
            return bad("parallelism must be at least 1");
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return bad("temperature must lie in [0, 2]");
        }
        Ok(())
    }

    pub fn prompt_set(&self) -> Result<PromptSet, PromptError> {
        PromptSet::packaged(self.regime, self.mode, self.unit_method, self.recovery_sentence_enabled)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Step {
    Decompose,
    UnitSolve,
    Merge,
    Substitute,
    /// A self-consistency sample.
    Sample,
    /// A self-consistency comparator call.
    Vote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Correct,
    Incorrect,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub seq: usize,
    pub step: Step,
    pub node: ProblemId,
    pub prompt: String,
    pub completion: String,
    pub usage: UsageRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiagnosticKind {
    MalformedDecomposition,
    FellBackToUnit,
    DependencyForcedUnit,
    MalformedTags,
    VoteFallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub node: ProblemId,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchedulerError {
    #[error("invalid scheduler configuration: {0}")]
    InvalidConfig(String),
    #[error("empty problem description")]
    EmptyProblem,
    #[error("cycle in decomposition graph: {}", join_ids(.0))]
    Cycle(Vec<ProblemId>),
    #[error("backend failed at {node}: {source}")]
    Backend { node: ProblemId, source: BackendError },
    #[error("{node} references {dependency}, which has no solution")]
    UnresolvedDependency { node: ProblemId, dependency: ProblemId },
    #[error("malformed decomposition for {node} after all retries")]
    MalformedDecomposition { node: ProblemId },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

fn join_ids(ids: &[ProblemId]) -> String {
    ids.iter().map(ProblemId::as_str).collect::<Vec<_>>().join(" -> ")
}

struct State {
    graph: DecompositionGraph,
    trace: Vec<TraceEvent>,
    diagnostics: Vec<Diagnostic>,
    substituted: BTreeSet<ProblemId>,
    forced_units: BTreeSet<ProblemId>,
    expanding: BTreeSet<ProblemId>,
}

/// Snapshot of the node fields the scheduler branches on.
struct NodeView {
    kind: NodeKind,
    depth: usize,
    description: String,
    solution: Option<String>,
    children: Vec<ProblemId>,
}

pub struct Scheduler<'a> {
    backend: Bounded<&'a dyn Backend>,
    prompts: &'a PromptSet,
    config: SchedulerConfig,
    state: Mutex<State>,
}

impl<'a> Scheduler<'a> {
    pub fn new(
        graph: DecompositionGraph,
        backend: &'a dyn Backend,
        prompts: &'a PromptSet,
        config: SchedulerConfig,
    ) -> Result<Self, SchedulerError> {
        config.validate()?;
        Ok(Scheduler {
            backend: Bounded::new(backend, config.parallelism),
            prompts,
            config,
            state: Mutex::new(State {
                graph,
                trace: Vec::new(),
                diagnostics: Vec::new(),
                substituted: BTreeSet::new(),
                forced_units: BTreeSet::new(),
                expanding: BTreeSet::new(),
            }),
        })
    }

    pub fn graph(&self) -> DecompositionGraph {
        self.state.lock().unwrap().graph.clone()
    }

    pub fn trace(&self) -> Vec<TraceEvent> {
        self.state.lock().unwrap().trace.clone()
    }

    /// Highest number of simultaneous backend calls made so far.
    pub fn peak_parallelism(&self) -> usize {
        self.backend.peak()
    }

    pub fn into_parts(self) -> (DecompositionGraph, Vec<TraceEvent>, Vec<Diagnostic>) {
        let state = self.state.into_inner().unwrap();
        (state.graph, state.trace, state.diagnostics)
    }

    fn view(&self, id: &ProblemId) -> Result<NodeView, SchedulerError> {
        let state = self.state.lock().unwrap();
        let node = state.graph.node(id)?;
        Ok(NodeView {
            kind: node.kind,
            depth: node.depth,
            description: node.description.clone(),
            solution: node.solution.clone(),
            children: node.children.clone(),
        })
    }

    fn diagnose(&self, kind: DiagnosticKind, node: &ProblemId, message: String) {
        self.state.lock().unwrap().diagnostics.push(Diagnostic {
            kind,
            node: node.clone(),
            message,
        });
    }

    fn record(&self, step: Step, node: &ProblemId, prompt: String, completion: String, usage: UsageRecord) {
        let mut state = self.state.lock().unwrap();
        let seq = state.trace.len();
        state.trace.push(TraceEvent {
            seq,
            step,
            node: node.clone(),
            prompt,
            completion,
            usage,
            verdict: None,
        });
    }

    fn call(&self, step: Step, node: &ProblemId, prompt: String, temperature: f64) -> Result<String, SchedulerError> {
        let request = CompletionRequest::new(prompt)
            .with_temperature(temperature)
            .with_max_tokens(self.config.max_tokens);
        let completion = self.backend.complete(&request).map_err(|source| SchedulerError::Backend {
            node: node.clone(),
            source,
        })?;
        let text = completion.text.clone();
        self.record(step, node, request.prompt, completion.text, completion.usage);
        Ok(text)
    }

    fn fail(&self, id: &ProblemId, error: SchedulerError) -> SchedulerError {
        let mut state = self.state.lock().unwrap();
        if let Ok(node) = state.graph.node(id) {
            if !matches!(node.status, NodeStatus::Solved | NodeStatus::Failed) {
                let _ = state.graph.set_status(id, NodeStatus::Failed);
            }
        }
        error
    }

    fn unsolved_dependencies(&self, id: &ProblemId) -> Result<Vec<ProblemId>, SchedulerError> {
        let mut state = self.state.lock().unwrap();
        let node = state.graph.node(id)?;
        let pending = node.status == NodeStatus::Pending;
        let mut out = Vec::new();
        for dep in &node.dependencies {
            if !state.graph.node(dep)?.is_solved() {
                out.push(dep.clone());
            }
        }
        if !out.is_empty() && pending {
            state.graph.set_status(id, NodeStatus::Blocked)?;
        }
        Ok(out)
    }

    /// Replaces `{P-k}` placeholders with the sibling solutions, once.
    fn substitute(&self, id: &ProblemId) -> Result<(), SchedulerError> {
        let mut state = self.state.lock().unwrap();
        if state.substituted.contains(id) {
            return Ok(());
        }
        let node = state.graph.node(id)?;
        if node.dependencies.is_empty() {
            state.substituted.insert(id.clone());
            return Ok(());
        }
        let mut solutions = BTreeMap::new();
        let mut forced = Vec::new();
        for dep in &node.dependencies {
            let dep_node = state.graph.node(dep)?;
            if let Some(solution) = &dep_node.solution {
                let local = ProblemId::new(dep.local_part()).expect("non-empty id");
                solutions.insert(local, solution.clone());
            }
            if state.forced_units.contains(dep) {
                forced.push(dep.clone());
            }
        }
        let original = node.description.clone();
        let resolved = substitute_dependencies(&original, &solutions).map_err(
            |SubstitutionError::UnresolvedDependency(local)| SchedulerError::UnresolvedDependency {
                node: id.clone(),
                dependency: id.parent_of_local(&local),
            },
        )?;
        state.graph.rewrite_description(id, resolved.clone())?;
        state.substituted.insert(id.clone());
        for dep in forced {
            state.diagnostics.push(Diagnostic {
                kind: DiagnosticKind::DependencyForcedUnit,
                node: id.clone(),
                message: format!("dependency {dep} was forced to a unit problem by the depth limit"),
            });
        }
        let seq = state.trace.len();
        state.trace.push(TraceEvent {
            seq,
            step: Step::Substitute,
            node: id.clone(),
            prompt: original,
            completion: resolved,
            usage: UsageRecord::default(),
            verdict: None,
        });
        Ok(())
    }

    /// Decides whether a node is a unit or splits it. No-op for nodes that
    /// were already decided. Dependencies must be solved beforehand.
    fn decompose(&self, id: &ProblemId) -> Result<(), SchedulerError> {
        let view = self.view(id)?;
        if view.kind != NodeKind::Unknown {
            return Ok(());
        }
        if view.depth >= self.config.max_depth {
            let mut state = self.state.lock().unwrap();
            state.graph.mark_unit(id)?;
            state.forced_units.insert(id.clone());
            return Ok(());
        }
        let prompt = self.prompts.decompose(&view.description, self.config.width)?;
        for attempt in 0..=self.config.retry_budget {
            let temperature = if attempt == 0 { self.config.temperature } else { 0.0 };
            let text = self.call(Step::Decompose, id, prompt.clone(), temperature)?;
            let parsed = match parse_decomposition(&text, self.config.mode, self.config.width) {
                Ok(p) => p,
                Err(e) => {
                    self.diagnose(DiagnosticKind::MalformedDecomposition, id, e.to_string());
                    continue;
                }
            };
            let mut state = self.state.lock().unwrap();
            if parsed.is_unit() {
                state.graph.mark_unit(id)?;
                return Ok(());
            }
            match state.graph.add_decomposition(id, parsed.into_specs(), self.config.width) {
                Ok(_) => {
                    if let Acyclicity::Cycle(path) = state.graph.check_acyclic() {
                        return Err(SchedulerError::Cycle(path));
                    }
                    return Ok(());
                }
                Err(e) => {
                    drop(state);
                    self.diagnose(DiagnosticKind::MalformedDecomposition, id, e.to_string());
                }
            }
        }
        if !self.config.fallback_to_unit {
            return Err(SchedulerError::MalformedDecomposition { node: id.clone() });
        }
        self.diagnose(
            DiagnosticKind::FellBackToUnit,
            id,
            "treated as a unit problem after malformed decompositions".into(),
        );
        self.state.lock().unwrap().graph.mark_unit(id)?;
        Ok(())
    }

    /// Unit-solves or merges a node whose children are all solved.
    fn merge_or_unit(&self, id: &ProblemId) -> Result<String, SchedulerError> {
        let view = self.view(id)?;
        let (step, prompt) = if view.kind == NodeKind::Composite {
            let subs = {
                let state = self.state.lock().unwrap();
                view.children
                    .iter()
                    .map(|c| {
                        let child = state.graph.node(c)?;
                        Ok(SubSolution {
                            description: child.description.clone(),
                            solution: child.solution.clone().unwrap_or_default(),
                        })
                    })
                    .collect::<Result<Vec<_>, GraphError>>()?
            };
            (Step::Merge, self.prompts.merge(&view.description, &subs)?)
        } else {
            (Step::UnitSolve, self.prompts.unit(&view.description)?)
        };
        let text = self.call(step, id, prompt, self.config.temperature)?;
        let answer = extract_answer_detailed(&text);
        if answer.malformed_tags {
            self.diagnose(DiagnosticKind::MalformedTags, id, "unclosed <ANSWER> tag".into());
        }
        let mut state = self.state.lock().unwrap();
        if view.kind == NodeKind::Unknown {
            state.graph.mark_unit(id)?;
        }
        state.graph.set_solution(id, answer.text.clone())?;
        Ok(answer.text)
    }

    /// Expands `id` breadth-first, then solves it. Dependencies of any node
    /// met on the way are fully scheduled before that node is decomposed.
    pub fn schedule_bfs(&self, id: &ProblemId) -> Result<String, SchedulerError> {
        if let Some(solution) = self.view(id)?.solution {
            return Ok(solution);
        }
        if !self.state.lock().unwrap().expanding.insert(id.clone()) {
            return Err(SchedulerError::Cycle(vec![id.clone()]));
        }
        let result = self.expand_then_solve(id);
        self.state.lock().unwrap().expanding.remove(id);
        result
    }

    fn expand_then_solve(&self, id: &ProblemId) -> Result<String, SchedulerError> {
        self.expand_one(id)?;
        let mut unsolved: VecDeque<ProblemId> = self.view(id)?.children.into();
        while let Some(next) = unsolved.pop_front() {
            self.expand_one(&next)?;
            unsolved.extend(self.view(&next)?.children);
        }
        self.schedule_dfs(id, &[])
    }

    fn expand_one(&self, id: &ProblemId) -> Result<(), SchedulerError> {
        for dep in self.unsolved_dependencies(id)? {
            self.schedule_bfs(&dep)?;
        }
        self.substitute(id).map_err(|e| self.fail(id, e))?;
        self.decompose(id).map_err(|e| self.fail(id, e))
    }

    /// Postorder solve. `visited` is the path of problems above `id`; meeting
    /// one of them again is a cycle.
    pub fn schedule_dfs(&self, id: &ProblemId, visited: &[ProblemId]) -> Result<String, SchedulerError> {
        if let Some(pos) = visited.iter().position(|v| v == id) {
            let mut cycle = visited[pos..].to_vec();
            cycle.push(id.clone());
            return Err(SchedulerError::Cycle(cycle));
        }
        let mut path = visited.to_vec();
        path.push(id.clone());
        if let Some(solution) = self.view(id)?.solution {
            return Ok(solution);
        }
        for dep in self.unsolved_dependencies(id)? {
            self.schedule_dfs(&dep, &path)?;
        }
        self.substitute(id).map_err(|e| self.fail(id, e))?;
        self.decompose(id).map_err(|e| self.fail(id, e))?;
        let children = self.view(id)?.children;
        if self.config.parallelism <= 1 {
            for child in &children {
                self.schedule_dfs(child, &path)?;
            }
        } else {
            self.solve_children_in_waves(&children, &path)?;
        }
        self.merge_or_unit(id).map_err(|e| self.fail(id, e))
    }

    /// Solves ready siblings concurrently; a sibling is ready once all of
    /// its dependencies are solved.
    fn solve_children_in_waves(&self, children: &[ProblemId], path: &[ProblemId]) -> Result<(), SchedulerError> {
        loop {
            let (pending, ready) = {
                let state = self.state.lock().unwrap();
                let mut pending = Vec::new();
                let mut ready = Vec::new();
                for c in children {
                    let node = state.graph.node(c)?;
                    if node.is_solved() {
                        continue;
                    }
                    pending.push(c.clone());
                    let deps_done = node
                        .dependencies
                        .iter()
                        .all(|d| state.graph.node(d).map(|n| n.is_solved()).unwrap_or(false));
                    if deps_done {
                        ready.push(c.clone());
                    }
                }
                (pending, ready)
            };
            if pending.is_empty() {
                return Ok(());
            }
            let wave = if ready.is_empty() { vec![pending[0].clone()] } else { ready };
            if wave.len() == 1 {
                self.schedule_dfs(&wave[0], path)?;
                continue;
            }
            let results: Vec<Result<String, SchedulerError>> = std::thread::scope(|s| {
                let handles: Vec<_> = wave
                    .iter()
                    .map(|c| s.spawn(move || self.schedule_dfs(c, path)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("scheduler worker panicked"))
                    .collect()
            });
            for r in results {
                r?;
            }
        }
    }
}

trait LocalIdExt {
    fn parent_of_local(&self, local: &ProblemId) -> ProblemId;
}

impl LocalIdExt for ProblemId {
    /// Internal id of the sibling of `self` with the given local id.
    fn parent_of_local(&self, local: &ProblemId) -> ProblemId {
        match self.as_str().rsplit_once('/') {
            Some((parent, _)) => ProblemId::new(format!("{parent}/{local}")).expect("non-empty"),
            None => local.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub solution: String,
    pub graph: DecompositionGraph,
    pub trace: Vec<TraceEvent>,
    pub diagnostics: Vec<Diagnostic>,
}

/// A failed run, with everything recorded up to the failure.
#[derive(Debug, Clone, Error)]
#[error("{error}")]
pub struct SolveFailure {
    pub error: SchedulerError,
    pub graph: DecompositionGraph,
    pub trace: Vec<TraceEvent>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Decomposes, solves and merges `root_description` with the packaged prompts.
pub fn solve(
    root_description: &str,
    backend: &dyn Backend,
    config: &SchedulerConfig,
) -> Result<SolveOutcome, Box<SolveFailure>> {
    let failure = |error: SchedulerError| {
        Box::new(SolveFailure {
            error,
            graph: DecompositionGraph::new(root_description),
            trace: Vec::new(),
            diagnostics: Vec::new(),
        })
    };
    let prompts = config.prompt_set().map_err(|e| failure(e.into()))?;
    solve_graph(DecompositionGraph::new(root_description), backend, config, &prompts)
}

/// Runs the scheduler on a prepared graph (e.g. with class tags on the root).
pub fn solve_graph(
    graph: DecompositionGraph,
    backend: &dyn Backend,
    config: &SchedulerConfig,
    prompts: &PromptSet,
) -> Result<SolveOutcome, Box<SolveFailure>> {
    let root = graph.root().clone();
    let empty = graph.node(&root).map(|n| n.description.trim().is_empty()).unwrap_or(true);
    let scheduler = match Scheduler::new(graph.clone(), backend, prompts, config.clone()) {
        Ok(s) if !empty => s,
        Ok(_) | Err(_) => {
            let error = Scheduler::new(graph.clone(), backend, prompts, config.clone())
                .err()
                .unwrap_or(SchedulerError::EmptyProblem);
            return Err(Box::new(SolveFailure {
                error,
                graph,
                trace: Vec::new(),
                diagnostics: Vec::new(),
            }));
        }
    };
    let result = scheduler.schedule_bfs(&root);
    let (graph, trace, diagnostics) = scheduler.into_parts();
    match result {
        Ok(solution) => Ok(SolveOutcome {
            solution,
            graph,
            trace,
            diagnostics,
        }),
        Err(error) => Err(Box::new(SolveFailure {
            error,
            graph,
            trace,
            diagnostics,
        })),
    }
}
