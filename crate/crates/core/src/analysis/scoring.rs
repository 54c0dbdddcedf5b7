use std::cell::RefCell;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::benchmarks::{answers_match, apply_merge_rule, merge_rule, MergeRule, Problem};
use crate::graph::{DecompositionGraph, ProblemId};
use crate::parser::{extract_answer, parse_decomposition, substitute_dependencies, Decomposition, DecompositionMode};
use crate::prompts::parse_prompt_problem;
use crate::scheduler::{Step, TraceEvent, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoringContext {
    pub mode: DecompositionMode,
    pub width: usize,
}

impl Default for ScoringContext {
    fn default() -> Self {
        ScoringContext {
            mode: DecompositionMode::Independent,
            width: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRun {
    pub root: Verdict,
    /// Each node's solution against the ground truth of the problem it was
    /// meant to solve (dependencies filled in with correct answers).
    pub nodes: BTreeMap<ProblemId, Verdict>,
    pub trace: Vec<TraceEvent>,
    pub recovery: bool,
    pub propagation: bool,
}

impl ScoredRun {
    pub fn node(&self, id: &str) -> Option<Verdict> {
        self.nodes.get(&ProblemId::new(id)?).copied()
    }
}

struct Scorer<'a> {
    graph: &'a DecompositionGraph,
    root_problem: Option<&'a Problem>,
    ctx: ScoringContext,
    intended: RefCell<BTreeMap<ProblemId, Option<Problem>>>,
}

impl Scorer<'_> {
    fn intended(&self, id: &ProblemId) -> Option<Problem> {
        if let Some(hit) = self.intended.borrow().get(id) {
            return hit.clone();
        }
        let value = if id.is_root() {
            self.root_problem.cloned()
        } else {
            self.graph.node(id).ok().and_then(|node| {
                let text = node.original_description.as_deref().unwrap_or(&node.description);
                let mut truths = BTreeMap::new();
                for dep in &node.dependencies {
                    let local = ProblemId::new(dep.local_part())?;
                    truths.insert(local, self.intended(dep)?.solve());
                }
                Problem::parse(&substitute_dependencies(text, &truths).ok()?)
            })
        };
        self.intended.borrow_mut().insert(id.clone(), value.clone());
        value
    }

    fn actual(&self, id: &ProblemId) -> Option<Problem> {
        if id.is_root() {
            return self.root_problem.cloned();
        }
        Problem::parse(&self.graph.node(id).ok()?.description)
    }

    fn answer_verdict(&self, answer: &str, problem: Option<Problem>) -> Verdict {
        match problem {
            Some(p) if answers_match(answer, &p.solve()) => Verdict::Correct,
            _ => Verdict::Incorrect,
        }
    }

    fn event_verdict(&self, event: &TraceEvent) -> Option<Verdict> {
        self.root_problem?;
        match event.step {
            Step::Decompose => self.decomposition_verdict(event),
            Step::UnitSolve => Some(self.answer_verdict(&extract_answer(&event.completion), self.actual(&event.node))),
            Step::Merge => Some(self.merge_verdict(event)),
            Step::Sample => Some(self.answer_verdict(&extract_answer(&event.completion), self.root_problem.cloned())),
            Step::Substitute | Step::Vote => None,
        }
    }

    /// Unit declarations carry no verdict. A split is correct when its
    /// children, with dependencies answered correctly, reassemble the parent.
    fn decomposition_verdict(&self, event: &TraceEvent) -> Option<Verdict> {
        let parsed = match parse_decomposition(&event.completion, self.ctx.mode, self.ctx.width) {
            Ok(p) => p,
            Err(_) => return Some(Verdict::Incorrect),
        };
        if let Decomposition::UnitProblem = parsed.variant {
            return None;
        }
        let Some(parent) = self.actual(&event.node) else {
            return Some(Verdict::Incorrect);
        };
        let specs = parsed.into_specs();
        let mut truths: BTreeMap<ProblemId, String> = BTreeMap::new();
        let mut children: BTreeMap<ProblemId, Option<Problem>> = BTreeMap::new();
        // resolve in dependency order; anything left over is unresolvable
        for _ in 0..specs.len() {
            for spec in &specs {
                if children.contains_key(&spec.id) || !spec.dependencies.iter().all(|d| truths.contains_key(d)) {
                    continue;
                }
                let problem = substitute_dependencies(&spec.description, &truths)
                    .ok()
                    .and_then(|d| Problem::parse(&d));
                if let Some(p) = &problem {
                    truths.insert(spec.id.clone(), p.solve());
                }
                children.insert(spec.id.clone(), problem);
            }
        }
        let ordered: Vec<Option<Problem>> = specs.iter().map(|s| children.get(&s.id).cloned().flatten()).collect();
        let ok = match merge_rule(&parent, &ordered) {
            Some(MergeRule::Concatenate { .. }) => {
                let items: Vec<&String> = ordered.iter().flatten().flat_map(|p| p.items()).collect();
                items.len() == parent.items().len() && items.iter().zip(parent.items()).all(|(a, b)| *a == b)
            }
            Some(rule @ MergeRule::LastStep) => {
                let sols: Vec<String> = ordered.iter().flatten().map(Problem::solve).collect();
                answers_match(&apply_merge_rule(rule, &sols), &parent.solve())
            }
            None => false,
        };
        Some(if ok { Verdict::Correct } else { Verdict::Incorrect })
    }

    /// A merge is correct when it yields the parent's true answer or
    /// faithfully combines the sub-solutions it was given.
    fn merge_verdict(&self, event: &TraceEvent) -> Verdict {
        let answer = extract_answer(&event.completion);
        let parent = self.actual(&event.node);
        if self.answer_verdict(&answer, parent.clone()) == Verdict::Correct {
            return Verdict::Correct;
        }
        let (Some(parent), Some(given)) = (parent, parse_prompt_problem(&event.prompt)) else {
            return Verdict::Incorrect;
        };
        let Ok(node) = self.graph.node(&event.node) else {
            return Verdict::Incorrect;
        };
        let children: Vec<Option<Problem>> = node.children.iter().map(|c| self.actual(c)).collect();
        let sols: Vec<String> = given.subsolutions.into_iter().map(|s| s.solution).collect();
        match merge_rule(&parent, &children) {
            Some(rule) if sols.len() == children.len() && answers_match(&answer, &apply_merge_rule(rule, &sols)) => {
                Verdict::Correct
            }
            _ => Verdict::Incorrect,
        }
    }
}

/// Labels every trace event and node of one run. Without a benchmark root
/// nothing can be judged and all verdicts are `Unknown`.
pub fn score_run(
    graph: &DecompositionGraph,
    trace: &[TraceEvent],
    root_problem: Option<&Problem>,
    ctx: ScoringContext,
) -> ScoredRun {
    let scorer = Scorer {
        graph,
        root_problem,
        ctx,
        intended: RefCell::new(BTreeMap::new()),
    };
    let trace: Vec<TraceEvent> = trace
        .iter()
        .map(|e| TraceEvent {
            verdict: if root_problem.is_none() && e.step != Step::Substitute && e.step != Step::Vote {
                Some(Verdict::Unknown)
            } else {
                scorer.event_verdict(e)
            },
            ..e.clone()
        })
        .collect();
    let nodes: BTreeMap<ProblemId, Verdict> = graph
        .nodes()
        .map(|n| {
            let v = if root_problem.is_none() {
                Verdict::Unknown
            } else {
                match &n.solution {
                    Some(s) => scorer.answer_verdict(s, scorer.intended(&n.id)),
                    None => Verdict::Incorrect,
                }
            };
            (n.id.clone(), v)
        })
        .collect();
    let root = nodes.get(graph.root()).copied().unwrap_or(Verdict::Unknown);
    let child_wrong = graph
        .node(graph.root())
        .map(|r| r.children.iter().any(|c| nodes.get(c) == Some(&Verdict::Incorrect)))
        .unwrap_or(false);
    ScoredRun {
        root,
        recovery: root == Verdict::Correct && child_wrong,
        propagation: root == Verdict::Incorrect && child_wrong,
        nodes,
        trace,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepCount {
    pub correct: u64,
    pub total: u64,
}

impl StepCount {
    pub fn rate(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }

    fn add(&mut self, v: Verdict) {
        self.total += 1;
        if v == Verdict::Correct {
            self.correct += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepEstimates {
    pub phi_d: Option<f64>,
    pub phi_u: Option<f64>,
    pub phi_m: Option<f64>,
    pub phi_rdd: f64,
    pub decompose: StepCount,
    pub unit: StepCount,
    pub merge: StepCount,
    pub runs: u64,
    pub recoveries: u64,
    pub propagations: u64,
}

/// Pools step outcomes over all events of all runs; φ_RDD is the root
/// exact-match rate.
pub fn estimate_step_accuracies(runs: &[ScoredRun]) -> Result<StepEstimates, AnalysisError> {
    let mut decompose = StepCount::default();
    let mut unit = StepCount::default();
    let mut merge = StepCount::default();
    let mut roots = StepCount::default();
    for run in runs {
        if run.root == Verdict::Unknown {
            return Err(AnalysisError::MissingVerdicts);
        }
        roots.add(run.root);
        for e in &run.trace {
            let Some(v) = e.verdict else { continue };
            if v == Verdict::Unknown {
                return Err(AnalysisError::MissingVerdicts);
            }
            match e.step {
                Step::Decompose => decompose.add(v),
                Step::UnitSolve => unit.add(v),
                Step::Merge => merge.add(v),
                _ => {}
            }
        }
    }
    Ok(StepEstimates {
        phi_d: decompose.rate(),
        phi_u: unit.rate(),
        phi_m: merge.rate(),
        phi_rdd: roots.rate().ok_or(AnalysisError::MissingVerdicts)?,
        decompose,
        unit,
        merge,
        runs: runs.len() as u64,
        recoveries: runs.iter().filter(|r| r.recovery).count() as u64,
        propagations: runs.iter().filter(|r| r.propagation).count() as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::OracleBackend;
    use crate::benchmarks::{generate_one, Task};
    use crate::scheduler::{solve, SchedulerConfig};

    fn oracle_run(task: Task, n0: usize, mode: DecompositionMode) -> ScoredRun {
        let inst = generate_one(task, n0, 3).unwrap();
        let config = SchedulerConfig { mode, ..Default::default() };
        let out = solve(&inst.description, &OracleBackend::default(), &config).unwrap();
        score_run(&out.graph, &out.trace, Some(&inst.problem()), ScoringContext { mode, width: 4 })
    }

    #[test]
    fn oracle_runs_are_perfect() {
        let runs = vec![
            oracle_run(Task::LetterConcat, 20, DecompositionMode::Independent),
            oracle_run(Task::LengthReversal, 9, DecompositionMode::WithDependencies),
        ];
        let est = estimate_step_accuracies(&runs).unwrap();
        assert_eq!((est.phi_d, est.phi_u, est.phi_m, est.phi_rdd), (Some(1.0), Some(1.0), Some(1.0), 1.0));
        assert_eq!(est.recoveries, 0);
    }

    #[test]
    fn unknown_root_is_rejected() {
        let out = solve("What is two plus two?", &OracleBackend::default(), &SchedulerConfig::default());
        let graph = match out {
            Ok(o) => o.graph,
            Err(f) => f.graph,
        };
        let run = score_run(&graph, &[], None, ScoringContext::default());
        assert_eq!(run.root, Verdict::Unknown);
        assert_eq!(estimate_step_accuracies(&[run]), Err(AnalysisError::MissingVerdicts));
    }
}
