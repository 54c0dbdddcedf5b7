//! Self-consistency baseline: sampled reasoning chains reduced by a pairwise
//! tournament of comparator calls.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::backends::{Backend, BackendError, CompletionRequest, UsageRecord, DEFAULT_MAX_TOKENS};
use crate::graph::ProblemId;
use crate::parser::extract_answer;
use crate::prompts::{PromptError, PromptSet};
use crate::scheduler::{Diagnostic, DiagnosticKind, Step, TraceEvent};

pub const GREEDY_TEMPERATURE: f64 = 0.0;
pub const SAMPLE_TEMPERATURE: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VoteConfig {
    pub k: usize,
    pub sample_temperature: f64,
    pub vote_temperature: f64,
    pub max_tokens: u32,
}

impl Default for VoteConfig {
    fn default() -> Self {
        VoteConfig {
            k: 5,
            sample_temperature: SAMPLE_TEMPERATURE,
            vote_temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VoteError {
    #[error("self-consistency needs at least one sample")]
    NoCandidates,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Choice {
    First,
    Second,
    /// The reply named neither candidate; the first one wins.
    Unparsed,
}

/// Picks one of two candidate answers for a problem.
pub trait Comparator {
    fn compare(&self, problem: &str, first: &str, second: &str) -> Result<Choice, VoteError>;
}

/// Prefers the answer that occurs more often in a fixed candidate list; ties
/// go to the answer that occurs first.
pub struct MajorityComparator {
    rank: HashMap<String, (usize, std::cmp::Reverse<usize>)>,
}

impl MajorityComparator {
    pub fn new(candidates: &[String]) -> Self {
        let mut rank: HashMap<String, (usize, std::cmp::Reverse<usize>)> = HashMap::new();
        for (i, c) in candidates.iter().enumerate() {
            rank.entry(c.clone())
                .and_modify(|r| r.0 += 1)
                .or_insert((1, std::cmp::Reverse(i)));
        }
        MajorityComparator { rank }
    }
}

impl Comparator for MajorityComparator {
    fn compare(&self, _problem: &str, first: &str, second: &str) -> Result<Choice, VoteError> {
        let key = |a: &str| self.rank.get(a).copied().unwrap_or((0, std::cmp::Reverse(usize::MAX)));
        Ok(if key(second) > key(first) { Choice::Second } else { Choice::First })
    }
}

/// Asks the model, through the vote prompt, which candidate is more consistent.
pub struct ModelComparator<'a> {
    backend: &'a dyn Backend,
    prompts: &'a PromptSet,
    temperature: f64,
    max_tokens: u32,
    events: std::sync::Mutex<Vec<(String, String, UsageRecord)>>,
}

impl<'a> ModelComparator<'a> {
    pub fn new(backend: &'a dyn Backend, prompts: &'a PromptSet, config: &VoteConfig) -> Self {
        ModelComparator {
            backend,
            prompts,
            temperature: config.vote_temperature,
            max_tokens: config.max_tokens,
            events: Default::default(),
        }
    }

    fn take_events(&self) -> Vec<(String, String, UsageRecord)> {
        std::mem::take(&mut self.events.lock().unwrap())
    }
}

impl Comparator for ModelComparator<'_> {
    fn compare(&self, problem: &str, first: &str, second: &str) -> Result<Choice, VoteError> {
        let prompt = self.prompts.vote(problem, first, second)?;
        let request = CompletionRequest::new(prompt)
            .with_temperature(self.temperature)
            .with_max_tokens(self.max_tokens);
        let completion = self.backend.complete(&request)?;
        let choice = match extract_answer(&completion.text).trim() {
            "1" => Choice::First,
            "2" => Choice::Second,
            _ => Choice::Unparsed,
        };
        self.events
            .lock()
            .unwrap()
            .push((request.prompt, completion.text, completion.usage));
        Ok(choice)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoteOutcome {
    pub answer: String,
    /// Position of the winner in the candidate list.
    pub index: usize,
    pub comparator_calls: usize,
    /// Comparisons whose reply could not be read, as (first, second) indices.
    pub unparsed: Vec<(usize, usize)>,
}

/// Balanced tournament: each half picks a winner, then one comparator call
/// decides between the two. Uses `len - 1` comparator calls.
pub fn binary_search_vote(
    candidates: &[String],
    problem: &str,
    comparator: &dyn Comparator,
) -> Result<VoteOutcome, VoteError> {
    if candidates.is_empty() {
        return Err(VoteError::NoCandidates);
    }
    let mut calls = 0;
    let mut unparsed = Vec::new();
    let index = tournament(candidates, 0, candidates.len(), problem, comparator, &mut calls, &mut unparsed)?;
    Ok(VoteOutcome {
        answer: candidates[index].clone(),
        index,
        comparator_calls: calls,
        unparsed,
    })
}

fn tournament(
    candidates: &[String],
    lo: usize,
    hi: usize,
    problem: &str,
    comparator: &dyn Comparator,
    calls: &mut usize,
    unparsed: &mut Vec<(usize, usize)>,
) -> Result<usize, VoteError> {
    if hi - lo == 1 {
        return Ok(lo);
    }
    let mid = lo + (hi - lo) / 2;
    let a = tournament(candidates, lo, mid, problem, comparator, calls, unparsed)?;
    let b = tournament(candidates, mid, hi, problem, comparator, calls, unparsed)?;
    *calls += 1;
    Ok(match comparator.compare(problem, &candidates[a], &candidates[b])? {
        Choice::First => a,
        Choice::Second => b,
        Choice::Unparsed => {
            unparsed.push((a, b));
            a
        }
    })
}

#[derive(Debug, Clone)]
pub struct SelfConsistencyOutcome {
    pub answer: String,
    pub candidates: Vec<String>,
    pub trace: Vec<TraceEvent>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Sample 1 is greedy; samples 2..k use the sampling temperature.
pub fn sample_candidates(
    problem: &str,
    backend: &dyn Backend,
    prompts: &PromptSet,
    config: &VoteConfig,
) -> Result<Vec<(String, TraceEvent)>, VoteError> {
    if config.k == 0 {
        return Err(VoteError::NoCandidates);
    }
    let prompt = prompts.unit(problem)?;
    (0..config.k)
        .map(|i| {
            let temperature = if i == 0 { GREEDY_TEMPERATURE } else { config.sample_temperature };
            let request = CompletionRequest::new(prompt.clone())
                .with_temperature(temperature)
                .with_max_tokens(config.max_tokens);
            let completion = backend.complete(&request)?;
            let answer = extract_answer(&completion.text);
            Ok((
                answer,
                TraceEvent {
                    seq: i,
                    step: Step::Sample,
                    node: ProblemId::root(),
                    prompt: request.prompt,
                    completion: completion.text,
                    usage: completion.usage,
                    verdict: None,
                },
            ))
        })
        .collect()
}

/// Full baseline: `k` samples with the prompt set's unit method, then a
/// model-mediated tournament over the extracted answers.
pub fn self_consistency(
    problem: &str,
    backend: &dyn Backend,
    prompts: &PromptSet,
    config: &VoteConfig,
) -> Result<SelfConsistencyOutcome, VoteError> {
    let samples = sample_candidates(problem, backend, prompts, config)?;
    let (candidates, mut trace): (Vec<String>, Vec<TraceEvent>) = samples.into_iter().unzip();
    let comparator = ModelComparator::new(backend, prompts, config);
    let outcome = binary_search_vote(&candidates, problem, &comparator)?;
    for (prompt, completion, usage) in comparator.take_events() {
        trace.push(TraceEvent {
            seq: trace.len(),
            step: Step::Vote,
            node: ProblemId::root(),
            prompt,
            completion,
            usage,
            verdict: None,
        });
    }
    let diagnostics = outcome
        .unparsed
        .iter()
        .map(|(a, b)| Diagnostic {
            kind: DiagnosticKind::VoteFallback,
            node: ProblemId::root(),
            message: format!("unreadable vote between candidates {} and {}; kept {}", a + 1, b + 1, a + 1),
        })
        .collect();
    Ok(SelfConsistencyOutcome {
        answer: outcome.answer,
        candidates,
        trace,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct PreferSecond;
    impl Comparator for PreferSecond {
        fn compare(&self, _: &str, _: &str, _: &str) -> Result<Choice, VoteError> {
            Ok(Choice::Second)
        }
    }

    struct Garbled;
    impl Comparator for Garbled {
        fn compare(&self, _: &str, _: &str, _: &str) -> Result<Choice, VoteError> {
            Ok(Choice::Unparsed)
        }
    }

    fn strings(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn singleton_and_forced_choice() {
        let c = strings(&["A"]);
        let out = binary_search_vote(&c, "p", &PreferSecond).unwrap();
        assert_eq!((out.answer.as_str(), out.comparator_calls), ("A", 0));
        let c = strings(&["A", "B"]);
        assert_eq!(binary_search_vote(&c, "p", &PreferSecond).unwrap().answer, "B");
        assert!(matches!(binary_search_vote(&[], "p", &PreferSecond), Err(VoteError::NoCandidates)));
    }

    #[test]
    fn majority() {
        let c = strings(&["A", "A", "B"]);
        assert_eq!(binary_search_vote(&c, "p", &MajorityComparator::new(&c)).unwrap().answer, "A");
        let c = strings(&["B", "A", "A", "C", "A", "B"]);
        let out = binary_search_vote(&c, "p", &MajorityComparator::new(&c)).unwrap();
        assert_eq!(out.answer, "A");
        assert_eq!(out.comparator_calls, 5);
    }

    #[test]
    fn unreadable_votes_keep_first_operand() {
        let c = strings(&["x", "y", "z"]);
        let out = binary_search_vote(&c, "p", &Garbled).unwrap();
        assert_eq!(out.index, 0);
        assert_eq!(out.unparsed.len(), 2);
    }
}
