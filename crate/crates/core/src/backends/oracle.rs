use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, Completion, CompletionRequest, UsageRecord};
use crate::benchmarks::{apply_merge_rule, merge_rule, normalize, partition_sizes, Problem};
use crate::parser::DecompositionMode;
use crate::prompts::{detect_meta_task, parse_prompt_problem, MetaTask};

static WORKERS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"You manage (\d+) workers").unwrap());

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    /// Lists of at most this many items are declared unit problems.
    pub unit_threshold: usize,
    /// Width used when the prompt does not state one.
    pub default_width: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            unit_threshold: 5,
            default_width: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleAction {
    Unit,
    /// Bullet items, already carrying `[P-k]` prefixes in dependency mode.
    Split(Vec<String>),
    Answer(String),
}

/// Deterministic, always-correct backend for the benchmark tasks.
#[derive(Debug, Clone, Default)]
pub struct OracleBackend {
    config: OracleConfig,
}

impl OracleBackend {
    pub fn new(config: OracleConfig) -> Self {
        OracleBackend { config }
    }

    /// Decomposition policy: unit for short lists, otherwise contiguous
    /// partitions. In dependency mode length reversal is split by step
    /// instead (lengths first, then a reversal that references them).
    pub fn policy(
        &self,
        description: &str,
        width: usize,
        mode: DecompositionMode,
    ) -> Result<OracleAction, BackendError> {
        let problem = Problem::parse(description)
            .ok_or_else(|| BackendError::UnparsableBenchmarkProblem(description.to_string()))?;
        let items = problem.items();
        if items.len() <= self.config.unit_threshold {
            return Ok(OracleAction::Unit);
        }
        if mode == DecompositionMode::WithDependencies {
            if let Problem::LengthReversal { words } = &problem {
                if width >= 2 {
                    let lengths = Problem::WordLengths {
                        words: words.clone(),
                    };
                    return Ok(OracleAction::Split(vec![
                        format!("[P-1] {}", lengths.describe()),
                        "[P-2] Reverse the following list: {P-1}".to_string(),
                    ]));
                }
            }
        }
        let mut start = 0;
        let mut bullets = Vec::new();
        for (k, size) in partition_sizes(items.len(), width).into_iter().enumerate() {
            let part = problem.with_items(items[start..start + size].to_vec());
            start += size;
            bullets.push(match mode {
                DecompositionMode::Independent => part.describe(),
                DecompositionMode::WithDependencies => format!("[P-{}] {}", k + 1, part.describe()),
            });
        }
        Ok(OracleAction::Split(bullets))
    }

    pub fn decide(&self, prompt: &str) -> Result<OracleAction, BackendError> {
        let meta = detect_meta_task(prompt)
            .ok_or_else(|| BackendError::Protocol("prompt matches no meta-task".into()))?;
        let section = parse_prompt_problem(prompt)
            .ok_or_else(|| BackendError::Protocol("prompt has no problem section".into()))?;
        let unparsable = || BackendError::UnparsableBenchmarkProblem(section.problem.clone());
        match meta {
            MetaTask::Decompose | MetaTask::DecomposeWithDeps => {
                let width = WORKERS
                    .captures(prompt)
                    .and_then(|c| c[1].parse().ok())
                    .unwrap_or(self.config.default_width);
                let mode = if meta == MetaTask::Decompose {
                    DecompositionMode::Independent
                } else {
                    DecompositionMode::WithDependencies
                };
                self.policy(&section.problem, width, mode)
            }
            MetaTask::UnitCoT | MetaTask::UnitLtM => {
                let problem = Problem::parse(&section.problem).ok_or_else(unparsable)?;
                Ok(OracleAction::Answer(problem.solve()))
            }
            MetaTask::Merge => {
                let parent = Problem::parse(&section.problem).ok_or_else(unparsable)?;
                let children: Vec<_> = section
                    .subsolutions
                    .iter()
                    .map(|s| Problem::parse(&s.description))
                    .collect();
                let answer = match merge_rule(&parent, &children) {
                    Some(rule) => {
                        let sols: Vec<String> =
                            section.subsolutions.iter().map(|s| s.solution.clone()).collect();
                        apply_merge_rule(rule, &sols)
                    }
                    None => parent.solve(),
                };
                Ok(OracleAction::Answer(answer))
            }
            MetaTask::Vote => {
                let problem = Problem::parse(&section.problem).ok_or_else(unparsable)?;
                let truth = normalize(&problem.solve());
                let pick = section
                    .subsolutions
                    .iter()
                    .position(|c| normalize(&c.solution) == truth)
                    .unwrap_or(0);
                Ok(OracleAction::Answer((pick + 1).to_string()))
            }
        }
    }
}

pub(crate) fn render_action(action: &OracleAction) -> String {
    match action {
        OracleAction::Unit => {
            "The list is short enough to be handled directly. <ANSWER>This is a unit problem.</ANSWER>"
                .to_string()
        }
        OracleAction::Split(bullets) => {
            let mut out = format!(
                "We can split the problem into {} parts.\n<ANSWER>\n",
                bullets.len()
            );
            for b in bullets {
                out.push_str("- ");
                out.push_str(b);
                out.push('\n');
            }
            out.push_str("</ANSWER>");
            out
        }
        OracleAction::Answer(a) => format!("<ANSWER>{a}</ANSWER>"),
    }
}

impl Backend for OracleBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        request.validate()?;
        let text = render_action(&self.decide(&request.prompt)?);
        let usage = UsageRecord::estimate(&request.prompt, &text);
        Ok(Completion { text, usage })
    }

    fn name(&self) -> String {
        "oracle".into()
    }
}
