//! Turns raw completions into structured decompositions and answers.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{ProblemId, SubProblemSpec};

pub const UNIT_SENTENCE: &str = "this is a unit problem";

static PLACEHOLDER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{(P-\d+)\}").unwrap());
static LEADING_ID: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\[\s*([^\]]*?)\s*\]\s*").unwrap());
static ANSWER_PAIR: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?s)<ANSWER>(.*?)</ANSWER>").unwrap());

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DecompositionMode {
    #[default]
    Independent,
    WithDependencies,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedSub {
    pub id: Option<ProblemId>,
    pub description: String,
    pub dep_refs: BTreeSet<ProblemId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decomposition {
    UnitProblem,
    SubProblems(Vec<ParsedSub>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecompositionResult {
    pub variant: Decomposition,
    pub raw: String,
}

impl DecompositionResult {
    pub fn is_unit(&self) -> bool {
        matches!(self.variant, Decomposition::UnitProblem)
    }

    /// Sub-problem specs ready for the graph. Independent-mode items get
    /// positional ids `P-1..P-k`.
    pub fn into_specs(self) -> Vec<SubProblemSpec> {
        match self.variant {
            Decomposition::UnitProblem => Vec::new(),
            Decomposition::SubProblems(subs) => subs
                .into_iter()
                .enumerate()
                .map(|(i, sub)| SubProblemSpec {
                    id: sub.id.unwrap_or_else(|| ProblemId::local(i + 1)),
                    description: sub.description,
                    dependencies: sub.dep_refs,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("completion has neither a unit declaration nor bullet items")]
    MalformedDecomposition,
    #[error("sub-problem {from} references {missing}, which is not in the bullet list")]
    DanglingDependency { from: ProblemId, missing: ProblemId },
    #[error("bullet item {0} has no [id] prefix")]
    MissingId(usize),
    #[error("{got} sub-problems exceed width {width}")]
    WidthExceeded { got: usize, width: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SubstitutionError {
    #[error("no solution available for dependency {0}")]
    UnresolvedDependency(ProblemId),
}

/// Every well-formed `{P-k}` placeholder in `text`.
pub fn placeholders(text: &str) -> BTreeSet<ProblemId> {
    PLACEHOLDER
        .captures_iter(text)
        .filter_map(|c| ProblemId::new(&c[1]))
        .collect()
}

fn is_unit_declaration(region: &str) -> bool {
    region.to_lowercase().contains(UNIT_SENTENCE)
}

fn strip_bullet(line: &str) -> Option<&str> {
    let line = line.trim_start();
    for marker in ["- ", "* ", "• "] {
        if let Some(rest) = line.strip_prefix(marker) {
            return Some(rest.trim());
        }
    }
    None
}

pub fn parse_decomposition(
    text: &str,
    mode: DecompositionMode,
    width_limit: usize,
) -> Result<DecompositionResult, ParseError> {
    let tagged = answer_region(text);
    let region = tagged.as_deref().unwrap_or(text);

    if is_unit_declaration(region) {
        return Ok(DecompositionResult {
            variant: Decomposition::UnitProblem,
            raw: text.to_string(),
        });
    }

    let mut subs = Vec::new();
    for line in region.lines() {
        let Some(item) = strip_bullet(line) else {
            continue;
        };
        if item.is_empty() {
            continue;
        }
        let index = subs.len() + 1;
        let (id, description) = match mode {
            DecompositionMode::Independent => (None, item.to_string()),
            DecompositionMode::WithDependencies => {
                let caps = LEADING_ID.captures(item).ok_or(ParseError::MissingId(index))?;
                let id = ProblemId::new(&caps[1]).ok_or(ParseError::MissingId(index))?;
                (Some(id), item[caps.get(0).unwrap().end()..].trim().to_string())
            }
        };
        if description.is_empty() {
            continue;
        }
        let dep_refs = match mode {
            DecompositionMode::Independent => BTreeSet::new(),
            DecompositionMode::WithDependencies => placeholders(&description),
        };
        subs.push(ParsedSub {
            id,
            description,
            dep_refs,
        });
    }

    if subs.is_empty() {
        return Err(ParseError::MalformedDecomposition);
    }
    if subs.len() > width_limit {
        return Err(ParseError::WidthExceeded {
            got: subs.len(),
            width: width_limit,
        });
    }
    if mode == DecompositionMode::WithDependencies {
        let ids: BTreeSet<&ProblemId> = subs.iter().filter_map(|s| s.id.as_ref()).collect();
        for sub in &subs {
            if let Some(missing) = sub.dep_refs.iter().find(|d| !ids.contains(d)) {
                return Err(ParseError::DanglingDependency {
                    from: sub.id.clone().expect("dependency mode ids are present"),
                    missing: missing.clone(),
                });
            }
        }
    }
    Ok(DecompositionResult {
        variant: Decomposition::SubProblems(subs),
        raw: text.to_string(),
    })
}

/// Replaces each `{P-k}` with the matching solution text.
pub fn substitute_dependencies(
    description: &str,
    solutions: &BTreeMap<ProblemId, String>,
) -> Result<String, SubstitutionError> {
    let mut out = String::with_capacity(description.len());
    let mut last = 0;
    for caps in PLACEHOLDER.captures_iter(description) {
        let whole = caps.get(0).unwrap();
        let id = ProblemId::new(&caps[1]).expect("regex guarantees non-empty id");
        let solution = solutions
            .get(&id)
            .ok_or(SubstitutionError::UnresolvedDependency(id))?;
        out.push_str(&description[last..whole.start()]);
        out.push_str(solution);
        last = whole.end();
    }
    out.push_str(&description[last..]);
    Ok(out)
}

/// Content of the last complete `<ANSWER>...</ANSWER>` pair, if any.
fn answer_region(text: &str) -> Option<String> {
    ANSWER_PAIR
        .captures_iter(text)
        .last()
        .map(|c| c[1].to_string())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractedAnswer {
    pub text: String,
    /// An `<ANSWER>` tag was opened and never closed.
    pub malformed_tags: bool,
}

pub fn extract_answer(text: &str) -> String {
    extract_answer_detailed(text).text
}

pub fn extract_answer_detailed(text: &str) -> ExtractedAnswer {
    let last_open = text.rfind("<ANSWER>");
    let last_close = text.rfind("</ANSWER>");
    let malformed_tags = match (last_open, last_close) {
        (Some(open), Some(close)) => open > close,
        (Some(_), None) => true,
        _ => false,
    };
    let body = answer_region(text).unwrap_or_else(|| text.to_string());
    ExtractedAnswer {
        text: strip_quotes(body.trim()).to_string(),
        malformed_tags,
    }
}

/// Removes one layer of surrounding double quotes.
pub fn strip_quotes(text: &str) -> &str {
    let t = text.trim();
    if t.len() >= 2 && t.starts_with('"') && t.ends_with('"') {
        t[1..t.len() - 1].trim()
    } else {
        t
    }
}
