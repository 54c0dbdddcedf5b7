//! Letter concatenation and length reversal: instance generation, parsing of
//! rendered problem statements, ground truth and exact-match scoring.

use std::io::{BufRead, Write};
use std::sync::LazyLock;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

static WORDS_ASSET: &str = include_str!("../assets/words.txt");

/// Packaged word pool: every entry has at least four characters.
pub static WORD_POOL: LazyLock<Vec<&'static str>> = LazyLock::new(|| {
    WORDS_ASSET
        .lines()
        .map(str::trim)
        .filter(|w| !w.is_empty())
        .collect()
});

static LETTER_CONCAT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)characters? at index (\d+) of each (?:word|item) in the (?:following )?list:?\s*\[([^\]]*)\]").unwrap()
});
static LENGTH_SUBST: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)substitute each word in the (?:following )?list:?\s*\[([^\]]*)\]\s*with its length").unwrap()
});
static THEN_REVERSE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)then reverse the order").unwrap());
static REVERSE_LIST: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?is)^\s*reverse the (?:following )?list:?(.*)$").unwrap());

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    LetterConcat,
    LengthReversal,
}

impl Task {
    pub fn class_tag(self) -> &'static str {
        match self {
            Task::LetterConcat => "letter_concat",
            Task::LengthReversal => "length_reversal",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Task> {
        match tag.to_ascii_lowercase().replace('-', "_").as_str() {
            "letter_concat" | "letterconcat" => Some(Task::LetterConcat),
            "length_reversal" | "lengthreversal" => Some(Task::LengthReversal),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BenchmarkError {
    #[error("difficulty must be at least 1")]
    InvalidDifficulty,
    #[error("instance count must be at least 1")]
    InvalidCount,
    #[error("malformed instance record on line {line}: {reason}")]
    BadRecord { line: usize, reason: String },
    #[error("io error: {0}")]
    Io(String),
}

/// A problem statement recognised as one of the benchmark classes.
///
/// `WordLengths` and `ListReversal` are the two halves of length reversal,
/// which show up as sub-problems when the task is split by step rather than
/// by data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Problem {
    LetterConcat { words: Vec<String>, index: usize },
    WordLengths { words: Vec<String> },
    ListReversal { items: Vec<String> },
    LengthReversal { words: Vec<String> },
}

fn split_list(inner: &str) -> Vec<String> {
    inner
        .split(',')
        .map(|w| w.trim().trim_matches('"').trim().to_string())
        .filter(|w| !w.is_empty())
        .collect()
}

fn bracket_list(words: &[String]) -> String {
    format!("[{}]", words.join(", "))
}

impl Problem {
    pub fn parse(description: &str) -> Option<Problem> {
        if let Some(c) = LETTER_CONCAT.captures(description) {
            let index = c[1].parse().ok()?;
            let words = split_list(&c[2]);
            return (!words.is_empty()).then_some(Problem::LetterConcat { words, index });
        }
        if let Some(c) = LENGTH_SUBST.captures(description) {
            let words = split_list(&c[1]);
            if words.is_empty() {
                return None;
            }
            return Some(if THEN_REVERSE.is_match(description) {
                Problem::LengthReversal { words }
            } else {
                Problem::WordLengths { words }
            });
        }
        if let Some(c) = REVERSE_LIST.captures(description) {
            let body = c[1].trim().trim_end_matches('.').trim();
            let body = body
                .strip_prefix('[')
                .and_then(|b| b.strip_suffix(']'))
                .unwrap_or(body);
            let items: Vec<String> = if body.contains(',') {
                split_list(body)
            } else {
                body.split_whitespace().map(str::to_string).collect()
            };
            return (!items.is_empty()).then_some(Problem::ListReversal { items });
        }
        None
    }

    pub fn describe(&self) -> String {
        match self {
            Problem::LetterConcat { words, index } => format!(
                "Concatenate using a space the characters at index {index} of each word in the list {}; indices start at zero.",
                bracket_list(words)
            ),
            Problem::WordLengths { words } => format!(
                "Substitute each word in the list {} with its length (number of characters).",
                bracket_list(words)
            ),
            Problem::ListReversal { items } => {
                format!("Reverse the following list: {}", items.join(" "))
            }
            Problem::LengthReversal { words } => format!(
                "Substitute each word in the list {} with its length (number of characters), and then reverse the order of the items in the list.",
                bracket_list(words)
            ),
        }
    }

    pub fn class_name(&self) -> &'static str {
        match self {
            Problem::LetterConcat { .. } => "letter_concat",
            Problem::WordLengths { .. } => "word_lengths",
            Problem::ListReversal { .. } => "list_reversal",
            Problem::LengthReversal { .. } => "length_reversal",
        }
    }

    pub fn items(&self) -> &[String] {
        match self {
            Problem::LetterConcat { words, .. }
            | Problem::WordLengths { words }
            | Problem::LengthReversal { words } => words,
            Problem::ListReversal { items } => items,
        }
    }

    /// Same class and parameters over a different item list.
    pub fn with_items(&self, items: Vec<String>) -> Problem {
        match self {
            Problem::LetterConcat { index, .. } => Problem::LetterConcat {
                words: items,
                index: *index,
            },
            Problem::WordLengths { .. } => Problem::WordLengths { words: items },
            Problem::ListReversal { .. } => Problem::ListReversal { items },
            Problem::LengthReversal { .. } => Problem::LengthReversal { words: items },
        }
    }

    pub fn solve(&self) -> String {
        let lengths = |words: &[String]| -> Vec<String> {
            words.iter().map(|w| w.chars().count().to_string()).collect()
        };
        match self {
            Problem::LetterConcat { words, index } => words
                .iter()
                .map(|w| w.chars().nth(*index).map(String::from).unwrap_or_default())
                .collect::<Vec<_>>()
                .join(" "),
            Problem::WordLengths { words } => lengths(words).join(" "),
            Problem::ListReversal { items } => {
                items.iter().rev().cloned().collect::<Vec<_>>().join(" ")
            }
            Problem::LengthReversal { words } => {
                let mut l = lengths(words);
                l.reverse();
                l.join(" ")
            }
        }
    }

    pub fn same_class(&self, other: &Problem) -> bool {
        match (self, other) {
            (Problem::LetterConcat { index: a, .. }, Problem::LetterConcat { index: b, .. }) => {
                a == b
            }
            _ => std::mem::discriminant(self) == std::mem::discriminant(other),
        }
    }

    /// True when partial solutions of a data split are concatenated in
    /// reverse order.
    fn reverses_parts(&self) -> bool {
        matches!(
            self,
            Problem::ListReversal { .. } | Problem::LengthReversal { .. }
        )
    }
}

/// How a parent's solution is assembled from its children's solutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MergeRule {
    /// Children are contiguous partitions of the parent's list.
    Concatenate { reversed: bool },
    /// Children are consecutive steps; the last one carries the answer.
    LastStep,
}

/// Infers the merge rule for a parent whose children have the given
/// descriptions. `None` when the decomposition matches no known pattern.
pub fn merge_rule(parent: &Problem, children: &[Option<Problem>]) -> Option<MergeRule> {
    if children.is_empty() {
        return None;
    }
    if children
        .iter()
        .all(|c| c.as_ref().is_some_and(|c| c.same_class(parent)))
    {
        return Some(MergeRule::Concatenate {
            reversed: parent.reverses_parts(),
        });
    }
    if let Problem::LengthReversal { .. } = parent {
        if let Some(Some(Problem::ListReversal { .. })) = children.last() {
            return Some(MergeRule::LastStep);
        }
    }
    None
}

pub fn apply_merge_rule(rule: MergeRule, solutions: &[String]) -> String {
    match rule {
        MergeRule::LastStep => solutions.last().cloned().unwrap_or_default(),
        MergeRule::Concatenate { reversed } => {
            let mut parts: Vec<&str> = solutions
                .iter()
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .collect();
            if reversed {
                parts.reverse();
            }
            parts.join(" ")
        }
    }
}

/// Contiguous partition of `len` items into at most `width` chunks of
/// `max(width, ceil(len / width))` items each (the last chunk takes the rest).
pub fn partition_sizes(len: usize, width: usize) -> Vec<usize> {
    let width = width.max(1);
    let chunk = width.max(len.div_ceil(width));
    let mut sizes = Vec::new();
    let mut left = len;
    while left > 0 {
        let take = chunk.min(left);
        sizes.push(take);
        left -= take;
    }
    sizes
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkInstance {
    pub task: Task,
    pub class_tag: String,
    pub difficulty: usize,
    pub words: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
    pub description: String,
    pub ground_truth: String,
    pub seed: u64,
}

impl BenchmarkInstance {
    pub fn new(task: Task, words: Vec<String>, index: Option<usize>, seed: u64) -> Self {
        let problem = match task {
            Task::LetterConcat => Problem::LetterConcat {
                words: words.clone(),
                index: index.unwrap_or(0),
            },
            Task::LengthReversal => Problem::LengthReversal {
                words: words.clone(),
            },
        };
        BenchmarkInstance {
            task,
            class_tag: task.class_tag().to_string(),
            difficulty: words.len(),
            index: (task == Task::LetterConcat).then(|| index.unwrap_or(0)),
            words,
            description: problem.describe(),
            ground_truth: problem.solve(),
            seed,
        }
    }

    pub fn problem(&self) -> Problem {
        match self.task {
            Task::LetterConcat => Problem::LetterConcat {
                words: self.words.clone(),
                index: self.index.unwrap_or(0),
            },
            Task::LengthReversal => Problem::LengthReversal {
                words: self.words.clone(),
            },
        }
    }

    /// Short stable identifier used in manifests and reports.
    pub fn key(&self) -> String {
        format!("{}-n{}-{:016x}", self.class_tag, self.difficulty, self.seed)
    }
}

fn instance_seed(seed: u64, ordinal: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(ordinal);
    rng.gen()
}

/// Regenerates the instance drawn from a per-instance seed.
pub fn generate_one(task: Task, n0: usize, seed: u64) -> Result<BenchmarkInstance, BenchmarkError> {
    if n0 == 0 {
        return Err(BenchmarkError::InvalidDifficulty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words: Vec<String> = (0..n0)
        .map(|_| WORD_POOL.choose(&mut rng).expect("non-empty pool").to_string())
        .collect();
    let index = match task {
        Task::LetterConcat => {
            let min_len = words.iter().map(|w| w.chars().count()).min().unwrap_or(1);
            Some(rng.gen_range(0..=3.min(min_len - 1)))
        }
        Task::LengthReversal => None,
    };
    Ok(BenchmarkInstance::new(task, words, index, seed))
}

pub fn generate(
    task: Task,
    n0: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<BenchmarkInstance>, BenchmarkError> {
    if n0 == 0 {
        return Err(BenchmarkError::InvalidDifficulty);
    }
    if count == 0 {
        return Err(BenchmarkError::InvalidCount);
    }
    (0..count as u64)
        .map(|i| generate_one(task, n0, instance_seed(seed, i)))
        .collect()
}

pub fn solve_ground_truth(instance: &BenchmarkInstance) -> String {
    instance.problem().solve()
}

/// Trim, drop one layer of surrounding quotes, collapse whitespace runs.
pub fn normalize(text: &str) -> String {
    let t = text.trim();
    let t = if t.len() >= 2 && t.starts_with('"') && t.ends_with('"') {
        &t[1..t.len() - 1]
    } else {
        t
    };
    t.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn answers_match(predicted: &str, expected: &str) -> bool {
    normalize(predicted) == normalize(expected)
}

pub fn score(predicted: &str, instance: &BenchmarkInstance) -> u8 {
    u8::from(answers_match(predicted, &instance.ground_truth))
}

pub fn write_instances<W: Write>(
    mut writer: W,
    instances: &[BenchmarkInstance],
) -> Result<(), BenchmarkError> {
    for inst in instances {
        let line = serde_json::to_string(inst).map_err(|e| BenchmarkError::Io(e.to_string()))?;
        writeln!(writer, "{line}").map_err(|e| BenchmarkError::Io(e.to_string()))?;
    }
    Ok(())
}

/// Reads line-delimited instance records, rejecting records whose stored
/// ground truth disagrees with the solver.
pub fn read_instances<R: BufRead>(reader: R) -> Result<Vec<BenchmarkInstance>, BenchmarkError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| BenchmarkError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let inst: BenchmarkInstance =
            serde_json::from_str(&line).map_err(|e| BenchmarkError::BadRecord {
                line: i + 1,
                reason: e.to_string(),
            })?;
        if solve_ground_truth(&inst) != inst.ground_truth {
            return Err(BenchmarkError::BadRecord {
                line: i + 1,
                reason: "ground truth does not match the instance".into(),
            });
        }
        out.push(inst);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(ws: &[&str]) -> Vec<String> {
        ws.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn ground_truth_examples() {
        let i = BenchmarkInstance::new(Task::LetterConcat, words(&["Gladys", "Rathav", "Miya"]), Some(1), 0);
        assert_eq!(i.ground_truth, "l a i");
        let i = BenchmarkInstance::new(Task::LetterConcat, words(&["Wilson"]), Some(3), 0);
        assert_eq!(i.ground_truth, "s");
        let i = BenchmarkInstance::new(Task::LengthReversal, words(&["cow", "banana", "castle"]), None, 0);
        assert_eq!(i.ground_truth, "6 6 3");
    }

    #[test]
    fn parse_round_trips_descriptions() {
        let cases = [
            Problem::LetterConcat { words: words(&["Olga", "Dong"]), index: 2 },
            Problem::WordLengths { words: words(&["cow", "tail"]) },
            Problem::ListReversal { items: words(&["3", "6", "6"]) },
            Problem::LengthReversal { words: words(&["fish", "wry"]) },
        ];
        for p in cases {
            assert_eq!(Problem::parse(&p.describe()), Some(p));
        }
    }

    #[test]
    fn parse_rejects_missing_data() {
        assert_eq!(Problem::parse("Reverse the following list: "), None);
        assert_eq!(Problem::parse("Substitute each word in the list with its length."), None);
        assert_eq!(Problem::parse("What is 2 + 2?"), None);
        assert_eq!(
            Problem::parse("Reverse the following list: [a, b]"),
            Some(Problem::ListReversal { items: words(&["a", "b"]) })
        );
    }

    #[test]
    fn partition_examples() {
        assert_eq!(partition_sizes(9, 4), [4, 4, 1]);
        assert_eq!(partition_sizes(7, 4), [4, 3]);
        assert_eq!(partition_sizes(12, 4), [4, 4, 4]);
        assert_eq!(partition_sizes(50, 4), [13, 13, 13, 11]);
        for len in 1..200 {
            let s = partition_sizes(len, 4);
            assert!(s.len() <= 4);
            assert_eq!(s.iter().sum::<usize>(), len);
        }
    }

    #[test]
    fn merge_rules_rebuild_ground_truth() {
        let parent = Problem::LengthReversal { words: words(&["cow", "banana", "castle", "tail"]) };
        let halves = [
            parent.with_items(words(&["cow", "banana"])),
            parent.with_items(words(&["castle", "tail"])),
        ];
        let kids: Vec<_> = halves.iter().cloned().map(Some).collect();
        let rule = merge_rule(&parent, &kids).unwrap();
        let sols: Vec<_> = halves.iter().map(Problem::solve).collect();
        assert_eq!(apply_merge_rule(rule, &sols), parent.solve());

        let steps = [
            Some(Problem::WordLengths { words: words(&["cow", "banana", "castle", "tail"]) }),
            Some(Problem::ListReversal { items: words(&["3", "6", "6", "4"]) }),
        ];
        let rule = merge_rule(&parent, &steps).unwrap();
        assert_eq!(rule, MergeRule::LastStep);
        assert_eq!(apply_merge_rule(rule, &["3 6 6 4".into(), "4 6 6 3".into()]), parent.solve());
        assert_eq!(merge_rule(&parent, &[None]), None);
    }

    #[test]
    fn generation_is_deterministic_and_valid() {
        let a = generate(Task::LetterConcat, 90, 100, 7).unwrap();
        assert_eq!(a, generate(Task::LetterConcat, 90, 100, 7).unwrap());
        assert_ne!(a, generate(Task::LetterConcat, 90, 100, 8).unwrap());
        for inst in &a {
            assert_eq!(inst.difficulty, 90);
            let idx = inst.index.unwrap();
            assert!(idx <= 3 && inst.words.iter().all(|w| idx < w.len()));
            assert_eq!(solve_ground_truth(inst), inst.ground_truth);
            assert_eq!(score(&inst.ground_truth, inst), 1);
            assert_eq!(generate_one(inst.task, 90, inst.seed).unwrap(), *inst);
        }
        let one = generate(Task::LetterConcat, 1, 1, 3).unwrap();
        assert_eq!(one[0].ground_truth.chars().count(), 1);
        assert_eq!(generate(Task::LengthReversal, 0, 1, 0), Err(BenchmarkError::InvalidDifficulty));
    }

    #[test]
    fn scoring_normalizes() {
        let i = BenchmarkInstance::new(Task::LetterConcat, words(&["Gladys", "Rathav", "Miya"]), Some(1), 0);
        assert_eq!(score("\"l a i\"", &i), 1);
        assert_eq!(score("l a x", &i), 0);
        assert_eq!(score("l  a   i", &i), 1);
        assert_eq!(score("l a i.", &i), 0);
    }

    #[test]
    fn pool_words_are_long_enough() {
        assert!(WORD_POOL.len() > 100);
        assert!(WORD_POOL.iter().all(|w| w.len() >= 4 && w.is_ascii()));
        assert!(WORD_POOL.contains(&"Shimizu"));
    }

    #[test]
    fn instance_records_round_trip() {
        let insts = generate(Task::LengthReversal, 5, 3, 1).unwrap();
        let mut buf = Vec::new();
        write_instances(&mut buf, &insts).unwrap();
        assert_eq!(read_instances(&buf[..]).unwrap(), insts);
        let tampered = String::from_utf8(buf).unwrap().replacen("\"ground_truth\":\"", "\"ground_truth\":\"9 ", 1);
        assert!(read_instances(tampered.as_bytes()).is_err());
    }
}
