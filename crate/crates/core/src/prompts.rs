//! Meta-task prompt templates and their in-context example sets.
//!
//! Templates and example sets ship as plain-text assets under `assets/v1`
//! and are compiled into the crate; a custom asset directory with the same
//! layout (`index.json` plus the referenced files) can be loaded instead.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parser::DecompositionMode;

pub const ASSET_VERSION: &str = "v1";

/// Sentence in the merge template that invites the model to repair sub-solutions.
pub const RECOVERY_SENTENCE: &str = " If you find any mistakes in the sub-solutions, you can fix the mistakes while you merge the sub-solutions.";

const PLACEHOLDER_NAMES: [&str; 4] = ["width", "examples", "problem", "subsolutions"];

static PLACEHOLDER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{([a-z_]+)\}").unwrap());
static SHOT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?s)<INPUT>(.*?)</INPUT>\s*<TARGET>(.*?)</TARGET>").unwrap());
static SUB_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^- Sub-problem (\d+): (.*) Sub-solution (\d+): (.*)$").unwrap()
});
static CANDIDATE_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^- Candidate (\d+): (.*)$").unwrap());

macro_rules! packaged {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../assets/v1/", $name)))),*]
    };
}

static PACKAGED_FILES: &[(&str, &str)] = packaged!(
    "index.json",
    "unit_cot.txt",
    "unit_ltm.txt",
    "decompose.txt",
    "decompose_deps.txt",
    "merge.txt",
    "vote.txt",
    "letter_concat_cot.txt",
    "letter_concat_ltm.txt",
    "letter_concat_decompose.txt",
    "letter_concat_merge.txt",
    "generic_cot.txt",
    "generic_decompose.txt",
    "generic_decompose_deps.txt",
    "generic_merge.txt",
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MetaTask {
    Decompose,
    DecomposeWithDeps,
    Merge,
    UnitCoT,
    UnitLtM,
    Vote,
}

impl MetaTask {
    pub const ALL: [MetaTask; 6] = [
        MetaTask::Decompose,
        MetaTask::DecomposeWithDeps,
        MetaTask::Merge,
        MetaTask::UnitCoT,
        MetaTask::UnitLtM,
        MetaTask::Vote,
    ];

    pub fn is_decomposition(self) -> bool {
        matches!(self, MetaTask::Decompose | MetaTask::DecomposeWithDeps)
    }

    pub fn is_unit(self) -> bool {
        matches!(self, MetaTask::UnitCoT | MetaTask::UnitLtM)
    }
}

impl fmt::Display for MetaTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    TaskSpecific,
    #[default]
    Generic,
}

/// Reasoning style used for unit problems and for the baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum UnitMethod {
    #[default]
    CoT,
    LtM,
}

impl UnitMethod {
    pub fn meta_task(self) -> MetaTask {
        match self {
            UnitMethod::CoT => MetaTask::UnitCoT,
            UnitMethod::LtM => MetaTask::UnitLtM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("no value supplied for placeholder {{{0}}}")]
    MissingPlaceholderValue(&'static str),
    #[error("template {0} has no {{subsolutions}} slot")]
    ExtraSubsolutions(MetaTask),
    #[error("corrupt prompt asset {file}: {reason}")]
    AssetCorrupt { file: String, reason: String },
}

fn corrupt(file: &str, reason: impl Into<String>) -> PromptError {
    PromptError::AssetCorrupt {
        file: file.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub meta_task: MetaTask,
    pub body: String,
}

impl PromptTemplate {
    pub fn new(meta_task: MetaTask, body: impl Into<String>) -> Result<Self, PromptError> {
        let body = body.into();
        let label = meta_task.to_string();
        for caps in PLACEHOLDER.captures_iter(&body) {
            if !PLACEHOLDER_NAMES.contains(&&caps[1]) {
                return Err(corrupt(&label, format!("unknown placeholder {{{}}}", &caps[1])));
            }
        }
        let has = |name: &str| body.contains(&format!("{{{name}}}"));
        if !has("problem") {
            return Err(corrupt(&label, "missing {problem}"));
        }
        if matches!(meta_task, MetaTask::Merge | MetaTask::Vote) && !has("subsolutions") {
            return Err(corrupt(&label, "missing {subsolutions}"));
        }
        if meta_task.is_decomposition() && !has("width") {
            return Err(corrupt(&label, "missing {width}"));
        }
        Ok(PromptTemplate { meta_task, body })
    }

    fn has_slot(&self, name: &str) -> bool {
        self.body.contains(&format!("{{{name}}}"))
    }

    /// Copy of this template with the error-recovery sentence removed.
    pub fn without_recovery_sentence(&self) -> PromptTemplate {
        PromptTemplate {
            meta_task: self.meta_task,
            body: self.body.replace(RECOVERY_SENTENCE, ""),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shot {
    pub input: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleSet {
    pub name: String,
    pub shots: Vec<Shot>,
    pub regime: Regime,
}

impl ExampleSet {
    pub fn empty(name: &str, regime: Regime) -> Self {
        ExampleSet {
            name: name.to_string(),
            shots: Vec::new(),
            regime,
        }
    }

    pub fn parse(name: &str, regime: Regime, text: &str) -> ExampleSet {
        let shots = SHOT
            .captures_iter(text)
            .map(|c| Shot {
                input: c[1].to_string(),
                target: c[2].to_string(),
            })
            .collect();
        ExampleSet {
            name: name.to_string(),
            shots,
            regime,
        }
    }

    /// `<INPUT>`/`<TARGET>` framing, one blank line between shots.
    pub fn serialize(&self) -> String {
        self.shots
            .iter()
            .map(|s| format!("<INPUT>{}</INPUT>\n<TARGET>{}</TARGET>", s.input, s.target))
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

/// A sub-problem and its solution as shown to the merge step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubSolution {
    pub description: String,
    pub solution: String,
}

fn render_subsolutions(meta_task: MetaTask, subs: &[SubSolution]) -> String {
    subs.iter()
        .enumerate()
        .map(|(i, s)| {
            let k = i + 1;
            match meta_task {
                MetaTask::Vote => format!("- Candidate {k}: {}", s.solution),
                _ => format!(
                    "- Sub-problem {k}: {} Sub-solution {k}: {}.",
                    s.description, s.solution
                ),
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Fills a template in a single left-to-right pass, so text coming from
/// examples or problems is never re-scanned for placeholders.
pub fn render(
    template: &PromptTemplate,
    examples: &ExampleSet,
    problem: &str,
    width: Option<usize>,
    subsolutions: Option<&[SubSolution]>,
) -> Result<String, PromptError> {
    if subsolutions.is_some() && !template.has_slot("subsolutions") {
        return Err(PromptError::ExtraSubsolutions(template.meta_task));
    }
    let mut out = String::with_capacity(template.body.len() + problem.len() + 1024);
    let mut last = 0;
    for caps in PLACEHOLDER.captures_iter(&template.body) {
        let whole = caps.get(0).unwrap();
        out.push_str(&template.body[last..whole.start()]);
        match &caps[1] {
            "width" => {
                let w = width.ok_or(PromptError::MissingPlaceholderValue("width"))?;
                out.push_str(&w.to_string());
            }
            "examples" => out.push_str(&examples.serialize()),
            "problem" => out.push_str(problem),
            "subsolutions" => {
                let subs =
                    subsolutions.ok_or(PromptError::MissingPlaceholderValue("subsolutions"))?;
                out.push_str(&render_subsolutions(template.meta_task, subs));
            }
            other => out.push_str(&format!("{{{other}}}")),
        }
        last = whole.end();
    }
    out.push_str(&template.body[last..]);
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct AssetIndex {
    version: u32,
    templates: BTreeMap<MetaTask, String>,
    example_sets: Vec<ExampleSetEntry>,
}

#[derive(Debug, Deserialize)]
struct ExampleSetEntry {
    name: String,
    file: Option<String>,
    meta_task: MetaTask,
    regime: Regime,
    shots: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptAssets {
    templates: BTreeMap<MetaTask, PromptTemplate>,
    example_sets: BTreeMap<(MetaTask, Regime), ExampleSet>,
}

impl PromptAssets {
    fn load_with(read: impl Fn(&str) -> Option<String>) -> Result<Self, PromptError> {
        let index_text = read("index.json").ok_or_else(|| corrupt("index.json", "missing"))?;
        let index: AssetIndex =
            serde_json::from_str(&index_text).map_err(|e| corrupt("index.json", e.to_string()))?;
        if index.version != 1 {
            return Err(corrupt("index.json", format!("unsupported version {}", index.version)));
        }
        let mut templates = BTreeMap::new();
        for meta_task in MetaTask::ALL {
            let file = index
                .templates
                .get(&meta_task)
                .ok_or_else(|| corrupt("index.json", format!("no template for {meta_task}")))?;
            let body = read(file).ok_or_else(|| corrupt(file, "missing"))?;
            let template = PromptTemplate::new(meta_task, body).map_err(|e| match e {
                PromptError::AssetCorrupt { reason, .. } => corrupt(file, reason),
                other => other,
            })?;
            templates.insert(meta_task, template);
        }
        let mut example_sets = BTreeMap::new();
        for entry in index.example_sets {
            let set = match &entry.file {
                Some(file) => {
                    let text = read(file).ok_or_else(|| corrupt(file, "missing"))?;
                    ExampleSet::parse(&entry.name, entry.regime, &text)
                }
                None => ExampleSet::empty(&entry.name, entry.regime),
            };
            if set.shots.len() != entry.shots {
                return Err(corrupt(
                    entry.file.as_deref().unwrap_or(&entry.name),
                    format!("expected {} shots, found {}", entry.shots, set.shots.len()),
                ));
            }
            example_sets.insert((entry.meta_task, entry.regime), set);
        }
        Ok(PromptAssets {
            templates,
            example_sets,
        })
    }

    pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
        Self::load_with(|name| std::fs::read_to_string(dir.join(name)).ok())
    }

    pub fn template(&self, meta_task: MetaTask) -> &PromptTemplate {
        &self.templates[&meta_task]
    }

    /// Example set for a meta-task; task-specific lookups fall back to the
    /// generic set when no task-specific one exists.
    pub fn examples(&self, meta_task: MetaTask, regime: Regime) -> Option<&ExampleSet> {
        self.example_sets
            .get(&(meta_task, regime))
            .or_else(|| self.example_sets.get(&(meta_task, Regime::Generic)))
    }

    pub fn entries(
        &self,
    ) -> impl Iterator<Item = ((MetaTask, Regime), (&PromptTemplate, &ExampleSet))> {
        self.example_sets
            .iter()
            .map(|(key, set)| (*key, (&self.templates[&key.0], set)))
    }
}

pub fn load_packaged_assets() -> Result<PromptAssets, PromptError> {
    PromptAssets::load_with(|name| {
        PACKAGED_FILES
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| text.to_string())
    })
}

/// The prompts one run uses, chosen by regime, decomposition mode and unit method.
#[derive(Debug, Clone)]
pub struct PromptSet {
    decompose: (PromptTemplate, ExampleSet),
    unit: (PromptTemplate, ExampleSet),
    merge: (PromptTemplate, ExampleSet),
    vote: (PromptTemplate, ExampleSet),
}

impl PromptSet {
    pub fn new(
        assets: &PromptAssets,
        regime: Regime,
        mode: DecompositionMode,
        unit_method: UnitMethod,
        recovery_sentence: bool,
    ) -> Result<Self, PromptError> {
        let pick = |meta: MetaTask| -> Result<(PromptTemplate, ExampleSet), PromptError> {
            let set = assets
                .examples(meta, regime)
                .ok_or_else(|| corrupt("index.json", format!("no example set for {meta}")))?;
            Ok((assets.template(meta).clone(), set.clone()))
        };
        let decompose_task = match mode {
            DecompositionMode::Independent => MetaTask::Decompose,
            DecompositionMode::WithDependencies => MetaTask::DecomposeWithDeps,
        };
        let mut merge = pick(MetaTask::Merge)?;
        if !recovery_sentence {
            merge.0 = merge.0.without_recovery_sentence();
        }
        Ok(PromptSet {
            decompose: pick(decompose_task)?,
            unit: pick(unit_method.meta_task())?,
            merge,
            vote: pick(MetaTask::Vote)?,
        })
    }

    pub fn packaged(
        regime: Regime,
        mode: DecompositionMode,
        unit_method: UnitMethod,
        recovery_sentence: bool,
    ) -> Result<Self, PromptError> {
        Self::new(
            &load_packaged_assets()?,
            regime,
            mode,
            unit_method,
            recovery_sentence,
        )
    }

    pub fn decompose(&self, problem: &str, width: usize) -> Result<String, PromptError> {
        render(&self.decompose.0, &self.decompose.1, problem, Some(width), None)
    }

    pub fn unit(&self, problem: &str) -> Result<String, PromptError> {
        render(&self.unit.0, &self.unit.1, problem, None, None)
    }

    pub fn merge(&self, problem: &str, subs: &[SubSolution]) -> Result<String, PromptError> {
        render(&self.merge.0, &self.merge.1, problem, None, Some(subs))
    }

    pub fn vote(&self, problem: &str, first: &str, second: &str) -> Result<String, PromptError> {
        let candidates = [first, second].map(|a| SubSolution {
            description: String::new(),
            solution: a.to_string(),
        });
        render(&self.vote.0, &self.vote.1, problem, None, Some(&candidates))
    }
}

/// Identifies which meta-task a rendered prompt belongs to from its preamble.
pub fn detect_meta_task(prompt: &str) -> Option<MetaTask> {
    if prompt.starts_with("You manage") {
        if prompt.contains("unique identifier given between square brackets") {
            Some(MetaTask::DecomposeWithDeps)
        } else {
            Some(MetaTask::Decompose)
        }
    } else if prompt.starts_with("The problem below was decomposed") {
        Some(MetaTask::Merge)
    } else if prompt.starts_with("Several candidate answers") {
        Some(MetaTask::Vote)
    } else if prompt.starts_with("Your task is to solve the problem below") {
        if prompt.trim_end().ends_with("Let's think step by step.") {
            Some(MetaTask::UnitCoT)
        } else {
            Some(MetaTask::UnitLtM)
        }
    } else {
        None
    }
}

/// The problem section of a rendered prompt, as seen by a backend.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptProblem {
    pub problem: String,
    pub subsolutions: Vec<SubSolution>,
}

/// Recovers the final `Problem:` block (and any sub-solution or candidate
/// lines) from a prompt rendered by [`render`].
pub fn parse_prompt_problem(prompt: &str) -> Option<PromptProblem> {
    const MARKER: &str = "## Problem\n\nProblem: ";
    let start = prompt.rfind(MARKER)? + MARKER.len();
    let section = &prompt[start..];
    let end = section.rfind("\nAnswer:").unwrap_or(section.len());
    let section = &section[..end];
    let mut problem_lines = Vec::new();
    let mut subsolutions = Vec::new();
    for line in section.lines() {
        if let Some(c) = SUB_LINE.captures(line) {
            let solution = c[4].strip_suffix('.').unwrap_or(&c[4]).to_string();
            subsolutions.push(SubSolution {
                description: c[2].to_string(),
                solution,
            });
        } else if let Some(c) = CANDIDATE_LINE.captures(line) {
            subsolutions.push(SubSolution {
                description: String::new(),
                solution: c[2].to_string(),
            });
        } else if subsolutions.is_empty() {
            problem_lines.push(line);
        }
    }
    Some(PromptProblem {
        problem: problem_lines.join("\n"),
        subsolutions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assets() -> PromptAssets {
        load_packaged_assets().unwrap()
    }

    #[test]
    fn all_packaged_assets_load() {
        let a = assets();
        for meta in MetaTask::ALL {
            assert_eq!(a.template(meta).meta_task, meta);
        }
        assert!(a
            .template(MetaTask::DecomposeWithDeps)
            .body
            .contains("unique identifier given between square brackets"));
        assert!(a.template(MetaTask::Merge).body.contains(RECOVERY_SENTENCE.trim()));
        let generic = a.examples(MetaTask::Decompose, Regime::Generic).unwrap();
        assert!(generic
            .shots
            .iter()
            .any(|s| s.input.contains("blueprint for a webpage view using the Vue3 framework")));
        assert_eq!(a, assets());
    }

    #[test]
    fn shot_counts() {
        let a = assets();
        let count = |m, r| a.examples(m, r).unwrap().shots.len();
        assert_eq!(count(MetaTask::UnitCoT, Regime::TaskSpecific), 5);
        assert_eq!(count(MetaTask::UnitLtM, Regime::TaskSpecific), 5);
        assert_eq!(count(MetaTask::Merge, Regime::TaskSpecific), 5);
        assert_eq!(count(MetaTask::Merge, Regime::Generic), 5);
        assert_eq!(count(MetaTask::UnitCoT, Regime::Generic), 5);
        assert_eq!(count(MetaTask::Decompose, Regime::TaskSpecific), 5);
        // both generic decomposition listings hold eight demonstrations
        assert_eq!(count(MetaTask::Decompose, Regime::Generic), 8);
        assert_eq!(count(MetaTask::DecomposeWithDeps, Regime::Generic), 8);
    }

    #[test]
    fn merge_prompt_lists_subsolutions() {
        let a = assets();
        let subs: Vec<_> = ["w d k d", "r s a r", "i"]
            .iter()
            .enumerate()
            .map(|(i, s)| SubSolution {
                description: format!("Concatenate using a space part {}", i + 1),
                solution: s.to_string(),
            })
            .collect();
        let set = a.examples(MetaTask::Merge, Regime::TaskSpecific).unwrap();
        let text = render(a.template(MetaTask::Merge), set, "the problem", None, Some(&subs)).unwrap();
        assert!(text.contains("- Sub-problem 1: Concatenate using a space part 1 Sub-solution 1: w d k d."));
        assert!(text.contains("Sub-solution 3: i."));
        let parsed = parse_prompt_problem(&text).unwrap();
        assert_eq!(parsed.problem, "the problem");
        assert_eq!(parsed.subsolutions, subs);
        assert_eq!(detect_meta_task(&text), Some(MetaTask::Merge));
    }

    #[test]
    fn decompose_prompt_states_width() {
        let set = PromptSet::packaged(
            Regime::Generic,
            DecompositionMode::Independent,
            UnitMethod::CoT,
            true,
        )
        .unwrap();
        let text = set.decompose("p", 4).unwrap();
        assert!(text.contains("You manage 4 workers"));
        assert!(text.contains("never more than 4 workers"));
        assert_eq!(detect_meta_task(&text), Some(MetaTask::Decompose));
    }

    #[test]
    fn empty_example_set_still_renders() {
        let a = assets();
        let text = render(
            a.template(MetaTask::UnitCoT),
            &ExampleSet::empty("none", Regime::Generic),
            "What is 2 + 2?",
            None,
            None,
        )
        .unwrap();
        assert!(text.contains("## Examples\n\n\n\n## Problem"));
        assert!(text.ends_with("Problem: What is 2 + 2?\nAnswer: Let's think step by step."));
        assert_eq!(detect_meta_task(&text), Some(MetaTask::UnitCoT));
    }

    #[test]
    fn render_errors() {
        let a = assets();
        let empty = ExampleSet::empty("none", Regime::Generic);
        assert_eq!(
            render(a.template(MetaTask::Decompose), &empty, "p", None, None),
            Err(PromptError::MissingPlaceholderValue("width"))
        );
        assert_eq!(
            render(a.template(MetaTask::Merge), &empty, "p", None, None),
            Err(PromptError::MissingPlaceholderValue("subsolutions"))
        );
        assert_eq!(
            render(a.template(MetaTask::UnitCoT), &empty, "p", None, Some(&[])),
            Err(PromptError::ExtraSubsolutions(MetaTask::UnitCoT))
        );
    }

    #[test]
    fn inserted_text_is_not_rescanned() {
        let a = assets();
        let empty = ExampleSet::empty("none", Regime::Generic);
        let text = render(a.template(MetaTask::UnitLtM), &empty, "keep {width} and {P-1}", None, None)
            .unwrap();
        assert!(text.contains("Problem: keep {width} and {P-1}\nAnswer:"));
    }

    #[test]
    fn recovery_sentence_toggle() {
        let with = PromptSet::packaged(Regime::Generic, DecompositionMode::Independent, UnitMethod::CoT, true).unwrap();
        let without = PromptSet::packaged(Regime::Generic, DecompositionMode::Independent, UnitMethod::CoT, false).unwrap();
        let subs = [SubSolution { description: "a".into(), solution: "b".into() }];
        assert!(with.merge("p", &subs).unwrap().contains("you can fix the mistakes while you merge"));
        let stripped = without.merge("p", &subs).unwrap();
        assert!(!stripped.contains("fix the mistakes"));
        assert!(stripped.contains("apply a transformation to the sub-solutions.\n\nYou must reason"));
    }

    #[test]
    fn template_validation() {
        assert!(PromptTemplate::new(MetaTask::Merge, "Problem: {problem}").is_err());
        assert!(PromptTemplate::new(MetaTask::Decompose, "{problem} {subsolutions}").is_err());
        assert!(PromptTemplate::new(MetaTask::UnitCoT, "{problem} {bogus}").is_err());
        assert!(PromptTemplate::new(MetaTask::UnitCoT, "{examples} {problem}").is_ok());
    }

    #[test]
    fn vote_prompt_round_trips_candidates() {
        let set = PromptSet::packaged(Regime::Generic, DecompositionMode::Independent, UnitMethod::CoT, true).unwrap();
        let text = set.vote("which?", "l a i", "l a x").unwrap();
        assert_eq!(detect_meta_task(&text), Some(MetaTask::Vote));
        let parsed = parse_prompt_problem(&text).unwrap();
        assert_eq!(parsed.problem, "which?");
        let answers: Vec<_> = parsed.subsolutions.iter().map(|s| s.solution.as_str()).collect();
        assert_eq!(answers, ["l a i", "l a x"]);
    }
}
