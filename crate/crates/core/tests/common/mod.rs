#![allow(dead_code)]

use rdd_core::analysis::{score_run, ScoredRun, ScoringContext};
use rdd_core::backends::{ReplayBackend, ReplayTurn};
use rdd_core::benchmarks::Problem;
use rdd_core::parser::DecompositionMode;
use rdd_core::scheduler::{solve, SchedulerConfig, SolveOutcome, Step};

pub const UNIT: &str = "The list is short enough. <ANSWER>This is a unit problem.</ANSWER>";

pub fn answer(a: &str) -> String {
    format!("<ANSWER>{a}</ANSWER>")
}

/// A scripted run: completions are served in call order.
pub struct Transcript {
    pub problem: Problem,
    pub config: SchedulerConfig,
    pub turns: Vec<ReplayTurn>,
}

impl Transcript {
    pub fn run(&self) -> (SolveOutcome, ScoredRun) {
        let backend = ReplayBackend::new(self.turns.clone());
        let out = solve(&self.problem.describe(), &backend, &self.config).expect("transcript solves");
        assert_eq!(backend.remaining(), 0, "every scripted turn is consumed");
        let ctx = ScoringContext {
            mode: self.config.mode,
            width: self.config.width,
        };
        let scored = score_run(&out.graph, &out.trace, Some(&self.problem), ctx);
        (out, scored)
    }
}

fn scripted(texts: &[&str]) -> Vec<ReplayTurn> {
    texts.iter().map(|t| ReplayTurn::scripted(*t)).collect()
}

fn words(ws: &[&str]) -> Vec<String> {
    ws.iter().map(|w| w.to_string()).collect()
}

/// Error propagation: the second half is unit-solved wrongly and the merge
/// carries the mistake into the root answer.
pub fn propagation() -> Transcript {
    Transcript {
        problem: Problem::LetterConcat {
            words: words(&["apple", "banana", "cherry", "grape", "lemon", "mango"]),
            index: 0,
        },
        config: SchedulerConfig {
            width: 2,
            ..Default::default()
        },
        turns: scripted(&[
            "We can split the list in two.\n<ANSWER>\n\
             - Concatenate using a space the characters at index 0 of each word in the list [apple, banana, cherry]; indices start at zero.\n\
             - Concatenate using a space the characters at index 0 of each word in the list [grape, lemon, mango]; indices start at zero.\n\
             </ANSWER>",
            UNIT,
            UNIT,
            "<ANSWER>a b c</ANSWER>",
            "<ANSWER>g l n</ANSWER>",
            "<ANSWER>a b c g l n</ANSWER>",
        ]),
    }
}

/// Error recovery: P-1 is stated without its list, so P-1 and P-2 both come
/// back empty, yet the root merge still produces the right answer.
pub fn recovery() -> Transcript {
    Transcript {
        problem: Problem::LengthReversal {
            words: words(&["cat", "banana", "orange"]),
        },
        config: SchedulerConfig {
            width: 2,
            mode: DecompositionMode::WithDependencies,
            ..Default::default()
        },
        turns: scripted(&[
            "We split the task by steps.\n<ANSWER>\n\
             - [P-1] Substitute each word in the list with its length (number of characters).\n\
             - [P-2] Reverse the following list: {P-1}\n\
             </ANSWER>",
            UNIT,
            "<ANSWER></ANSWER>",
            UNIT,
            "<ANSWER></ANSWER>",
            "The sub-solutions are empty, so I solve the problem directly: cat has 3, banana 6, orange 6. <ANSWER>6 6 3</ANSWER>",
        ]),
    }
}

/// A dependency chain: word lengths first, then a reversal that embeds them.
pub fn example_run() -> Transcript {
    Transcript {
        problem: Problem::LengthReversal {
            words: words(&["mirror", "cat", "planets"]),
        },
        config: SchedulerConfig {
            width: 2,
            mode: DecompositionMode::WithDependencies,
            ..Default::default()
        },
        turns: scripted(&[
            "We split the task by steps.\n<ANSWER>\n\
             - [P-1] Substitute each word in the list [mirror, cat, planets] with its length (number of characters).\n\
             - [P-2] Reverse the following list: {P-1}\n\
             </ANSWER>",
            UNIT,
            "<ANSWER>6 3 7</ANSWER>",
            UNIT,
            "<ANSWER>7 3 6</ANSWER>",
            "<ANSWER>7 3 6</ANSWER>",
        ]),
    }
}

pub const EXAMPLE_RUN_ORDER: [(Step, &str); 7] = [
    (Step::Decompose, "ROOT"),
    (Step::Decompose, "P-1"),
    (Step::UnitSolve, "P-1"),
    (Step::Substitute, "P-2"),
    (Step::Decompose, "P-2"),
    (Step::UnitSolve, "P-2"),
    (Step::Merge, "ROOT"),
];

use rand::Rng;
use rdd_core::analysis::{ShapeNode, StepAccuracies, StepTriple, TableAccuracies};

/// Random tree with at most `budget` steps (one per unit, two per composite)
/// and a distinct difficulty on every node.
pub fn random_shape<R: Rng>(rng: &mut R, budget: usize) -> ShapeNode {
    let mut next = 0;
    grow(rng, budget.max(1), &mut next)
}

fn grow<R: Rng>(rng: &mut R, budget: usize, next: &mut u64) -> ShapeNode {
    *next += 1;
    let n = *next;
    if budget < 3 || rng.gen_bool(0.3) {
        return ShapeNode::unit("c", n);
    }
    let room = budget - 2;
    let w = rng.gen_range(1..=room.min(3));
    let mut budgets = vec![1; w];
    for _ in 0..rng.gen_range(0..=room - w) {
        let i = rng.gen_range(0..w);
        budgets[i] += 1;
    }
    let children = budgets.into_iter().map(|b| grow(rng, b, next)).collect();
    ShapeNode::composite("c", n, children)
}

pub fn random_accuracies<R: Rng>(rng: &mut R, shape: &ShapeNode, lo: f64) -> TableAccuracies {
    fn fill<R: Rng>(rng: &mut R, node: &ShapeNode, lo: f64, table: TableAccuracies) -> TableAccuracies {
        let t = StepTriple::new(rng.gen_range(lo..1.0), rng.gen_range(lo..1.0), rng.gen_range(lo..1.0));
        let mut table = table.with(&node.class, node.n, t);
        for c in &node.children {
            table = fill(rng, c, lo, table);
        }
        table
    }
    fill(rng, shape, lo, TableAccuracies::new(StepTriple::uniform(1.0)))
}

/// Exhaustive oracle: sums the probability of every step-outcome vector
/// under which the recursive evaluation succeeds.
pub fn enumerate_phi(shape: &ShapeNode, acc: &dyn StepAccuracies) -> f64 {
    fn probs(node: &ShapeNode, acc: &dyn StepAccuracies, out: &mut Vec<f64>) {
        let t = acc.eval(&node.class, node.n);
        if node.children.is_empty() {
            out.push(t.phi_u);
        } else {
            out.push(t.phi_d);
            for c in &node.children {
                probs(c, acc, out);
            }
            out.push(t.phi_m);
        }
    }
    fn eval(node: &ShapeNode, bits: &mut impl Iterator<Item = bool>) -> bool {
        if node.children.is_empty() {
            return bits.next().unwrap();
        }
        let d = bits.next().unwrap();
        let mut ok = d;
        for c in &node.children {
            ok &= eval(c, bits);
        }
        let m = bits.next().unwrap();
        ok && m
    }
    let mut p = Vec::new();
    probs(shape, acc, &mut p);
    let mut total = 0.0;
    for mask in 0u32..(1 << p.len()) {
        let bit = |i: usize| mask >> i & 1 == 1;
        let weight: f64 = (0..p.len()).map(|i| if bit(i) { p[i] } else { 1.0 - p[i] }).product();
        if eval(shape, &mut (0..p.len()).map(bit)) {
            total += weight;
        }
    }
    total
}

use rdd_core::parser::{parse_decomposition, Decomposition};
use rdd_core::prompts::{ExampleSet, MetaTask, Regime};
use std::collections::BTreeSet;

/// Expected structure of one listing: `None` for a unit declaration,
/// otherwise the dependency set of each bullet.
pub type Expected = Option<Vec<&'static [&'static str]>>;

const NO: &[&str] = &[];

fn split(n: usize) -> Expected {
    Some(vec![NO; n])
}

/// Every packaged decomposition listing with its expected parse.
pub fn listing_table() -> Vec<(MetaTask, Regime, DecompositionMode, Vec<Expected>)> {
    vec![
        (
            MetaTask::Decompose,
            Regime::TaskSpecific,
            DecompositionMode::Independent,
            vec![None, split(2), split(3), None, split(4)],
        ),
        (
            MetaTask::Decompose,
            Regime::Generic,
            DecompositionMode::Independent,
            vec![None, split(2), None, split(2), None, split(3), None, split(2)],
        ),
        (
            MetaTask::DecomposeWithDeps,
            Regime::Generic,
            DecompositionMode::WithDependencies,
            vec![
                None,
                Some(vec![NO, &["P-1"], &["P-2"]]),
                Some(vec![NO, NO, &["P-1", "P-2"]]),
                split(2),
                None,
                split(2),
                Some(vec![NO, &["P-1"]]),
                None,
            ],
        ),
    ]
}

pub fn check_listings(set: &ExampleSet, mode: DecompositionMode, expected: &[Expected]) -> usize {
    assert_eq!(set.shots.len(), expected.len(), "{}", set.name);
    for (i, (shot, want)) in set.shots.iter().zip(expected).enumerate() {
        let parsed = parse_decomposition(&shot.target, mode, 16).unwrap_or_else(|e| panic!("{} #{i}: {e}", set.name));
        match (&parsed.variant, want) {
            (Decomposition::UnitProblem, None) => {}
            (Decomposition::SubProblems(subs), Some(deps)) => {
                assert_eq!(subs.len(), deps.len(), "{} #{i}", set.name);
                for (k, (sub, d)) in subs.iter().zip(deps).enumerate() {
                    let got: BTreeSet<&str> = sub.dep_refs.iter().map(|p| p.as_str()).collect();
                    let want: BTreeSet<&str> = d.iter().copied().collect();
                    assert_eq!(got, want, "{} #{i} bullet {k}", set.name);
                    if mode == DecompositionMode::WithDependencies {
                        assert_eq!(sub.id.as_ref().unwrap().as_str(), format!("P-{}", k + 1));
                    }
                    assert!(!sub.description.is_empty());
                }
            }
            (got, want) => panic!("{} #{i}: parsed {got:?}, expected {want:?}", set.name),
        }
    }
    expected.len()
}

/// Partition splits must reassemble the listed input.
pub fn check_partitions(set: &ExampleSet) {
    let list = |s: &str| s[s.find('[').unwrap() + 1..s.find(']').unwrap()].to_string();
    for shot in &set.shots {
        let parsed = parse_decomposition(&shot.target, DecompositionMode::Independent, 16).unwrap();
        if let Decomposition::SubProblems(subs) = parsed.variant {
            let joined: Vec<String> = subs.iter().map(|s| list(&s.description)).collect();
            assert_eq!(joined.join(", "), list(&shot.input), "{}", set.name);
        }
    }
}
