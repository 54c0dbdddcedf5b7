mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rdd_core::analysis::{
    check_theorem_conditions, matched_cost, monte_carlo_phi, phi_rdd_closed_form, ResourceReport,
};
use rdd_core::graph::ProblemId;
use rdd_core::parser::{parse_decomposition, substitute_dependencies, Decomposition, DecompositionMode};
use rdd_core::vote::{binary_search_vote, Choice, Comparator, VoteError};
use std::collections::{BTreeMap, BTreeSet};

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec("[a-z]{1,8}", 1..8).prop_map(|w| w.join(" "))
}

proptest! {
    #[test]
    fn independent_bullets_round_trip(items in prop::collection::vec(sentence(), 1..=4)) {
        let body: String = items.iter().map(|d| format!("- {d}\n")).collect();
        let text = format!("Split it.\n<ANSWER>\n{body}</ANSWER>");
        let parsed = parse_decomposition(&text, DecompositionMode::Independent, 4).unwrap();
        let Decomposition::SubProblems(subs) = parsed.variant else { panic!("unit") };
        let got: Vec<String> = subs.into_iter().map(|s| s.description).collect();
        prop_assert_eq!(got, items);
    }

    #[test]
    fn dependency_bullets_round_trip(
        items in prop::collection::vec((sentence(), prop::collection::vec(any::<prop::sample::Index>(), 0..3)), 1..=4)
    ) {
        let mut body = String::new();
        let mut expected = Vec::new();
        for (k, (desc, refs)) in items.iter().enumerate() {
            let deps: BTreeSet<usize> = if k == 0 { BTreeSet::new() } else { refs.iter().map(|r| r.index(k) + 1).collect() };
            let refs: String = deps.iter().map(|d| format!(" {{P-{d}}}")).collect();
            body.push_str(&format!("- [P-{}] {desc}{refs}\n", k + 1));
            expected.push(deps.into_iter().map(ProblemId::local).collect::<BTreeSet<_>>());
        }
        let parsed = parse_decomposition(&format!("<ANSWER>{body}</ANSWER>"), DecompositionMode::WithDependencies, 4).unwrap();
        let Decomposition::SubProblems(subs) = parsed.variant else { panic!("unit") };
        let got: Vec<BTreeSet<ProblemId>> = subs.into_iter().map(|s| s.dep_refs).collect();
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn substitution_is_idempotent(prefix in sentence(), suffix in sentence(), sol in "[a-z0-9 ]{0,12}") {
        let desc = format!("{prefix} {{P-1}} and {{P-2}} {suffix}");
        let map: BTreeMap<ProblemId, String> = [(ProblemId::local(1), sol.clone()), (ProblemId::local(2), "x".into())].into();
        let once = substitute_dependencies(&desc, &map).unwrap();
        prop_assert_eq!(substitute_dependencies(&once, &map).unwrap(), once.clone());
        prop_assert_eq!(once, format!("{prefix} {sol} and x {suffix}"));
    }

    #[test]
    fn vote_picks_a_candidate_within_budget(cands in prop::collection::vec("[a-c]{1,2}", 1..9), seed in any::<u64>()) {
        struct Coin(std::cell::Cell<u64>);
        impl Comparator for Coin {
            fn compare(&self, _: &str, _: &str, _: &str) -> Result<Choice, VoteError> {
                let s = self.0.get().wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                self.0.set(s);
                Ok(match s >> 62 { 0 => Choice::First, 1 => Choice::Unparsed, _ => Choice::Second })
            }
        }
        let out = binary_search_vote(&cands, "p", &Coin(seed.into())).unwrap();
        prop_assert!(cands.contains(&out.answer));
        prop_assert_eq!(&cands[out.index], &out.answer);
        prop_assert_eq!(out.comparator_calls, cands.len() - 1);
    }

    #[test]
    fn matched_cost_is_linear(ctx in 0u64..1u64 << 40, out in 0u64..1u64 << 40) {
        prop_assert_eq!(matched_cost(2 * ctx, 2 * out), 2 * matched_cost(ctx, out));
        prop_assert_eq!(ResourceReport::new(1, ctx, out).matched_cost() as u128, ctx as u128 + 3 * out as u128);
    }

    #[test]
    fn closed_form_matches_enumeration(seed in any::<u64>(), budget in 1usize..=10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = common::random_shape(&mut rng, budget);
        prop_assert!(shape.step_count() <= budget);
        let acc = common::random_accuracies(&mut rng, &shape, 0.0);
        let diff = (phi_rdd_closed_form(&shape, &acc) - common::enumerate_phi(&shape, &acc)).abs();
        prop_assert!(diff < 1e-12, "{}", diff);
    }

    #[test]
    fn failed_conditions_never_beat_unit_solving(seed in any::<u64>(), budget in 1usize..=12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = common::random_shape(&mut rng, budget);
        let acc = common::random_accuracies(&mut rng, &shape, 0.0);
        let r = check_theorem_conditions(&shape, &acc);
        if !(r.cond1 && r.cond2) {
            prop_assert!(r.phi_rdd <= r.phi_u_root + 1e-15, "{:?}", r);
        }
    }
}

#[test]
fn monte_carlo_converges_across_seeds() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let shape = common::random_shape(&mut rng, 9);
    let acc = common::random_accuracies(&mut rng, &shape, 0.6);
    let exact = phi_rdd_closed_form(&shape, &acc);
    let hits = (0..100u64)
        .filter(|&seed| monte_carlo_phi(&shape, &acc, 20_000, seed).within(exact, 3.0))
        .count();
    assert!(hits >= 99, "{hits}/100 within three standard errors");
}
