mod common;

use rdd_core::analysis::estimate_step_accuracies;
use rdd_core::graph::{DecompositionGraph, NodeKind, ProblemId, SubProblemSpec};
use rdd_core::backends::ReplayBackend;
use rdd_core::scheduler::{Scheduler, SchedulerConfig, SchedulerError, Step, Verdict};

#[test]
fn dependency_is_solved_before_dependent_is_decomposed() {
    let (out, _) = common::example_run().run();
    let order: Vec<(Step, String)> = out.trace.iter().map(|e| (e.step, e.node.to_string())).collect();
    let expected: Vec<(Step, String)> = common::EXAMPLE_RUN_ORDER.iter().map(|(s, n)| (*s, n.to_string())).collect();
    assert_eq!(order, expected);
    assert_eq!(out.solution, "7 3 6");
    let p2_decompose = out.trace.iter().find(|e| e.step == Step::Decompose && e.node.as_str() == "P-2").unwrap();
    assert!(p2_decompose.prompt.contains("Reverse the following list: 6 3 7"));
}

#[test]
fn propagation_transcript() {
    let (out, scored) = common::propagation().run();
    assert_eq!(out.solution, "a b c g l n");
    assert_eq!(scored.root, Verdict::Incorrect);
    assert_eq!(scored.node("P-1"), Some(Verdict::Correct));
    assert_eq!(scored.node("P-2"), Some(Verdict::Incorrect));
    assert!(scored.propagation && !scored.recovery);
    // the merge faithfully combined what it was given
    let merge = scored.trace.iter().find(|e| e.step == Step::Merge).unwrap();
    assert_eq!(merge.verdict, Some(Verdict::Correct));
}

#[test]
fn recovery_transcript() {
    let (out, scored) = common::recovery().run();
    assert_eq!(out.solution, "6 6 3");
    assert_eq!(scored.root, Verdict::Correct);
    assert_eq!(scored.node("P-1"), Some(Verdict::Incorrect));
    assert_eq!(scored.node("P-2"), Some(Verdict::Incorrect));
    let decompose = scored.trace.iter().find(|e| e.step == Step::Decompose).unwrap();
    assert_eq!(decompose.verdict, Some(Verdict::Incorrect));
    let est = estimate_step_accuracies(&[scored]).unwrap();
    assert_eq!((est.recoveries, est.propagations), (1, 0));
}

#[test]
fn injected_dependency_cycle_is_reported() {
    let mut graph = DecompositionGraph::new("root");
    graph
        .add_decomposition(
            &ProblemId::root(),
            vec![SubProblemSpec::new("P-1", "first", &[]), SubProblemSpec::new("P-2", "second {P-1}", &["P-1"])],
            4,
        )
        .unwrap();
    graph.inject_dependency(&ProblemId::local(1), &ProblemId::local(2));
    assert!(!graph.check_acyclic().is_acyclic());
    let backend = ReplayBackend::new(vec![]);
    let config = SchedulerConfig::default();
    let prompts = config.prompt_set().unwrap();
    let s = Scheduler::new(graph, &backend, &prompts, config).unwrap();
    assert!(matches!(s.schedule_bfs(&ProblemId::root()), Err(SchedulerError::Cycle(_))));
    assert_eq!(s.graph().node(&ProblemId::root()).unwrap().kind, NodeKind::Composite);
}
