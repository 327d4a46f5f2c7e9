//! Cross-module checks of the synthesis pipeline: prediction invariants,
//! run partitioning against exhaustive splits, language agreement between
//! the interpreter-style exploration and the chart model.

mod common;

use common::{ex_cross, ex_empty, ex_local, random_bmsc};
use msgsynth_core::bmsc::Action;
use msgsynth_core::choice::{
    classify, initial_path, partition_run, prediction_paths, resolving_events, triggers,
    NodeVerdict, PathKind,
};
use msgsynth_core::graph::{MsgGraph, NodeId};
use msgsynth_core::realize::{enumerate_predictions, projection_cfm, synthesize_cfm};
use msgsynth_core::runtime::{accepted_words, explore, ExploreBounds};
use msgsynth_core::verify::{
    check_projection_realization, monitor_agreement, monitor_polling, monitor_promotion,
};
use std::collections::BTreeSet;

#[test]
fn predictions_respect_length_bound_and_carry_resolving_controls() {
    for g in [ex_cross(), ex_empty(), ex_local()] {
        let bound = 2 * g.node_count();
        let classification = classify(&g);
        for pred in enumerate_predictions(&g).unwrap() {
            assert!(pred.path.nodes.len() <= bound);
            let last = pred.path.last_node();
            match classification.nodes.get(last) {
                Some(NodeVerdict::ControllableChoice) => {
                    let control = pred.control.expect("controllable end needs a control");
                    let chart = g.compose_path(&pred.path.nodes).unwrap();
                    let trig = triggers(&g, last).unwrap();
                    assert!(resolving_events(&chart, &trig).contains(&control));
                    // Activity: every triggering process acts in the chart.
                    for p in &trig {
                        assert!(!chart.projection(p).is_empty());
                    }
                }
                _ => assert_eq!(pred.control, None),
            }
        }
    }
}

/// Every way to split `run` into the initial path plus minimal prediction
/// paths, by brute force over cut points.
fn exhaustive_partitions(g: &MsgGraph, run: &[NodeId]) -> Vec<Vec<Vec<NodeId>>> {
    let init = initial_path(g);
    if run.len() < init.nodes.len() || run[..init.nodes.len()] != init.nodes[..] {
        return Vec::new();
    }
    let paths = prediction_paths(g).unwrap();
    let shapes: BTreeSet<Vec<NodeId>> = paths
        .iter()
        .filter(|p| p.kind != PathKind::Initial)
        .map(|p| p.nodes.clone())
        .collect();
    let mut out = Vec::new();
    let mut stack = vec![(init.nodes.len(), vec![init.nodes.clone()])];
    while let Some((from, parts)) = stack.pop() {
        if from == run.len() {
            out.push(parts);
            continue;
        }
        for to in from..run.len() {
            let piece = run[from..=to].to_vec();
            if shapes.contains(&piece) {
                let mut next = parts.clone();
                next.push(piece);
                stack.push((to + 1, next));
            }
        }
    }
    out
}

#[test]
fn run_partition_is_total_and_unique_on_bounded_runs() {
    for g in [ex_cross(), ex_empty(), ex_local()] {
        for run in g.runs_bounded(5) {
            let parts = partition_run(&g, &run).expect("partition is total on runs");
            let rebuilt: Vec<NodeId> = parts.iter().flat_map(|p| p.nodes.clone()).collect();
            assert_eq!(rebuilt, run, "re-concatenation reproduces the run");

            let all = exhaustive_partitions(&g, &run);
            assert_eq!(all.len(), 1, "exactly one split for {run:?}, got {all:?}");
            assert_eq!(
                all[0],
                parts.iter().map(|p| p.nodes.clone()).collect::<Vec<_>>()
            );
        }
    }
}

#[test]
fn synthesized_language_matches_explicit_exploration() {
    // The machines are explicit; cross-check their language against a
    // configuration-graph walk restricted to accepting paths.
    let r = synthesize_cfm(&ex_local()).unwrap();
    let words = accepted_words(&r.cfm, 2, 10_000);
    let e = explore(&r.cfm, ExploreBounds::default());
    // Exploration found an accepting configuration for each word.
    assert_eq!(e.accepting.len(), 1);
    assert_eq!(words.words.len(), 2);
}

#[test]
fn projection_realizations_hold_on_random_charts() {
    for seed in 0..24u64 {
        let b = random_bmsc(seed, 4);
        let check = check_projection_realization(&b, 12).unwrap();
        assert!(
            check.equal,
            "seed {seed}: {:?} {:?}",
            check.missing, check.extra
        );
    }
}

#[test]
fn monitors_stay_quiet_across_fixture_explorations() {
    for g in [ex_cross(), ex_empty(), ex_local()] {
        let r = synthesize_cfm(&g).unwrap();
        let e = explore(&r.cfm, ExploreBounds::default());
        assert!(e.deadlocks.is_empty());
        assert!(monitor_agreement(&r.cfm, &e).is_empty());
        assert!(monitor_polling(&g, &r, &e).is_empty());
        assert!(monitor_promotion(&r, &e).is_empty());
    }
}

#[test]
fn accepted_words_reconstruct_to_valid_charts() {
    let r = synthesize_cfm(&ex_cross()).unwrap();
    let words = accepted_words(&r.cfm, 8, 100_000);
    assert!(words.complete);
    assert!(!words.words.is_empty());
    for w in &words.words {
        let chart = msgsynth_core::verify::word_to_bmsc(w).unwrap();
        assert!(chart.validate().is_empty());
    }
}

/// Brute-force triggers: enumerate every path from the successors of `s`
/// with at most `|S| + 1` visits per node and collect initiators of the
/// composed charts.
fn bounded_triggers_oracle(
    g: &MsgGraph,
    s: &NodeId,
) -> std::collections::BTreeSet<msgsynth_core::ProcessId> {
    let max_visits = g.node_count() + 1;
    let mut out = std::collections::BTreeSet::new();
    let mut stack: Vec<Vec<NodeId>> = g.successors(s).map(|n| vec![n.clone()]).collect();
    while let Some(path) = stack.pop() {
        let chart = g.compose_path(&path).unwrap();
        out.extend(msgsynth_core::choice::initiating_processes(&chart));
        let last = path.last().unwrap().clone();
        for succ in g.successors(&last) {
            let visits = path.iter().filter(|n| *n == succ).count();
            if visits < max_visits {
                let mut next = path.clone();
                next.push(succ.clone());
                stack.push(next);
            }
        }
    }
    out
}

#[test]
fn triggers_matches_bounded_path_enumeration_on_cyclic_fixtures() {
    for g in [ex_cross(), ex_local(), ex_empty()] {
        for node in g.node_ids() {
            assert_eq!(
                triggers(&g, node).unwrap(),
                bounded_triggers_oracle(&g, node),
                "triggers disagree at {node}"
            );
        }
    }
}

#[test]
fn word_reconstruction_is_isomorphic_on_random_charts() {
    for seed in 0..16u64 {
        let b = random_bmsc(seed, 3);
        let mine: std::collections::BTreeMap<_, _> = b
            .canonical_projections()
            .into_iter()
            .filter(|(_, word)| !word.is_empty())
            .collect();
        for w in b.linearizations(8).unwrap() {
            let rebuilt = msgsynth_core::verify::word_to_bmsc(&w).unwrap();
            assert!(rebuilt.validate().is_empty());
            // Declared-but-silent processes cannot be recovered from a word,
            // so compare the communicating projections.
            assert_eq!(rebuilt.canonical_projections(), mine, "seed {seed}");
        }
    }
}

#[test]
fn projection_cfm_of_empty_chart_accepts_epsilon() {
    let cfm = projection_cfm(&msgsynth_core::bmsc::Bmsc::empty(["p"]));
    let words = accepted_words(&cfm, 0, 100);
    let expected: BTreeSet<Vec<Action>> = [vec![]].into_iter().collect();
    assert_eq!(words.words, expected);
}
