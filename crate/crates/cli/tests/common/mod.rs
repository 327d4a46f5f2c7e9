//! Shared fixtures, generators and brute-force oracles for the integration
//! and acceptance suites.

#![allow(dead_code)]

use msgsynth_core::bmsc::{Bmsc, BmscBuilder, OrderItem, ProcessId};
use msgsynth_core::choice::initiating_processes;
use msgsynth_core::graph::{MsgGraph, NodeId};
use msgsynth_core::runtime::SplitMix64;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::PathBuf;

pub fn spec_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../specs")
        .join(name)
}

pub fn load_spec(name: &str) -> msgsynth_cli::parser::ParsedSpec {
    let source = std::fs::read_to_string(spec_path(name)).expect("fixture file exists");
    msgsynth_cli::parser::parse(&source).expect("fixture parses")
}

/// Build a random valid chart by sampling a FIFO execution: sends are issued
/// in declaration order, deliveries pop the oldest message of a random
/// nonempty channel.
pub fn random_bmsc(seed: u64, max_messages: usize) -> Bmsc {
    let mut rng = SplitMix64::new(seed);
    let all = ["p", "q", "r"];
    let nprocs = 2 + rng.pick(2);
    let labels = ["m1", "m2", "m3"];
    let n = 1 + rng.pick(max_messages);

    let mut builder = BmscBuilder::new();
    for p in &all[..nprocs] {
        builder = builder.process(*p);
    }
    let mut decls = Vec::new();
    for _ in 0..n {
        let from = rng.pick(nprocs);
        let to = (from + 1 + rng.pick(nprocs - 1)) % nprocs;
        decls.push((from, to));
        builder = builder.message(all[from], all[to], labels[rng.pick(labels.len())]);
    }

    let mut orders: BTreeMap<usize, Vec<OrderItem>> = BTreeMap::new();
    let mut inflight: BTreeMap<(usize, usize), VecDeque<usize>> = BTreeMap::new();
    let mut next_send = 0;
    let mut pending = 0usize;
    while next_send < n || pending > 0 {
        let channels: Vec<(usize, usize)> = inflight
            .iter()
            .filter(|(_, q)| !q.is_empty())
            .map(|(k, _)| *k)
            .collect();
        let do_send = next_send < n && (channels.is_empty() || rng.pick(2) == 0);
        if do_send {
            let (from, to) = decls[next_send];
            orders
                .entry(from)
                .or_default()
                .push(OrderItem::Send(next_send));
            inflight.entry((from, to)).or_default().push_back(next_send);
            pending += 1;
            next_send += 1;
        } else {
            let key = channels[rng.pick(channels.len())];
            let msg = inflight.get_mut(&key).unwrap().pop_front().unwrap();
            orders
                .entry(key.1)
                .or_default()
                .push(OrderItem::Receive(msg));
            pending -= 1;
        }
    }
    for (pi, items) in orders {
        builder = builder.order(all[pi], items);
    }
    builder
        .build()
        .expect("sampled executions are valid charts")
}

/// A small random chart for graph nodes: up to two messages among two or
/// three processes, occasionally empty, occasionally a crossing pair.
fn random_node_chart(rng: &mut SplitMix64, procs: &[&str]) -> Bmsc {
    match rng.pick(5) {
        0 => Bmsc::empty(procs.iter().copied()),
        1 if procs.len() >= 2 => {
            // Crossing pair between two random processes.
            let a = rng.pick(procs.len());
            let b = (a + 1 + rng.pick(procs.len() - 1)) % procs.len();
            let mut builder = BmscBuilder::new();
            for p in procs {
                builder = builder.process(*p);
            }
            builder
                .message(procs[a], procs[b], "x1")
                .message(procs[b], procs[a], "x2")
                .order(procs[a], vec![OrderItem::Send(0), OrderItem::Receive(1)])
                .order(procs[b], vec![OrderItem::Send(1), OrderItem::Receive(0)])
                .build()
                .unwrap()
        }
        _ => {
            let mut builder = BmscBuilder::new();
            for p in procs {
                builder = builder.process(*p);
            }
            let n = 1 + rng.pick(2);
            for _ in 0..n {
                let a = rng.pick(procs.len());
                let b = (a + 1 + rng.pick(procs.len() - 1)) % procs.len();
                let label = ["m1", "m2", "m3"][rng.pick(3)];
                builder = builder.message(procs[a], procs[b], label);
            }
            builder.build().unwrap()
        }
    }
}

/// Random valid graph over at most `max_nodes` nodes. Acyclic graphs order
/// the nodes and only add forward edges; otherwise a few back edges between
/// interior nodes are allowed. Output always satisfies the graph invariants.
pub fn random_msg_graph(seed: u64, max_nodes: usize, acyclic: bool) -> MsgGraph {
    let mut rng = SplitMix64::new(seed);
    let all = ["p", "q", "r"];
    let nprocs = 2 + rng.pick(2);
    let procs = &all[..nprocs];

    let mid = rng.pick(max_nodes.saturating_sub(1).max(1));
    let mut names: Vec<String> = vec!["s0".to_owned()];
    for i in 0..mid {
        names.push(format!("n{i}"));
    }
    names.push("sf".to_owned());
    let count = names.len();

    let mut g = MsgGraph::new("s0", "sf");
    for name in &names {
        g.add_node(name.as_str(), random_node_chart(&mut rng, procs));
    }

    // Forward edges with guaranteed progress, then optional back edges.
    for i in 0..count - 1 {
        let mut targets = BTreeSet::new();
        targets.insert(i + 1 + rng.pick(count - i - 1));
        if rng.pick(2) == 0 {
            targets.insert(i + 1 + rng.pick(count - i - 1));
        }
        for t in targets {
            g.add_edge(names[i].as_str(), names[t].as_str());
        }
    }
    // Ensure every interior node is entered.
    for i in 1..count {
        if g.predecessors(&NodeId::new(names[i].as_str()))
            .next()
            .is_none()
        {
            let from = rng.pick(i);
            g.add_edge(names[from].as_str(), names[i].as_str());
        }
    }
    if !acyclic && count > 2 {
        for _ in 0..rng.pick(2) + 1 {
            let from = 1 + rng.pick(count - 2);
            let to = 1 + rng.pick(count - 2);
            g.add_edge(names[from].as_str(), names[to].as_str());
        }
        // Back edges may strand nodes from the terminal; keep only valid
        // samples by removing the offending edges again.
        while !g.is_valid() {
            let bad = g.validate();
            let mut fixed = MsgGraph::new("s0", "sf");
            for name in &names {
                fixed.add_node(
                    name.as_str(),
                    g.label(&NodeId::new(name.as_str())).unwrap().clone(),
                );
            }
            let mut dropped = false;
            for (from, to) in g.edges() {
                let is_back = names.iter().position(|n| n == from.as_str())
                    >= names.iter().position(|n| n == to.as_str());
                if !dropped && is_back && !bad.is_empty() {
                    dropped = true;
                    continue;
                }
                fixed.add_edge(from.as_str(), to.as_str());
            }
            if !dropped {
                break;
            }
            g = fixed;
        }
    }
    g
}

/// All paths of an acyclic graph from `from` to `to`, inclusive.
pub fn dag_paths(g: &MsgGraph, from: &NodeId, to: &NodeId) -> Vec<Vec<NodeId>> {
    let mut out = Vec::new();
    let mut stack = vec![vec![from.clone()]];
    while let Some(path) = stack.pop() {
        let last = path.last().unwrap();
        if last == to {
            out.push(path);
            continue;
        }
        for succ in g.successors(last) {
            let mut next = path.clone();
            next.push(succ.clone());
            stack.push(next);
        }
    }
    out
}

/// Brute-force triggers on an acyclic graph: enumerate every path from the
/// successors of `s` and collect the initiators of the composed charts.
pub fn dag_triggers(g: &MsgGraph, s: &NodeId) -> BTreeSet<ProcessId> {
    let mut out = BTreeSet::new();
    let mut stack: Vec<Vec<NodeId>> = g.successors(s).map(|n| vec![n.clone()]).collect();
    while let Some(path) = stack.pop() {
        let chart = g.compose_path(&path).unwrap();
        out.extend(initiating_processes(&chart));
        let last = path.last().unwrap();
        for succ in g.successors(last) {
            let mut next = path.clone();
            next.push(succ.clone());
            stack.push(next);
        }
    }
    out
}

/// Brute-force controllability on an acyclic graph: check every inbound path
/// for a resolving event; the cycle condition is vacuous.
pub fn dag_controllable(g: &MsgGraph, u: &NodeId) -> bool {
    let trig = dag_triggers(g, u);
    for path in dag_paths(g, g.initial(), u) {
        let chart = g.compose_path(&path).unwrap();
        if msgsynth_core::choice::resolving_events(&chart, &trig).is_empty() {
            return false;
        }
    }
    true
}
