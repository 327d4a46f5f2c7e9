//! Structural analysis of a message sequence graph: initiating processes,
//! triggers sets, resolving events, local-choice and controllable-choice
//! classification, prediction paths and run partitioning.

use crate::bmsc::{Bmsc, EventKind, EventRef, ProcessId};
use crate::graph::{MsgGraph, NodeId};
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChoiceError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {0} is not a choice node")]
    NotAChoiceNode(NodeId),
    #[error("graph is not controllable-choice; offending nodes: {}", DisplayNodes(.0))]
    NotControllable(Vec<NodeId>),
    #[error("no prediction path of length at most {bound} terminates from node {start}")]
    NoTerminatingPath { start: NodeId, bound: usize },
    #[error("run does not start with the initial path")]
    MissingInitialPrefix,
    #[error("sequence is not a run of the graph")]
    NotARun,
    #[error("no prediction-path decomposition for the run suffix starting at {}", DisplayNodes(.0))]
    StuckSuffix(Vec<NodeId>),
}

struct DisplayNodes<'a>(&'a Vec<NodeId>);

impl fmt::Display for DisplayNodes<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, n) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{n}")?;
        }
        Ok(())
    }
}

/// Processes that own a minimal event of the chart's visual order. Minimal
/// events are exactly first-on-process sends, so no closure is needed.
pub fn initiating_processes(b: &Bmsc) -> BTreeSet<ProcessId> {
    let mut out = BTreeSet::new();
    for p in b.processes() {
        if let Some(first) = b.first_event_of(p) {
            if b.events()[first].kind == EventKind::Send {
                out.insert(p.clone());
            }
        }
    }
    out
}

/// Processes that can initiate the communication on some path after `s`.
///
/// A process initiates a composed chart exactly when the first node of the
/// path that contains any of its events opens with one of its sends, so a
/// reachability walk through nodes silent for the process decides membership.
pub fn triggers(g: &MsgGraph, s: &NodeId) -> Result<BTreeSet<ProcessId>, ChoiceError> {
    if !g.contains_node(s) {
        return Err(ChoiceError::UnknownNode(s.clone()));
    }
    let mut out = BTreeSet::new();
    for p in g.processes() {
        let mut stack: Vec<NodeId> = g.successors(s).cloned().collect();
        let mut seen: BTreeSet<NodeId> = BTreeSet::new();
        while let Some(v) = stack.pop() {
            if !seen.insert(v.clone()) {
                continue;
            }
            let label = g.label(&v).expect("validated node");
            match label.first_event_of(&p) {
                Some(first) => {
                    if label.events()[first].kind == EventKind::Send {
                        out.insert(p.clone());
                        break;
                    }
                    // p opens with a receive here; any path through v has its
                    // first p-event fixed, so do not continue past it.
                }
                None => stack.extend(g.successors(&v).cloned()),
            }
        }
    }
    Ok(out)
}

/// Send events that causally precede at least one event on every process of
/// `procs` inside `b`.
pub fn resolving_events(b: &Bmsc, procs: &BTreeSet<ProcessId>) -> BTreeSet<EventRef> {
    let Ok(vo) = b.visual_order() else {
        return BTreeSet::new();
    };
    let mut out = BTreeSet::new();
    for (er, ev) in b.events() {
        if ev.kind != EventKind::Send {
            continue;
        }
        let covered = procs
            .iter()
            .all(|p| b.order_of(p).iter().any(|f| vo.precedes(er, f)));
        if covered {
            out.insert(*er);
        }
    }
    out
}

/// A choice node is local exactly when its triggers set is a singleton.
pub fn is_local_choice(g: &MsgGraph, u: &NodeId) -> Result<bool, ChoiceError> {
    if !g.contains_node(u) {
        return Err(ChoiceError::UnknownNode(u.clone()));
    }
    if !g.is_choice_node(u) {
        return Err(ChoiceError::NotAChoiceNode(u.clone()));
    }
    Ok(triggers(g, u)?.len() == 1)
}

/// Which controllability condition a counterexample path violates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CtrlCondition {
    /// A path from the initial node to the choice node lacks a resolving event.
    InboundPath,
    /// A cycle through the choice node lacks a resolving event.
    Cycle,
}

/// Verdict of [`is_controllable_choice`], with a concrete unresolved path when
/// negative.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Controllability {
    pub controllable: bool,
    pub counterexample: Option<(CtrlCondition, Vec<NodeId>)>,
}

/// Per-candidate coverage while scanning a path: the propagation seed set
/// (processes with an event at or after the send, including its owner) and
/// the covered set (processes with an event strictly after the send).
type Candidate = (BTreeSet<ProcessId>, BTreeSet<ProcessId>);
type CoverState = BTreeSet<Candidate>;

/// Per-node data for coverage propagation.
struct NodeCoverage {
    /// For each send in the node chart: its initial candidate.
    seeds: Vec<Candidate>,
    /// For each process with events: owners of events at or after its first
    /// event in this chart.
    reach: BTreeMap<ProcessId, BTreeSet<ProcessId>>,
}

fn node_coverage(b: &Bmsc) -> NodeCoverage {
    let vo = b.visual_order().expect("node charts are validated");
    let mut seeds = Vec::new();
    for (er, ev) in b.events() {
        if ev.kind != EventKind::Send {
            continue;
        }
        let mut covered = BTreeSet::new();
        for (fr, fv) in b.events() {
            if vo.precedes(er, fr) {
                covered.insert(fv.process.clone());
            }
        }
        let mut seed = covered.clone();
        seed.insert(ev.process.clone());
        seeds.push((seed, covered));
    }
    let mut reach = BTreeMap::new();
    for p in b.processes() {
        let Some(first) = b.first_event_of(p) else {
            continue;
        };
        let mut owners = BTreeSet::new();
        owners.insert(p.clone());
        for (fr, fv) in b.events() {
            if vo.precedes(first, fr) {
                owners.insert(fv.process.clone());
            }
        }
        reach.insert(p.clone(), owners);
    }
    NodeCoverage { seeds, reach }
}

/// Candidate domination: future coverage grows monotonically in both
/// components, so a componentwise-smaller distinct candidate is redundant.
fn dominated(a: &Candidate, b: &Candidate) -> bool {
    a != b && a.0.is_subset(&b.0) && a.1.is_subset(&b.1)
}

fn prune(state: CoverState) -> CoverState {
    state
        .iter()
        .filter(|c| !state.iter().any(|d| dominated(c, d)))
        .cloned()
        .collect()
}

/// Extend every candidate across one more node chart and add the chart's own
/// sends as fresh candidates. Every event of a seed process in the next chart
/// lies strictly after the candidate send, so whatever is reachable from the
/// process's first event there becomes covered.
fn advance(state: &CoverState, cov: &NodeCoverage) -> CoverState {
    let mut next = BTreeSet::new();
    for (seed, covered) in state {
        let mut grown = covered.clone();
        for r in seed {
            if let Some(owners) = cov.reach.get(r) {
                grown.extend(owners.iter().cloned());
            }
        }
        let mut grown_seed = seed.clone();
        grown_seed.extend(grown.iter().cloned());
        next.insert((grown_seed, grown));
    }
    for seed in &cov.seeds {
        next.insert(seed.clone());
    }
    prune(next)
}

fn resolved(state: &CoverState, procs: &BTreeSet<ProcessId>) -> bool {
    state.iter().any(|(_, covered)| procs.is_subset(covered))
}

/// Search for a path that arrives at `target` without any candidate covering
/// `procs`. `starts` are the first nodes of the searched paths. Arrivals at
/// `target` are checked and not expanded further: coverage only grows along
/// extensions, so an unresolved longer path implies an unresolved minimal one.
fn find_unresolved_path(
    g: &MsgGraph,
    starts: &[NodeId],
    target: &NodeId,
    procs: &BTreeSet<ProcessId>,
    coverage: &BTreeMap<NodeId, NodeCoverage>,
) -> Option<Vec<NodeId>> {
    type Key = (NodeId, CoverState);
    let mut parent: BTreeMap<Key, Option<Key>> = BTreeMap::new();
    let mut queue: Vec<Key> = Vec::new();
    let mut head = 0;

    for start in starts {
        let state = advance(&BTreeSet::new(), &coverage[start]);
        let key = (start.clone(), state);
        if !parent.contains_key(&key) {
            parent.insert(key.clone(), None);
            queue.push(key);
        }
    }

    let rebuild = |parent: &BTreeMap<Key, Option<Key>>, mut key: Key| {
        let mut path = vec![key.0.clone()];
        while let Some(Some(prev)) = parent.get(&key) {
            path.push(prev.0.clone());
            key = prev.clone();
        }
        path.reverse();
        path
    };

    while head < queue.len() {
        let key = queue[head].clone();
        head += 1;
        let (node, state) = &key;
        if node == target {
            if !resolved(state, procs) {
                return Some(rebuild(&parent, key));
            }
            continue;
        }
        for succ in g.successors(node) {
            let next_state = advance(state, &coverage[succ]);
            let next_key = (succ.clone(), next_state);
            if !parent.contains_key(&next_key) {
                parent.insert(next_key.clone(), Some(key.clone()));
                queue.push(next_key);
            }
        }
    }
    None
}

/// Decide whether a choice node is controllable: every path from the initial
/// node to it and every cycle through it must carry a resolving event for its
/// triggers set. Exact over cycles via a coverage-antichain product.
pub fn is_controllable_choice(g: &MsgGraph, u: &NodeId) -> Result<Controllability, ChoiceError> {
    if !g.contains_node(u) {
        return Err(ChoiceError::UnknownNode(u.clone()));
    }
    if !g.is_choice_node(u) {
        return Err(ChoiceError::NotAChoiceNode(u.clone()));
    }
    let trig = triggers(g, u)?;
    let coverage: BTreeMap<NodeId, NodeCoverage> = g
        .node_ids()
        .map(|n| {
            (
                n.clone(),
                node_coverage(g.label(n).expect("validated node")),
            )
        })
        .collect();

    let inbound = find_unresolved_path(g, &[g.initial().clone()], u, &trig, &coverage);
    if let Some(path) = inbound {
        return Ok(Controllability {
            controllable: false,
            counterexample: Some((CtrlCondition::InboundPath, path)),
        });
    }
    let succs: Vec<NodeId> = g.successors(u).cloned().collect();
    let cycle = find_unresolved_path(g, &succs, u, &trig, &coverage);
    if let Some(path) = cycle {
        return Ok(Controllability {
            controllable: false,
            counterexample: Some((CtrlCondition::Cycle, path)),
        });
    }
    Ok(Controllability {
        controllable: true,
        counterexample: None,
    })
}

/// Verdict for a single choice node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeVerdict {
    LocalChoice,
    ControllableChoice,
    Uncontrollable {
        counterexample: Option<(CtrlCondition, Vec<NodeId>)>,
    },
}

/// Overall class of the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OverallClass {
    LocalChoiceMsg,
    ControllableChoiceMsg,
    Neither,
}

impl fmt::Display for OverallClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OverallClass::LocalChoiceMsg => f.write_str("local-choice MSG"),
            OverallClass::ControllableChoiceMsg => f.write_str("controllable-choice MSG"),
            OverallClass::Neither => f.write_str("neither"),
        }
    }
}

/// Per-node verdicts and the overall class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub nodes: BTreeMap<NodeId, NodeVerdict>,
    pub overall: OverallClass,
}

impl Classification {
    /// True when synthesis accepts the graph.
    pub fn realizable(&self) -> bool {
        !matches!(self.overall, OverallClass::Neither)
    }

    pub fn uncontrollable_nodes(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|(_, v)| matches!(v, NodeVerdict::Uncontrollable { .. }))
            .map(|(n, _)| n.clone())
            .collect()
    }
}

/// Classify every choice node and derive the overall class.
pub fn classify(g: &MsgGraph) -> Classification {
    let mut nodes = BTreeMap::new();
    let mut all_local = true;
    let mut all_ok = true;
    for n in g.node_ids() {
        if !g.is_choice_node(n) {
            continue;
        }
        let verdict = if is_local_choice(g, n).unwrap_or(false) {
            NodeVerdict::LocalChoice
        } else {
            all_local = false;
            match is_controllable_choice(g, n) {
                Ok(Controllability {
                    controllable: true, ..
                }) => NodeVerdict::ControllableChoice,
                Ok(Controllability { counterexample, .. }) => {
                    all_ok = false;
                    NodeVerdict::Uncontrollable { counterexample }
                }
                Err(_) => {
                    all_ok = false;
                    NodeVerdict::Uncontrollable {
                        counterexample: None,
                    }
                }
            }
        };
        nodes.insert(n.clone(), verdict);
    }
    let overall = if !all_ok {
        OverallClass::Neither
    } else if all_local {
        OverallClass::LocalChoiceMsg
    } else {
        OverallClass::ControllableChoiceMsg
    };
    Classification { nodes, overall }
}

/// How a prediction path terminates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PathKind {
    /// The longest common prefix of all runs.
    Initial,
    /// Ends at a local-choice node.
    LocalChoice,
    /// Ends at a controllable-choice node revisited within the path.
    ControllableRevisit,
    /// Ends at the terminal node.
    Terminal,
}

/// A prediction path: node sequence plus its terminating condition.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PredictionPath {
    pub nodes: Vec<NodeId>,
    pub kind: PathKind,
}

impl PredictionPath {
    pub fn first_node(&self) -> &NodeId {
        self.nodes.first().expect("prediction paths are nonempty")
    }

    pub fn last_node(&self) -> &NodeId {
        self.nodes.last().expect("prediction paths are nonempty")
    }
}

impl fmt::Display for PredictionPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, n) in self.nodes.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{n}")?;
        }
        Ok(())
    }
}

/// The longest common prefix of all runs: follow unique successors from the
/// initial node until a choice node or the terminal node is appended.
pub fn initial_path(g: &MsgGraph) -> PredictionPath {
    let mut nodes = vec![g.initial().clone()];
    for _ in 0..g.node_count() {
        let last = nodes.last().expect("nonempty");
        if last == g.terminal() || g.is_choice_node(last) {
            break;
        }
        let next = g.successors(last).next().cloned();
        match next {
            Some(next) => nodes.push(next),
            None => break,
        }
    }
    PredictionPath {
        nodes,
        kind: PathKind::Initial,
    }
}

/// Node classes relevant to prediction-path termination.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NodeClass {
    Local,
    Controllable,
    Terminal,
    Plain,
}

fn node_classes(g: &MsgGraph, cls: &Classification) -> BTreeMap<NodeId, NodeClass> {
    let mut out = BTreeMap::new();
    for n in g.node_ids() {
        let class = if n == g.terminal() {
            NodeClass::Terminal
        } else {
            match cls.nodes.get(n) {
                Some(NodeVerdict::LocalChoice) => NodeClass::Local,
                Some(NodeVerdict::ControllableChoice) => NodeClass::Controllable,
                Some(NodeVerdict::Uncontrollable { .. }) | None => NodeClass::Plain,
            }
        };
        out.insert(n.clone(), class);
    }
    out
}

/// Check the terminating conditions on the last node of `nodes`.
fn termination(nodes: &[NodeId], classes: &BTreeMap<NodeId, NodeClass>) -> Option<PathKind> {
    let last = nodes.last()?;
    match classes.get(last)? {
        NodeClass::Local => Some(PathKind::LocalChoice),
        NodeClass::Terminal => Some(PathKind::Terminal),
        NodeClass::Controllable => {
            let n = nodes.len();
            if nodes[..n - 1].iter().any(|m| m == last) {
                Some(PathKind::ControllableRevisit)
            } else {
                None
            }
        }
        NodeClass::Plain => None,
    }
}

/// Minimal terminating paths starting at `start`.
fn paths_from(
    g: &MsgGraph,
    start: &NodeId,
    classes: &BTreeMap<NodeId, NodeClass>,
    bound: usize,
) -> Result<Vec<PredictionPath>, ChoiceError> {
    let mut out = Vec::new();
    let mut stack = vec![vec![start.clone()]];
    while let Some(nodes) = stack.pop() {
        if let Some(kind) = termination(&nodes, classes) {
            out.push(PredictionPath { nodes, kind });
            continue;
        }
        if nodes.len() >= bound {
            return Err(ChoiceError::NoTerminatingPath {
                start: start.clone(),
                bound,
            });
        }
        let last = nodes.last().expect("nonempty");
        let succs: Vec<NodeId> = g.successors(last).cloned().collect();
        if succs.is_empty() {
            return Err(ChoiceError::NoTerminatingPath {
                start: start.clone(),
                bound,
            });
        }
        for s in succs {
            let mut next = nodes.clone();
            next.push(s);
            stack.push(next);
        }
    }
    Ok(out)
}

/// All prediction paths of the graph: the initial path plus the least fixpoint
/// of minimal terminating paths from successors of choice-ending paths.
pub fn prediction_paths(g: &MsgGraph) -> Result<Vec<PredictionPath>, ChoiceError> {
    let cls = classify(g);
    if !cls.realizable() {
        return Err(ChoiceError::NotControllable(cls.uncontrollable_nodes()));
    }
    let classes = node_classes(g, &cls);
    let bound = 2 * g.node_count();

    let init = initial_path(g);
    let mut known: BTreeSet<Vec<NodeId>> = BTreeSet::new();
    let mut out = vec![init.clone()];
    known.insert(init.nodes.clone());

    let mut frontier = vec![init];
    let mut seeded: BTreeSet<NodeId> = BTreeSet::new();
    while let Some(path) = frontier.pop() {
        let last = path.last_node();
        let is_choice_end = matches!(
            classes.get(last),
            Some(NodeClass::Local) | Some(NodeClass::Controllable)
        );
        if !is_choice_end || !seeded.insert(last.clone()) {
            continue;
        }
        for succ in g.successors(last) {
            for p in paths_from(g, succ, &classes, bound)? {
                if known.insert(p.nodes.clone()) {
                    out.push(p.clone());
                    frontier.push(p);
                }
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Partition a run into the initial path followed by minimal prediction
/// paths; minimality makes the decomposition unique.
pub fn partition_run(g: &MsgGraph, run: &[NodeId]) -> Result<Vec<PredictionPath>, ChoiceError> {
    if !g.is_run(run) {
        return Err(ChoiceError::NotARun);
    }
    let cls = classify(g);
    let classes = node_classes(g, &cls);

    let init = initial_path(g);
    if run.len() < init.nodes.len() || run[..init.nodes.len()] != init.nodes[..] {
        return Err(ChoiceError::MissingInitialPrefix);
    }
    let mut parts = vec![init.clone()];
    let mut i = init.nodes.len();
    while i < run.len() {
        let mut j = i;
        let mut found = None;
        while j < run.len() {
            if let Some(kind) = termination(&run[i..=j], &classes) {
                found = Some(PredictionPath {
                    nodes: run[i..=j].to_vec(),
                    kind,
                });
                break;
            }
            j += 1;
        }
        match found {
            Some(part) => {
                i = j + 1;
                parts.push(part);
            }
            None => return Err(ChoiceError::StuckSuffix(run[i..].to_vec())),
        }
    }
    Ok(parts)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::bmsc::fixtures::crossing;
    use crate::bmsc::BmscBuilder;

    /// Choice directly after the initial node with branches initiated by
    /// distinct processes and no prior communication.
    pub fn ex_race() -> MsgGraph {
        let a = BmscBuilder::new()
            .process("p")
            .process("q")
            .message("p", "q", "m1")
            .build()
            .unwrap();
        let b = BmscBuilder::new()
            .process("p")
            .process("q")
            .message("q", "p", "m2")
            .build()
            .unwrap();
        let mut g = MsgGraph::new("s0", "sf");
        g.add_node("s0", Bmsc::empty(["p", "q"]))
            .add_node("u", Bmsc::empty(["p", "q"]))
            .add_node("A", a)
            .add_node("B", b)
            .add_node("sf", Bmsc::empty(["p", "q"]))
            .add_edge("s0", "u")
            .add_edge("u", "A")
            .add_edge("u", "B")
            .add_edge("A", "sf")
            .add_edge("B", "sf");
        g
    }

    /// Self-loop whose chart has a send covering only one of the two
    /// triggering processes; the one-lap cycle is the counterexample.
    pub fn ex_selfloop() -> MsgGraph {
        let loop_chart = BmscBuilder::new()
            .process("p")
            .process("q")
            .message("q", "p", "m1")
            .build()
            .unwrap();
        let a = BmscBuilder::new()
            .process("p")
            .process("q")
            .message("p", "q", "ma")
            .build()
            .unwrap();
        let b = BmscBuilder::new()
            .process("p")
            .process("q")
            .message("q", "p", "mb")
            .build()
            .unwrap();
        let mut g = MsgGraph::new("s0", "sf");
        g.add_node("s0", crossing())
            .add_node("u", loop_chart)
            .add_node("A", a)
            .add_node("B", b)
            .add_node("sf", Bmsc::empty(["p", "q"]))
            .add_edge("s0", "u")
            .add_edge("u", "u")
            .add_edge("u", "A")
            .add_edge("u", "B")
            .add_edge("A", "sf")
            .add_edge("B", "sf");
        g
    }
}
