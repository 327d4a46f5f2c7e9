//! Message sequence graphs: charts on nodes, an edge relation, paths and
//! runs, and composition of a path into a single chart.

use crate::bmsc::{Bmsc, BmscError, ProcessId};
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Name of a graph node.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(name: impl Into<String>) -> Self {
        NodeId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId::new(s)
    }
}

/// Violations reported by [`MsgGraph::validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum GraphViolation {
    MissingNode { node: NodeId },
    EdgeEndpointUnknown { from: NodeId, to: NodeId },
    EdgeIntoInitial { from: NodeId },
    EdgeOutOfTerminal { to: NodeId },
    Unreachable { node: NodeId },
    CannotReachTerminal { node: NodeId },
    InvalidLabel { node: NodeId },
}

impl fmt::Display for GraphViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphViolation::MissingNode { node } => {
                write!(f, "node {node} is referenced but not declared")
            }
            GraphViolation::EdgeEndpointUnknown { from, to } => {
                write!(f, "edge {from} -> {to} references an unknown node")
            }
            GraphViolation::EdgeIntoInitial { from } => {
                write!(f, "edge {from} -> initial node is not allowed")
            }
            GraphViolation::EdgeOutOfTerminal { to } => {
                write!(f, "edge terminal node -> {to} is not allowed")
            }
            GraphViolation::Unreachable { node } => {
                write!(f, "node {node} is unreachable from the initial node")
            }
            GraphViolation::CannotReachTerminal { node } => {
                write!(f, "the terminal node is unreachable from node {node}")
            }
            GraphViolation::InvalidLabel { node } => {
                write!(f, "the chart labelling node {node} is invalid")
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("sequence is not a path of the graph")]
    NotAPath,
    #[error("sequence is not a run of the graph")]
    NotARun,
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error(transparent)]
    Chart(#[from] BmscError),
}

/// A directed graph over chart-labelled nodes with one initial and one
/// terminal node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MsgGraph {
    nodes: BTreeMap<NodeId, Bmsc>,
    edges: BTreeSet<(NodeId, NodeId)>,
    initial: NodeId,
    terminal: NodeId,
}

impl MsgGraph {
    pub fn new(initial: impl Into<NodeId>, terminal: impl Into<NodeId>) -> Self {
        MsgGraph {
            nodes: BTreeMap::new(),
            edges: BTreeSet::new(),
            initial: initial.into(),
            terminal: terminal.into(),
        }
    }

    pub fn add_node(&mut self, id: impl Into<NodeId>, label: Bmsc) -> &mut Self {
        self.nodes.insert(id.into(), label);
        self
    }

    pub fn add_edge(&mut self, from: impl Into<NodeId>, to: impl Into<NodeId>) -> &mut Self {
        self.edges.insert((from.into(), to.into()));
        self
    }

    pub fn initial(&self) -> &NodeId {
        &self.initial
    }

    pub fn terminal(&self) -> &NodeId {
        &self.terminal
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes.keys()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn contains_node(&self, id: &NodeId) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn label(&self, id: &NodeId) -> Option<&Bmsc> {
        self.nodes.get(id)
    }

    pub fn edges(&self) -> &BTreeSet<(NodeId, NodeId)> {
        &self.edges
    }

    pub fn successors<'a>(&'a self, id: &'a NodeId) -> impl Iterator<Item = &'a NodeId> {
        self.edges
            .range((id.clone(), NodeId::new(""))..)
            .take_while(move |(from, _)| from == id)
            .map(|(_, to)| to)
    }

    pub fn predecessors<'a>(&'a self, id: &'a NodeId) -> impl Iterator<Item = &'a NodeId> {
        self.edges
            .iter()
            .filter(move |(_, to)| to == id)
            .map(|(from, _)| from)
    }

    /// A choice node has at least two successors.
    pub fn is_choice_node(&self, id: &NodeId) -> bool {
        self.successors(id).take(2).count() >= 2
    }

    /// Union of the process sets of all node charts.
    pub fn processes(&self) -> BTreeSet<ProcessId> {
        let mut out = BTreeSet::new();
        for b in self.nodes.values() {
            out.extend(b.processes().iter().cloned());
        }
        out
    }

    pub fn is_path(&self, seq: &[NodeId]) -> bool {
        !seq.is_empty()
            && seq.iter().all(|n| self.contains_node(n))
            && seq
                .windows(2)
                .all(|w| self.edges.contains(&(w[0].clone(), w[1].clone())))
    }

    pub fn is_run(&self, seq: &[NodeId]) -> bool {
        self.is_path(seq)
            && seq.first() == Some(&self.initial)
            && seq.last() == Some(&self.terminal)
    }

    /// Diagnostic check of every graph invariant; empty report means valid.
    pub fn validate(&self) -> Vec<GraphViolation> {
        let mut out = Vec::new();
        for id in [&self.initial, &self.terminal] {
            if !self.contains_node(id) {
                out.push(GraphViolation::MissingNode { node: id.clone() });
            }
        }
        for (from, to) in &self.edges {
            if !self.contains_node(from) || !self.contains_node(to) {
                out.push(GraphViolation::EdgeEndpointUnknown {
                    from: from.clone(),
                    to: to.clone(),
                });
                continue;
            }
            if to == &self.initial {
                out.push(GraphViolation::EdgeIntoInitial { from: from.clone() });
            }
            if from == &self.terminal {
                out.push(GraphViolation::EdgeOutOfTerminal { to: to.clone() });
            }
        }
        for (id, label) in &self.nodes {
            if !label.validate().is_empty() {
                out.push(GraphViolation::InvalidLabel { node: id.clone() });
            }
        }
        if !out.is_empty() {
            return out;
        }

        // Forward reachability from the initial node.
        let mut reached = BTreeSet::new();
        let mut stack = alloc::vec![self.initial.clone()];
        while let Some(n) = stack.pop() {
            if !reached.insert(n.clone()) {
                continue;
            }
            for s in self.successors(&n) {
                stack.push(s.clone());
            }
        }
        for id in self.nodes.keys() {
            if !reached.contains(id) {
                out.push(GraphViolation::Unreachable { node: id.clone() });
            }
        }

        // Backward reachability from the terminal node.
        let mut coreached = BTreeSet::new();
        let mut stack = alloc::vec![self.terminal.clone()];
        while let Some(n) = stack.pop() {
            if !coreached.insert(n.clone()) {
                continue;
            }
            for p in self.predecessors(&n) {
                stack.push(p.clone());
            }
        }
        for id in self.nodes.keys() {
            if !coreached.contains(id) {
                out.push(GraphViolation::CannotReachTerminal { node: id.clone() });
            }
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    /// Compose the charts along a path into one chart; event identities carry
    /// the path position as their segment.
    pub fn compose_path(&self, path: &[NodeId]) -> Result<Bmsc, GraphError> {
        if !self.is_path(path) {
            return Err(GraphError::NotAPath);
        }
        let mut acc = self.nodes[&path[0]].clone();
        for (pos, node) in path.iter().enumerate().skip(1) {
            acc = acc.compose_shifted(&self.nodes[node], pos as u32)?;
        }
        Ok(acc)
    }

    /// All runs visiting each node at most `max_visits` times.
    pub fn runs_bounded(&self, max_visits: usize) -> Vec<Vec<NodeId>> {
        let mut out = Vec::new();
        if !self.contains_node(&self.initial) || max_visits == 0 {
            return out;
        }
        let mut visits: BTreeMap<NodeId, usize> = BTreeMap::new();
        let mut path = alloc::vec![self.initial.clone()];
        *visits.entry(self.initial.clone()).or_insert(0) += 1;
        self.runs_rec(&mut path, &mut visits, max_visits, &mut out);
        out
    }

    fn runs_rec(
        &self,
        path: &mut Vec<NodeId>,
        visits: &mut BTreeMap<NodeId, usize>,
        max_visits: usize,
        out: &mut Vec<Vec<NodeId>>,
    ) {
        let last = path.last().expect("path is nonempty").clone();
        if last == self.terminal {
            out.push(path.clone());
            return;
        }
        let succs: Vec<NodeId> = self.successors(&last).cloned().collect();
        for s in succs {
            let count = visits.entry(s.clone()).or_insert(0);
            if *count >= max_visits {
                continue;
            }
            *count += 1;
            path.push(s.clone());
            self.runs_rec(path, visits, max_visits, out);
            path.pop();
            *visits.get_mut(&s).unwrap() -= 1;
        }
    }
}
