//! Graphviz export for graphs and synthesized machines; output is
//! deterministic so identical inputs render byte-identical files.

use msgsynth_core::graph::MsgGraph;
use msgsynth_core::realize::{Cfm, LocalState, Payload, PredId, StateInfo, TransitionAction};
use std::fmt::Write;

/// Render the graph: doublecircle initial, bold terminal, chart sizes on the
/// nodes.
pub fn export_graph(g: &MsgGraph) -> String {
    let mut out = String::from("digraph msg {\n  rankdir=LR;\n");
    for node in g.node_ids() {
        let chart = g.label(node).expect("declared node");
        let mut attrs = vec![format!("label=\"{node}\\n{} events\"", chart.event_count())];
        if node == g.initial() {
            attrs.push("shape=doublecircle".to_owned());
        } else if node == g.terminal() {
            attrs.push("shape=square".to_owned());
        } else {
            attrs.push("shape=circle".to_owned());
        }
        let _ = writeln!(out, "  \"{node}\" [{}];", attrs.join(", "));
    }
    for (from, to) in g.edges() {
        let _ = writeln!(out, "  \"{from}\" -> \"{to}\";");
    }
    out.push_str("}\n");
    out
}

fn pred_label(p: Option<PredId>) -> String {
    match p {
        Some(id) => format!("{id}"),
        None => "-".to_owned(),
    }
}

fn payload_label(p: &Payload) -> String {
    match &p.annot {
        Some(a) => format!("{} [{},{}]", p.label, a.current, pred_label(a.next)),
        None => p.label.to_string(),
    }
}

fn state_label(s: &StateInfo) -> String {
    match s {
        StateInfo::Local(LocalState::Executing { current, next, pos }) => {
            format!("{current},{} @{pos}", pred_label(*next))
        }
        StateInfo::Local(LocalState::Choosing { node }) => format!("choose {node}"),
        StateInfo::Local(LocalState::Polling) => "polling".to_owned(),
        StateInfo::Word { pos } => format!("@{pos}"),
    }
}

/// Render every machine of the CFM as one cluster.
pub fn export_machines(cfm: &Cfm) -> String {
    let mut out = String::from("digraph cfm {\n  rankdir=LR;\n");
    for (mi, m) in cfm.machines.iter().enumerate() {
        let _ = writeln!(out, "  subgraph cluster_{mi} {{");
        let _ = writeln!(out, "    label=\"{}\";", m.process);
        for (si, s) in m.states.iter().enumerate() {
            let shape = if m.accepting.contains(&(si as u32)) {
                "doublecircle"
            } else {
                "circle"
            };
            let style = if si as u32 == m.initial {
                ", style=bold"
            } else {
                ""
            };
            let _ = writeln!(
                out,
                "    \"{mi}_{si}\" [label=\"{}\", shape={shape}{style}];",
                state_label(s)
            );
        }
        let mut edges: Vec<String> = m
            .transitions
            .iter()
            .map(|t| {
                let (verb, payload) = match t.action {
                    TransitionAction::Send { to, payload } => (
                        format!("!{}", cfm.processes[to as usize]),
                        &cfm.payloads[payload as usize],
                    ),
                    TransitionAction::Receive { from, payload } => (
                        format!("?{}", cfm.processes[from as usize]),
                        &cfm.payloads[payload as usize],
                    ),
                };
                format!(
                    "    \"{mi}_{}\" -> \"{mi}_{}\" [label=\"{verb} {}\"];\n",
                    t.from,
                    t.to,
                    payload_label(payload)
                )
            })
            .collect();
        edges.sort();
        for e in edges {
            out.push_str(&e);
        }
        out.push_str("  }\n");
    }
    out.push_str("}\n");
    out
}
