//! Canonical printer for parsed specifications; `parse` followed by `print`
//! is the identity on canonical-form sources.

use crate::parser::ParsedSpec;
use msgsynth_core::bmsc::{Bmsc, EventKind};
use std::fmt::Write;

/// Render the specification in canonical form: charts sorted by name with
/// explicit per-process orders, nodes and edges sorted.
pub fn print_spec(spec: &ParsedSpec) -> String {
    let mut out = String::new();
    for (name, chart) in &spec.charts {
        print_chart(&mut out, name, chart, &spec.message_names[name]);
    }
    let _ = writeln!(out, "graph {} {{", spec.graph_name);
    let _ = writeln!(out, "  init {};", spec.graph.initial());
    let _ = writeln!(out, "  final {};", spec.graph.terminal());
    for node in spec.graph.node_ids() {
        let label = spec
            .node_labels
            .get(node)
            .and_then(|l| l.as_deref())
            .unwrap_or("empty");
        let _ = writeln!(out, "  node {node}: {label};");
    }
    for (from, to) in spec.graph.edges() {
        let _ = writeln!(out, "  {from} -> {to};");
    }
    out.push_str("}\n");
    out
}

fn print_chart(out: &mut String, name: &str, chart: &Bmsc, message_names: &[String]) {
    let _ = writeln!(out, "bmsc {name} {{");
    let _ = write!(out, "  processes");
    for p in chart.processes() {
        let _ = write!(out, " {p}");
    }
    out.push_str(";\n");
    // Messages in declaration order: indices are the low bits of the refs.
    let mut messages: Vec<_> = chart.messages().iter().collect();
    messages.sort_by_key(|(mr, _)| (mr.segment, mr.index));
    for (mr, m) in &messages {
        let from = &chart.events()[&m.send].process;
        let to = &chart.events()[&m.receive].process;
        let name = &message_names[mr.index as usize];
        let _ = writeln!(out, "  msg {name}: {from} -> {to} label {};", m.label);
    }
    for p in chart.processes() {
        if chart.order_of(p).is_empty() {
            continue;
        }
        let _ = write!(out, "  order {p}:");
        for er in chart.order_of(p) {
            let ev = &chart.events()[er];
            let sep = match ev.kind {
                EventKind::Send => '!',
                EventKind::Receive => '?',
            };
            let _ = write!(out, " {sep}{}", message_names[ev.message.index as usize]);
        }
        out.push_str(";\n");
    }
    out.push_str("}\n");
}
