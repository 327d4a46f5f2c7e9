//! Shared fixtures and generators for the integration tests.

#![allow(dead_code)]

use msgsynth_core::bmsc::{Bmsc, BmscBuilder, OrderItem};
use msgsynth_core::graph::MsgGraph;
use msgsynth_core::runtime::SplitMix64;
use std::collections::{BTreeMap, VecDeque};

/// The crossing chart: a: p->q(m), b: q->p(mp), orders p: !a ?b, q: !b ?a.
pub fn crossing() -> Bmsc {
    BmscBuilder::new()
        .process("p")
        .process("q")
        .message("p", "q", "m")
        .message("q", "p", "mp")
        .order("p", vec![OrderItem::Send(0), OrderItem::Receive(1)])
        .order("q", vec![OrderItem::Send(1), OrderItem::Receive(0)])
        .build()
        .unwrap()
}

pub fn ex_cross() -> MsgGraph {
    let mut g = MsgGraph::new("s0", "sf");
    g.add_node("s0", Bmsc::empty(["p", "q"]))
        .add_node("s", crossing())
        .add_node("sf", Bmsc::empty(["p", "q"]))
        .add_edge("s0", "s")
        .add_edge("s", "s")
        .add_edge("s", "sf");
    g
}

pub fn ex_empty() -> MsgGraph {
    let mut g = MsgGraph::new("s0", "sf");
    g.add_node("s0", Bmsc::empty::<_, &str>([]))
        .add_node("sf", Bmsc::empty::<_, &str>([]))
        .add_edge("s0", "sf");
    g
}

pub fn ex_local() -> MsgGraph {
    let a = BmscBuilder::new()
        .process("p")
        .process("q")
        .message("p", "q", "m1")
        .build()
        .unwrap();
    let b = BmscBuilder::new()
        .process("p")
        .process("q")
        .message("p", "q", "m2")
        .build()
        .unwrap();
    let mut g = MsgGraph::new("s0", "sf");
    g.add_node("s0", Bmsc::empty(["p", "q"]))
        .add_node("c", Bmsc::empty(["p", "q"]))
        .add_node("A", a)
        .add_node("B", b)
        .add_node("sf", Bmsc::empty(["p", "q"]))
        .add_edge("s0", "c")
        .add_edge("c", "A")
        .add_edge("c", "B")
        .add_edge("A", "sf")
        .add_edge("B", "sf");
    g
}

/// Build a random valid chart by sampling a FIFO execution: sends are issued
/// in declaration order, deliveries pop the oldest message of a random
/// nonempty channel. Valid by construction.
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
