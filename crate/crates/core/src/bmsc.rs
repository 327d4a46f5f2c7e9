//! Basic message sequence charts: processes, send/receive events, message
//! pairing, the visual order, weak sequential composition, projections and
//! linearization enumeration.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default bound on the number of events `linearizations` will enumerate.
pub const DEFAULT_LINEARIZATION_CAP: usize = 12;

/// Name of a process instance.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProcessId(String);

impl ProcessId {
    pub fn new(name: impl Into<String>) -> Self {
        ProcessId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ProcessId {
    fn from(s: &str) -> Self {
        ProcessId::new(s)
    }
}

/// Message label drawn from the finite label alphabet.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MessageLabel(String);

impl MessageLabel {
    pub fn new(name: impl Into<String>) -> Self {
        MessageLabel(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for MessageLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for MessageLabel {
    fn from(s: &str) -> Self {
        MessageLabel::new(s)
    }
}

/// Event identity. Charts built directly live in segment 0; composing a path
/// shifts every chart to its path position, so an event inside a composed
/// chart is addressed by (path index, index within the original chart).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EventRef {
    pub segment: u32,
    pub index: u32,
}

impl EventRef {
    pub fn new(segment: u32, index: u32) -> Self {
        EventRef { segment, index }
    }
}

impl fmt::Display for EventRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.segment, self.index)
    }
}

/// Message identity, same addressing scheme as [`EventRef`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MessageRef {
    pub segment: u32,
    pub index: u32,
}

impl MessageRef {
    pub fn new(segment: u32, index: u32) -> Self {
        MessageRef { segment, index }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Send,
    Receive,
}

/// A single send or receive event owned by one process.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub process: ProcessId,
    pub kind: EventKind,
    pub message: MessageRef,
}

/// A message: paired send and receive events plus a label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub send: EventRef,
    pub receive: EventRef,
    pub label: MessageLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ActionKind {
    Send,
    Receive,
}

/// An alphabet letter: `p!q(m)` when `p` sends `m` to `q`, `p?q(m)` when `p`
/// receives `m` from `q`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Action {
    pub kind: ActionKind,
    pub subject: ProcessId,
    pub peer: ProcessId,
    pub label: MessageLabel,
}

impl Action {
    pub fn send(
        from: impl Into<ProcessId>,
        to: impl Into<ProcessId>,
        label: impl Into<MessageLabel>,
    ) -> Self {
        Action {
            kind: ActionKind::Send,
            subject: from.into(),
            peer: to.into(),
            label: label.into(),
        }
    }

    pub fn receive(
        by: impl Into<ProcessId>,
        from: impl Into<ProcessId>,
        label: impl Into<MessageLabel>,
    ) -> Self {
        Action {
            kind: ActionKind::Receive,
            subject: by.into(),
            peer: from.into(),
            label: label.into(),
        }
    }

    /// Sending process of the underlying message.
    pub fn sender(&self) -> &ProcessId {
        match self.kind {
            ActionKind::Send => &self.subject,
            ActionKind::Receive => &self.peer,
        }
    }

    /// Receiving process of the underlying message.
    pub fn receiver(&self) -> &ProcessId {
        match self.kind {
            ActionKind::Send => &self.peer,
            ActionKind::Receive => &self.subject,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sep = match self.kind {
            ActionKind::Send => '!',
            ActionKind::Receive => '?',
        };
        write!(f, "{}{}{}({})", self.subject, sep, self.peer, self.label)
    }
}

/// Violations reported by [`Bmsc::validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum BmscViolation {
    /// An event references a message that does not exist or disagrees with it.
    DanglingEvent { event: EventRef },
    /// A message references an event of the wrong kind or an unknown event.
    BrokenPairing { message: MessageRef },
    /// Send and receive of a message live on the same process.
    SelfMessage { message: MessageRef },
    /// A process order misses an event, lists one twice or lists a foreign one.
    IncoherentOrder { process: ProcessId },
    /// Two messages on the same channel are received out of send order.
    FifoViolation {
        first: MessageRef,
        second: MessageRef,
    },
    /// The visual order has a cycle through this event.
    OrderCycle { event: EventRef },
}

impl fmt::Display for BmscViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BmscViolation::DanglingEvent { event } => {
                write!(f, "event {event} has no coherent message")
            }
            BmscViolation::BrokenPairing { message } => write!(
                f,
                "message {}.{} is not a send/receive pair",
                message.segment, message.index
            ),
            BmscViolation::SelfMessage { message } => write!(
                f,
                "message {}.{} is a self-message",
                message.segment, message.index
            ),
            BmscViolation::IncoherentOrder { process } => {
                write!(
                    f,
                    "order of process {process} does not list its events exactly once"
                )
            }
            BmscViolation::FifoViolation { first, second } => write!(
                f,
                "messages {}.{} and {}.{} violate the FIFO condition",
                first.segment, first.index, second.segment, second.index
            ),
            BmscViolation::OrderCycle { event } => {
                write!(f, "visual order has a cycle through {event}")
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BmscError {
    #[error("chart is not a valid bMSC: {0}")]
    Invalid(BmscViolation),
    #[error("chart has {events} events, cap is {cap}")]
    TooLarge { events: usize, cap: usize },
    #[error("composition result is invalid: {0}")]
    Compose(BmscViolation),
}

/// A basic message sequence chart.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bmsc {
    processes: BTreeSet<ProcessId>,
    events: BTreeMap<EventRef, Event>,
    order: BTreeMap<ProcessId, Vec<EventRef>>,
    messages: BTreeMap<MessageRef, Message>,
}

impl Bmsc {
    /// The empty chart over an explicit (possibly empty) process set.
    pub fn empty<I, P>(processes: I) -> Self
    where
        I: IntoIterator<Item = P>,
        P: Into<ProcessId>,
    {
        Bmsc {
            processes: processes.into_iter().map(Into::into).collect(),
            events: BTreeMap::new(),
            order: BTreeMap::new(),
            messages: BTreeMap::new(),
        }
    }

    /// Assemble a chart from raw parts without validation; pair with
    /// [`Bmsc::validate`] to diagnose the result.
    pub fn from_parts(
        processes: BTreeSet<ProcessId>,
        events: BTreeMap<EventRef, Event>,
        order: BTreeMap<ProcessId, Vec<EventRef>>,
        messages: BTreeMap<MessageRef, Message>,
    ) -> Self {
        Bmsc {
            processes,
            events,
            order,
            messages,
        }
    }

    pub fn processes(&self) -> &BTreeSet<ProcessId> {
        &self.processes
    }

    pub fn events(&self) -> &BTreeMap<EventRef, Event> {
        &self.events
    }

    pub fn messages(&self) -> &BTreeMap<MessageRef, Message> {
        &self.messages
    }

    pub fn event_count(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Per-process event sequence; empty for unknown processes.
    pub fn order_of(&self, p: &ProcessId) -> &[EventRef] {
        self.order.get(p).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Largest segment number present, if any event exists.
    pub fn max_segment(&self) -> Option<u32> {
        self.events.keys().map(|e| e.segment).max()
    }

    /// First event of `p`, if it has any.
    pub fn first_event_of(&self, p: &ProcessId) -> Option<&EventRef> {
        self.order_of(p).first()
    }

    /// Render an event as its alphabet letter.
    pub fn action_of(&self, event: &EventRef) -> Option<Action> {
        let ev = self.events.get(event)?;
        let msg = self.messages.get(&ev.message)?;
        let partner = match ev.kind {
            EventKind::Send => self.events.get(&msg.receive)?,
            EventKind::Receive => self.events.get(&msg.send)?,
        };
        Some(Action {
            kind: match ev.kind {
                EventKind::Send => ActionKind::Send,
                EventKind::Receive => ActionKind::Receive,
            },
            subject: ev.process.clone(),
            peer: partner.process.clone(),
            label: msg.label.clone(),
        })
    }

    /// Diagnostic check of every chart invariant; empty report means valid.
    pub fn validate(&self) -> Vec<BmscViolation> {
        let mut out = Vec::new();

        // Event/message cross references.
        for (er, ev) in &self.events {
            match self.messages.get(&ev.message) {
                Some(m) => {
                    let ok = match ev.kind {
                        EventKind::Send => m.send == *er,
                        EventKind::Receive => m.receive == *er,
                    };
                    if !ok {
                        out.push(BmscViolation::DanglingEvent { event: *er });
                    }
                }
                None => out.push(BmscViolation::DanglingEvent { event: *er }),
            }
            if !self.processes.contains(&ev.process) {
                out.push(BmscViolation::DanglingEvent { event: *er });
            }
        }
        for (mr, m) in &self.messages {
            let send = self.events.get(&m.send);
            let recv = self.events.get(&m.receive);
            match (send, recv) {
                (Some(s), Some(r)) => {
                    if s.kind != EventKind::Send
                        || r.kind != EventKind::Receive
                        || s.message != *mr
                        || r.message != *mr
                    {
                        out.push(BmscViolation::BrokenPairing { message: *mr });
                    } else if s.process == r.process {
                        out.push(BmscViolation::SelfMessage { message: *mr });
                    }
                }
                _ => out.push(BmscViolation::BrokenPairing { message: *mr }),
            }
        }

        // Per-process orders list exactly the events of that process.
        let mut by_process: BTreeMap<&ProcessId, BTreeSet<EventRef>> = BTreeMap::new();
        for (er, ev) in &self.events {
            by_process.entry(&ev.process).or_default().insert(*er);
        }
        for p in &self.processes {
            let listed = self.order_of(p);
            let expected = by_process.remove(p).unwrap_or_default();
            let mut seen = BTreeSet::new();
            let mut ok = true;
            for er in listed {
                if !expected.contains(er) || !seen.insert(*er) {
                    ok = false;
                }
            }
            if seen.len() != expected.len() {
                ok = false;
            }
            if !ok {
                out.push(BmscViolation::IncoherentOrder { process: p.clone() });
            }
        }
        // Events on undeclared processes.
        for (p, _) in by_process {
            out.push(BmscViolation::IncoherentOrder { process: p.clone() });
        }

        if !out.is_empty() {
            return out;
        }

        // FIFO: per ordered sender/receiver pair, receives follow send order.
        for p in &self.processes {
            let mut per_channel: BTreeMap<&ProcessId, Vec<MessageRef>> = BTreeMap::new();
            for er in self.order_of(p) {
                let ev = &self.events[er];
                if ev.kind != EventKind::Send {
                    continue;
                }
                let msg = &self.messages[&ev.message];
                let to = &self.events[&msg.receive].process;
                per_channel.entry(to).or_default().push(ev.message);
            }
            for (to, sends) in per_channel {
                let pos: BTreeMap<EventRef, usize> = self
                    .order_of(to)
                    .iter()
                    .enumerate()
                    .map(|(i, er)| (*er, i))
                    .collect();
                let mut last: Option<(MessageRef, usize)> = None;
                for mr in sends {
                    let recv_pos = pos[&self.messages[&mr].receive];
                    if let Some((prev_mr, prev_pos)) = last {
                        if recv_pos < prev_pos {
                            out.push(BmscViolation::FifoViolation {
                                first: prev_mr,
                                second: mr,
                            });
                        }
                    }
                    last = Some((mr, recv_pos));
                }
            }
        }

        // Acyclicity of the visual order.
        if let Err(ev) = self.topological_order() {
            out.push(BmscViolation::OrderCycle { event: ev });
        }

        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    /// Direct precedence edges: per-process successions plus message pairing.
    fn direct_edges(&self) -> Vec<(EventRef, EventRef)> {
        let mut edges = Vec::new();
        for order in self.order.values() {
            for w in order.windows(2) {
                edges.push((w[0], w[1]));
            }
        }
        for m in self.messages.values() {
            edges.push((m.send, m.receive));
        }
        edges
    }

    /// Kahn topological sort over the direct edges; `Err` carries an event on
    /// a cycle.
    fn topological_order(&self) -> Result<Vec<EventRef>, EventRef> {
        let mut indeg: BTreeMap<EventRef, usize> = self.events.keys().map(|e| (*e, 0)).collect();
        let mut succ: BTreeMap<EventRef, Vec<EventRef>> = BTreeMap::new();
        for (a, b) in self.direct_edges() {
            *indeg.entry(b).or_insert(0) += 1;
            succ.entry(a).or_default().push(b);
        }
        let mut ready: Vec<EventRef> = indeg
            .iter()
            .filter_map(|(e, d)| (*d == 0).then_some(*e))
            .collect();
        let mut out = Vec::new();
        while let Some(e) = ready.pop() {
            out.push(e);
            for s in succ.get(&e).cloned().unwrap_or_default() {
                let d = indeg.get_mut(&s).unwrap();
                *d -= 1;
                if *d == 0 {
                    ready.push(s);
                }
            }
        }
        if out.len() == self.events.len() {
            Ok(out)
        } else {
            let stuck = indeg
                .iter()
                .find(|(_, d)| **d > 0)
                .map(|(e, _)| *e)
                .expect("cycle implies a positive in-degree");
            Err(stuck)
        }
    }

    /// The strict visual order: transitive closure of pairing and per-process
    /// orders, minus reflexivity.
    pub fn visual_order(&self) -> Result<VisualOrder, BmscError> {
        let topo = self
            .topological_order()
            .map_err(|ev| BmscError::Invalid(BmscViolation::OrderCycle { event: ev }))?;
        let mut succ: BTreeMap<EventRef, BTreeSet<EventRef>> = BTreeMap::new();
        for (a, b) in self.direct_edges() {
            succ.entry(a).or_default().insert(b);
        }
        // Closure in reverse topological order.
        let mut closed: BTreeMap<EventRef, BTreeSet<EventRef>> = BTreeMap::new();
        for e in topo.iter().rev() {
            let mut all = BTreeSet::new();
            for b in succ.get(e).cloned().unwrap_or_default() {
                all.insert(b);
                if let Some(more) = closed.get(&b) {
                    all.extend(more.iter().copied());
                }
            }
            closed.insert(*e, all);
        }
        let mut pairs = BTreeSet::new();
        for (a, succs) in &closed {
            for b in succs {
                pairs.insert((*a, *b));
            }
        }
        Ok(VisualOrder {
            pairs,
            events: self.events.keys().copied().collect(),
        })
    }

    /// The action sequence process `p` executes, in its local order.
    pub fn projection(&self, p: &ProcessId) -> Vec<Action> {
        self.projection_events(p)
            .into_iter()
            .map(|(_, a)| a)
            .collect()
    }

    /// Projection keeping event identities, for callers that address events
    /// inside composed charts.
    pub fn projection_events(&self, p: &ProcessId) -> Vec<(EventRef, Action)> {
        self.order_of(p)
            .iter()
            .map(|er| {
                (
                    *er,
                    self.action_of(er)
                        .expect("ordered event renders to an action"),
                )
            })
            .collect()
    }

    /// Canonical form: the per-process action sequences. Two valid charts are
    /// isomorphic (equal up to event renaming) exactly when these agree, since
    /// the FIFO pairing is determined by them.
    pub fn canonical_projections(&self) -> BTreeMap<ProcessId, Vec<Action>> {
        self.processes
            .iter()
            .map(|p| (p.clone(), self.projection(p)))
            .collect()
    }

    /// Weak sequential composition: later events of a process follow all its
    /// earlier ones, other processes are unconstrained across the seam. The
    /// right operand's segments are shifted past the left's.
    pub fn compose(&self, other: &Bmsc) -> Result<Bmsc, BmscError> {
        let shift = self.max_segment().map(|s| s + 1).unwrap_or(1);
        self.compose_shifted(other, shift)
    }

    /// Composition with an explicit segment shift for the right operand; path
    /// composition uses the path position so control events can be addressed
    /// by (path index, original event id).
    pub fn compose_shifted(&self, other: &Bmsc, shift: u32) -> Result<Bmsc, BmscError> {
        let mut processes = self.processes.clone();
        processes.extend(other.processes.iter().cloned());

        let mut events = self.events.clone();
        let mut messages = self.messages.clone();
        let move_event = |e: EventRef| EventRef::new(e.segment + shift, e.index);
        for (er, ev) in &other.events {
            let mut ev = ev.clone();
            ev.message = MessageRef::new(ev.message.segment + shift, ev.message.index);
            events.insert(move_event(*er), ev);
        }
        for (mr, m) in &other.messages {
            messages.insert(
                MessageRef::new(mr.segment + shift, mr.index),
                Message {
                    send: move_event(m.send),
                    receive: move_event(m.receive),
                    label: m.label.clone(),
                },
            );
        }

        let mut order = self.order.clone();
        for (p, tail) in &other.order {
            let entry = order.entry(p.clone()).or_default();
            entry.extend(tail.iter().map(|e| move_event(*e)));
        }

        let composed = Bmsc {
            processes,
            events,
            order,
            messages,
        };
        if let Some(v) = composed.validate().into_iter().next() {
            return Err(BmscError::Compose(v));
        }
        Ok(composed)
    }

    /// All linearizations of the chart as words over the action alphabet.
    pub fn linearizations(&self, cap: usize) -> Result<BTreeSet<Vec<Action>>, BmscError> {
        if self.event_count() > cap {
            return Err(BmscError::TooLarge {
                events: self.event_count(),
                cap,
            });
        }
        self.topological_order()
            .map_err(|ev| BmscError::Invalid(BmscViolation::OrderCycle { event: ev }))?;

        let ids: Vec<EventRef> = self.events.keys().copied().collect();
        let index: BTreeMap<EventRef, usize> =
            ids.iter().enumerate().map(|(i, e)| (*e, i)).collect();
        let mut succ: Vec<Vec<usize>> = vec![Vec::new(); ids.len()];
        let mut indeg: Vec<usize> = vec![0; ids.len()];
        for (a, b) in self.direct_edges() {
            succ[index[&a]].push(index[&b]);
            indeg[index[&b]] += 1;
        }
        let actions: Vec<Action> = ids
            .iter()
            .map(|e| self.action_of(e).expect("event renders to an action"))
            .collect();

        let mut words = BTreeSet::new();
        let mut taken = vec![false; ids.len()];
        let mut word: Vec<usize> = Vec::with_capacity(ids.len());
        enumerate_extensions(&succ, &mut indeg, &mut taken, &mut word, &mut |w| {
            words.insert(w.iter().map(|i| actions[*i].clone()).collect::<Vec<_>>());
        });
        Ok(words)
    }
}

fn enumerate_extensions(
    succ: &[Vec<usize>],
    indeg: &mut Vec<usize>,
    taken: &mut Vec<bool>,
    word: &mut Vec<usize>,
    emit: &mut impl FnMut(&[usize]),
) {
    if word.len() == indeg.len() {
        emit(word);
        return;
    }
    for i in 0..indeg.len() {
        if taken[i] || indeg[i] != 0 {
            continue;
        }
        taken[i] = true;
        for &s in &succ[i] {
            indeg[s] -= 1;
        }
        word.push(i);
        enumerate_extensions(succ, indeg, taken, word, emit);
        word.pop();
        for &s in &succ[i] {
            indeg[s] += 1;
        }
        taken[i] = false;
    }
}

/// The strict visual order of a valid chart.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisualOrder {
    pairs: BTreeSet<(EventRef, EventRef)>,
    events: Vec<EventRef>,
}

impl VisualOrder {
    pub fn precedes(&self, a: &EventRef, b: &EventRef) -> bool {
        self.pairs.contains(&(*a, *b))
    }

    pub fn pairs(&self) -> &BTreeSet<(EventRef, EventRef)> {
        &self.pairs
    }

    /// Events with no strict predecessor.
    pub fn minimal_events(&self) -> Vec<EventRef> {
        self.events
            .iter()
            .filter(|e| !self.pairs.iter().any(|(_, b)| b == *e))
            .copied()
            .collect()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BuildError {
    #[error("process {0} is not declared")]
    UnknownProcess(ProcessId),
    #[error("message #{0} is out of range")]
    UnknownMessage(usize),
    #[error("order of {process} lists event #{message} of the wrong direction")]
    WrongDirection { process: ProcessId, message: usize },
    #[error("order of {0} must list each of its events exactly once")]
    IncompleteOrder(ProcessId),
    #[error("sender and receiver of message #{0} coincide")]
    SelfMessage(usize),
}

/// One entry of an explicit per-process order: send or receive of the n-th
/// declared message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderItem {
    Send(usize),
    Receive(usize),
}

/// Builds charts in segment 0. Without explicit orders, events are ordered by
/// message declaration; explicit orders express crossing messages.
#[derive(Debug, Clone, Default)]
pub struct BmscBuilder {
    processes: Vec<ProcessId>,
    messages: Vec<(ProcessId, ProcessId, MessageLabel)>,
    orders: BTreeMap<ProcessId, Vec<OrderItem>>,
}

impl BmscBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn process(mut self, p: impl Into<ProcessId>) -> Self {
        let p = p.into();
        if !self.processes.contains(&p) {
            self.processes.push(p);
        }
        self
    }

    /// Declare a message; message indices follow declaration order.
    pub fn message(
        mut self,
        from: impl Into<ProcessId>,
        to: impl Into<ProcessId>,
        label: impl Into<MessageLabel>,
    ) -> Self {
        self.messages.push((from.into(), to.into(), label.into()));
        self
    }

    /// Replace the order of one process with an explicit event sequence.
    pub fn order(mut self, p: impl Into<ProcessId>, items: Vec<OrderItem>) -> Self {
        self.orders.insert(p.into(), items);
        self
    }

    pub fn build(self) -> Result<Bmsc, BuildError> {
        let processes: BTreeSet<ProcessId> = self.processes.iter().cloned().collect();
        let mut events = BTreeMap::new();
        let mut messages = BTreeMap::new();
        for (i, (from, to, label)) in self.messages.iter().enumerate() {
            if !processes.contains(from) {
                return Err(BuildError::UnknownProcess(from.clone()));
            }
            if !processes.contains(to) {
                return Err(BuildError::UnknownProcess(to.clone()));
            }
            if from == to {
                return Err(BuildError::SelfMessage(i));
            }
            let mr = MessageRef::new(0, i as u32);
            let send = EventRef::new(0, 2 * i as u32);
            let recv = EventRef::new(0, 2 * i as u32 + 1);
            events.insert(
                send,
                Event {
                    process: from.clone(),
                    kind: EventKind::Send,
                    message: mr,
                },
            );
            events.insert(
                recv,
                Event {
                    process: to.clone(),
                    kind: EventKind::Receive,
                    message: mr,
                },
            );
            messages.insert(
                mr,
                Message {
                    send,
                    receive: recv,
                    label: label.clone(),
                },
            );
        }

        let mut order: BTreeMap<ProcessId, Vec<EventRef>> = BTreeMap::new();
        for p in &processes {
            let mut seq = Vec::new();
            match self.orders.get(p) {
                Some(items) => {
                    for item in items {
                        let (idx, want) = match item {
                            OrderItem::Send(i) => (*i, EventKind::Send),
                            OrderItem::Receive(i) => (*i, EventKind::Receive),
                        };
                        let (from, to, _) = self
                            .messages
                            .get(idx)
                            .ok_or(BuildError::UnknownMessage(idx))?;
                        let owner = match want {
                            EventKind::Send => from,
                            EventKind::Receive => to,
                        };
                        if owner != p {
                            return Err(BuildError::WrongDirection {
                                process: p.clone(),
                                message: idx,
                            });
                        }
                        let er = match want {
                            EventKind::Send => EventRef::new(0, 2 * idx as u32),
                            EventKind::Receive => EventRef::new(0, 2 * idx as u32 + 1),
                        };
                        seq.push(er);
                    }
                }
                None => {
                    for (i, (from, to, _)) in self.messages.iter().enumerate() {
                        if from == p {
                            seq.push(EventRef::new(0, 2 * i as u32));
                        }
                        if to == p {
                            seq.push(EventRef::new(0, 2 * i as u32 + 1));
                        }
                    }
                }
            }
            // Each event of p must appear exactly once.
            let mine: BTreeSet<EventRef> = events
                .iter()
                .filter(|(_, ev)| &ev.process == p)
                .map(|(er, _)| *er)
                .collect();
            let listed: BTreeSet<EventRef> = seq.iter().copied().collect();
            if listed.len() != seq.len() || listed != mine {
                return Err(BuildError::IncompleteOrder(p.clone()));
            }
            order.insert(p.clone(), seq);
        }

        Ok(Bmsc {
            processes,
            events,
            order,
            messages,
        })
    }
}
