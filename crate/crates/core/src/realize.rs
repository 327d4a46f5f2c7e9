//! Synthesis of a communicating finite-state machine realization: prediction
//! enumeration, the per-process step semantics (prediction-annotated sends,
//! promotion, leader guesses, polling) and extraction of explicit machines.

use crate::bmsc::{Action, ActionKind, Bmsc, EventRef, MessageLabel, ProcessId};
use crate::choice::{
    classify, initial_path, prediction_paths, resolving_events, triggers, Classification,
    NodeVerdict, PathKind, PredictionPath,
};
use crate::graph::{MsgGraph, NodeId};
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index into the prediction table of a realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PredId(pub u32);

impl fmt::Display for PredId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.0)
    }
}

/// A prediction: a prediction path plus an optional control event inside the
/// chart composed along it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Prediction {
    pub path: PredictionPath,
    pub control: Option<EventRef>,
}

/// Control data attached to a message: the sender's current prediction and,
/// once guessed, the next one.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PayloadAnnot {
    pub current: PredId,
    pub next: Option<PredId>,
}

/// A channel payload: the message label plus optional control data. Plain
/// projection machines carry no annotation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Payload {
    pub label: MessageLabel,
    pub annot: Option<PayloadAnnot>,
}

/// State of one process under the prediction-passing semantics. Executing
/// states keep the position into the projection of the current prediction's
/// chart, so the remaining queue is a suffix of that projection. Choosing
/// states are the points where a local-choice leader picks the continuation;
/// the pick materializes on the first action out of the state.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LocalState {
    Executing {
        current: PredId,
        next: Option<PredId>,
        pos: u32,
    },
    Choosing {
        node: NodeId,
    },
    Polling,
}

/// State payload of an explicit machine.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StateInfo {
    Local(LocalState),
    /// Position in a fixed projection word (projection realizations).
    Word {
        pos: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TransitionAction {
    Send { to: u32, payload: u32 },
    Receive { from: u32, payload: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Transition {
    pub from: u32,
    pub action: TransitionAction,
    pub to: u32,
}

/// One finite-state machine of a CFM.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Machine {
    pub process: ProcessId,
    pub states: Vec<StateInfo>,
    pub transitions: Vec<Transition>,
    pub initial: u32,
    pub accepting: BTreeSet<u32>,
}

/// A communicating finite-state machine: one machine per process plus the
/// shared payload and prediction tables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cfm {
    pub processes: Vec<ProcessId>,
    pub payloads: Vec<Payload>,
    pub machines: Vec<Machine>,
    pub predictions: Vec<Prediction>,
    /// Triggers set of each prediction's last node, indexed like
    /// `predictions`; monitors consume these without the source graph.
    pub prediction_triggers: Vec<BTreeSet<ProcessId>>,
}

impl Cfm {
    pub fn process_index(&self, p: &ProcessId) -> Option<usize> {
        self.processes.iter().position(|q| q == p)
    }

    /// Render a machine transition as its alphabet letter, annotations
    /// stripped.
    pub fn render_action(&self, machine: usize, action: &TransitionAction) -> Action {
        let subject = self.machines[machine].process.clone();
        match action {
            TransitionAction::Send { to, payload } => Action {
                kind: ActionKind::Send,
                subject,
                peer: self.processes[*to as usize].clone(),
                label: self.payloads[*payload as usize].label.clone(),
            },
            TransitionAction::Receive { from, payload } => Action {
                kind: ActionKind::Receive,
                subject,
                peer: self.processes[*from as usize].clone(),
                label: self.payloads[*payload as usize].label.clone(),
            },
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RealizeError {
    #[error(transparent)]
    Choice(#[from] crate::choice::ChoiceError),
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
    #[error("graph is invalid; run validation for details")]
    InvalidGraph,
    #[error("unknown process {0}")]
    UnknownProcess(ProcessId),
    #[error("node {0} does not end any prediction path with a choice")]
    NotAChoiceTarget(NodeId),
    #[error("no prediction starts at a successor of {0}")]
    NoGuessAvailable(NodeId),
    #[error("internal invariant broken: {0}")]
    Internal(&'static str),
}

/// Whether the last node of a prediction path is a local choice, a
/// controllable choice, or the terminal node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EndKind {
    Local,
    Controllable,
    Terminal,
}

struct PredEntry {
    prediction: Prediction,
    projections: BTreeMap<ProcessId, Vec<(EventRef, Action)>>,
    chart: Bmsc,
    end: EndKind,
}

/// A prediction finished during one step: whether the process entered polling
/// afterwards (as opposed to promoting or guessing a continuation).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FinishEvent {
    pub prediction: PredId,
    pub entered_polling: bool,
}

/// A state where a continuation had to be dropped because the next prediction
/// was still unset at a promotion point. Unreachable in a correct synthesis;
/// reaching one at runtime shows up as a blocked machine.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Hazard {
    pub process: ProcessId,
    pub state: LocalState,
}

/// Stimulus for a single local step: let the process fire its pending send,
/// or deliver one payload to it.
pub enum Stimulus<'a> {
    Emit,
    Deliver {
        from: &'a ProcessId,
        payload: &'a Payload,
    },
}

/// Successor state of one local step, with the emitted or consumed message
/// and the predictions finished along the way.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepResult {
    pub state: LocalState,
    /// Peer process and payload: emitted for sends, consumed for receives.
    pub message: Option<(ProcessId, Payload)>,
    pub finished: Vec<FinishEvent>,
}

/// All successors for one stimulus; `blocked` marks continuations dropped at
/// an unset-promotion point.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StepOutcomes {
    pub steps: Vec<StepResult>,
    pub blocked: bool,
}

enum Settled {
    State(LocalState, Vec<FinishEvent>),
    Blocked,
}

/// Prediction table plus the graph facts the step semantics needs.
pub struct PredictionTable {
    entries: Vec<PredEntry>,
    guesses: BTreeMap<NodeId, Vec<PredId>>,
    triggers: BTreeMap<NodeId, BTreeSet<ProcessId>>,
    initial: Vec<PredId>,
    processes: Vec<ProcessId>,
}

impl PredictionTable {
    fn build(g: &MsgGraph) -> Result<Self, RealizeError> {
        if !g.is_valid() {
            return Err(RealizeError::InvalidGraph);
        }
        let cls: Classification = classify(g);
        let paths = prediction_paths(g)?;

        let mut ends = BTreeMap::new();
        for n in g.node_ids() {
            let end = if n == g.terminal() {
                Some(EndKind::Terminal)
            } else {
                match cls.nodes.get(n) {
                    Some(NodeVerdict::LocalChoice) => Some(EndKind::Local),
                    Some(NodeVerdict::ControllableChoice) => Some(EndKind::Controllable),
                    _ => None,
                }
            };
            if let Some(end) = end {
                ends.insert(n.clone(), end);
            }
        }

        let mut trig_map = BTreeMap::new();
        for n in g.node_ids() {
            trig_map.insert(n.clone(), triggers(g, n)?);
        }

        let processes: Vec<ProcessId> = g.processes().into_iter().collect();
        let mut entries = Vec::new();
        for path in &paths {
            let chart = g.compose_path(&path.nodes)?;
            let last = path.last_node();
            let end = *ends.get(last).ok_or(RealizeError::Internal(
                "prediction path ends at an unclassified node",
            ))?;
            let projections: BTreeMap<ProcessId, Vec<(EventRef, Action)>> = processes
                .iter()
                .map(|p| (p.clone(), chart.projection_events(p)))
                .collect();
            let controls: Vec<Option<EventRef>> = match end {
                EndKind::Controllable => {
                    let trig = &trig_map[last];
                    let events = resolving_events(&chart, trig);
                    if events.is_empty() {
                        return Err(RealizeError::Internal(
                            "prediction path ending in a controllable choice has no resolving event",
                        ));
                    }
                    // Activity: every triggering process acts in the chart.
                    for p in trig {
                        if projections[p].is_empty() {
                            return Err(RealizeError::Internal(
                                "triggering process is inactive in a controllable-ending prediction",
                            ));
                        }
                    }
                    events.into_iter().map(Some).collect()
                }
                EndKind::Local | EndKind::Terminal => vec![None],
            };
            for control in controls {
                entries.push(PredEntry {
                    prediction: Prediction {
                        path: path.clone(),
                        control,
                    },
                    projections: projections.clone(),
                    chart: chart.clone(),
                    end,
                });
            }
        }
        entries.sort_by(|a, b| a.prediction.cmp(&b.prediction));

        // Guesses are only ever taken at the last node of some prediction, so
        // choice nodes that terminate no prediction path need no entry.
        let ending_nodes: BTreeSet<NodeId> = entries
            .iter()
            .filter(|e| !matches!(e.end, EndKind::Terminal))
            .map(|e| e.prediction.path.last_node().clone())
            .collect();
        let mut guesses: BTreeMap<NodeId, Vec<PredId>> = BTreeMap::new();
        for u in &ending_nodes {
            let mut ids = Vec::new();
            for succ in g.successors(u) {
                for (i, e) in entries.iter().enumerate() {
                    if e.prediction.path.first_node() == succ
                        && e.prediction.path.kind != PathKind::Initial
                    {
                        ids.push(PredId(i as u32));
                    }
                }
            }
            ids.sort();
            ids.dedup();
            if ids.is_empty() {
                return Err(RealizeError::NoGuessAvailable(u.clone()));
            }
            guesses.insert(u.clone(), ids);
        }

        let init = initial_path(g);
        let initial: Vec<PredId> = entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.prediction.path.nodes == init.nodes)
            .map(|(i, _)| PredId(i as u32))
            .collect();
        if initial.is_empty() {
            return Err(RealizeError::Internal("initial path has no prediction"));
        }

        Ok(PredictionTable {
            entries,
            guesses,
            triggers: trig_map,

            initial,
            processes,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn prediction(&self, id: PredId) -> &Prediction {
        &self.entries[id.0 as usize].prediction
    }

    pub fn chart(&self, id: PredId) -> &Bmsc {
        &self.entries[id.0 as usize].chart
    }

    pub fn projection(&self, id: PredId, p: &ProcessId) -> &[(EventRef, Action)] {
        self.entries[id.0 as usize]
            .projections
            .get(p)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn predictions(&self) -> impl Iterator<Item = (PredId, &Prediction)> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| (PredId(i as u32), &e.prediction))
    }

    pub fn triggers_of(&self, n: &NodeId) -> &BTreeSet<ProcessId> {
        static EMPTY: BTreeSet<ProcessId> = BTreeSet::new();
        self.triggers.get(n).unwrap_or(&EMPTY)
    }

    pub fn guesses_at(&self, n: &NodeId) -> &[PredId] {
        self.guesses.get(n).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn initial_predictions(&self) -> &[PredId] {
        &self.initial
    }

    pub fn processes(&self) -> &[ProcessId] {
        &self.processes
    }
}

/// Every admissible prediction of the graph: each prediction path paired with
/// each resolving event of its chart when it ends in a controllable choice,
/// with no control otherwise.
pub fn enumerate_predictions(g: &MsgGraph) -> Result<Vec<Prediction>, RealizeError> {
    let table = PredictionTable::build(g)?;
    Ok(table.entries.into_iter().map(|e| e.prediction).collect())
}

/// Admissible initial predictions: the initial path paired with each
/// admissible control event.
pub fn initial_prediction_set(g: &MsgGraph) -> Result<Vec<Prediction>, RealizeError> {
    let table = PredictionTable::build(g)?;
    Ok(table
        .initial
        .iter()
        .map(|id| table.prediction(*id).clone())
        .collect())
}

/// Predictions whose path starts at a successor of `u`.
pub fn guess_predictions(g: &MsgGraph, u: &NodeId) -> Result<Vec<Prediction>, RealizeError> {
    let table = PredictionTable::build(g)?;
    if !table.guesses.contains_key(u) {
        return Err(RealizeError::NotAChoiceTarget(u.clone()));
    }
    Ok(table
        .guesses_at(u)
        .iter()
        .map(|id| table.prediction(*id).clone())
        .collect())
}

impl PredictionTable {
    fn end_of(&self, id: PredId) -> EndKind {
        self.entries[id.0 as usize].end
    }

    fn last_node(&self, id: PredId) -> &NodeId {
        self.entries[id.0 as usize].prediction.path.last_node()
    }

    fn in_triggers(&self, id: PredId, p: &ProcessId) -> bool {
        self.triggers[self.last_node(id)].contains(p)
    }

    /// Drain empty queues: promote at controllable ends, stop at leader
    /// choices, otherwise fall asleep. Deterministic; `Blocked` marks the
    /// unset-promotion dead end.
    fn settle(
        &self,
        p: &ProcessId,
        mut current: PredId,
        mut next: Option<PredId>,
        mut pos: u32,
    ) -> Settled {
        let mut finished = Vec::new();
        loop {
            if (pos as usize) < self.projection(current, p).len() {
                return Settled::State(LocalState::Executing { current, next, pos }, finished);
            }
            let last = self.last_node(current).clone();
            let in_triggers = self.in_triggers(current, p);
            match self.end_of(current) {
                EndKind::Controllable if in_triggers => {
                    finished.push(FinishEvent {
                        prediction: current,
                        entered_polling: false,
                    });
                    match next {
                        Some(n) => {
                            current = n;
                            next = None;
                            pos = 0;
                        }
                        None => return Settled::Blocked,
                    }
                }
                EndKind::Local if in_triggers => {
                    finished.push(FinishEvent {
                        prediction: current,
                        entered_polling: false,
                    });
                    return Settled::State(LocalState::Choosing { node: last }, finished);
                }
                _ => {
                    finished.push(FinishEvent {
                        prediction: current,
                        entered_polling: true,
                    });
                    return Settled::State(LocalState::Polling, finished);
                }
            }
        }
    }

    /// Resolve a leader choice to its settled members: executing states with
    /// pending events, plus a polling settlement when some guess drains to
    /// nothing. Choice cycles that never produce an event are dropped.
    fn expand_choice(&self, p: &ProcessId, node: &NodeId) -> Result<ChoiceExpansion, RealizeError> {
        let mut expansion = ChoiceExpansion::default();
        let mut visited: BTreeSet<NodeId> = BTreeSet::new();
        let mut stack = vec![(node.clone(), Vec::new())];
        while let Some((n, log)) = stack.pop() {
            if !visited.insert(n.clone()) {
                continue;
            }
            let ids = self
                .guesses
                .get(&n)
                .ok_or(RealizeError::NoGuessAvailable(n.clone()))?;
            for id in ids {
                match self.settle(p, *id, None, 0) {
                    Settled::State(LocalState::Executing { current, next, pos }, mut fin) => {
                        let mut full = log.clone();
                        full.append(&mut fin);
                        expansion
                            .members
                            .push((LocalState::Executing { current, next, pos }, full));
                    }
                    Settled::State(LocalState::Polling, mut fin) => {
                        if expansion.polling.is_none() {
                            let mut full = log.clone();
                            full.append(&mut fin);
                            expansion.polling = Some(full);
                        }
                    }
                    Settled::State(LocalState::Choosing { node: n2 }, mut fin) => {
                        let mut full = log.clone();
                        full.append(&mut fin);
                        stack.push((n2, full));
                    }
                    Settled::Blocked => {
                        return Err(RealizeError::Internal(
                            "guessed prediction blocked on an unset promotion",
                        ))
                    }
                }
            }
        }
        Ok(expansion)
    }

    /// One visible step of process `p` from `state`. Emit steps enumerate the
    /// pending send (branching over guesses at a control event and over
    /// leader choices); deliver steps consume one payload.
    fn local_step(
        &self,
        p: &ProcessId,
        state: &LocalState,
        stim: &Stimulus<'_>,
    ) -> Result<StepOutcomes, RealizeError> {
        let mut out = StepOutcomes::default();
        match state {
            LocalState::Executing { current, next, pos } => {
                let proj = self.projection(*current, p);
                let Some((er, action)) = proj.get(*pos as usize) else {
                    return Err(RealizeError::Internal("executing state beyond its queue"));
                };
                match (&action.kind, stim) {
                    (ActionKind::Send, Stimulus::Emit) => {
                        let is_control =
                            self.entries[current.0 as usize].prediction.control == Some(*er);
                        let next_values: Vec<Option<PredId>> = if is_control {
                            let node = self.last_node(*current).clone();
                            self.guesses
                                .get(&node)
                                .ok_or(RealizeError::NoGuessAvailable(node))?
                                .iter()
                                .map(|id| Some(*id))
                                .collect()
                        } else {
                            vec![*next]
                        };
                        for nv in next_values {
                            let payload = Payload {
                                label: action.label.clone(),
                                annot: Some(PayloadAnnot {
                                    current: *current,
                                    next: nv,
                                }),
                            };
                            match self.settle(p, *current, nv, pos + 1) {
                                Settled::State(state, finished) => out.steps.push(StepResult {
                                    state,
                                    message: Some((action.peer.clone(), payload)),
                                    finished,
                                }),
                                Settled::Blocked => out.blocked = true,
                            }
                        }
                    }
                    (ActionKind::Receive, Stimulus::Deliver { from, payload }) => {
                        if *from != &action.peer || payload.label != action.label {
                            return Ok(out);
                        }
                        let adopted = match next {
                            Some(n) => Some(*n),
                            None => payload.annot.as_ref().and_then(|a| a.next),
                        };
                        match self.settle(p, *current, adopted, pos + 1) {
                            Settled::State(state, finished) => out.steps.push(StepResult {
                                state,
                                message: Some(((*from).clone(), (*payload).clone())),
                                finished,
                            }),
                            Settled::Blocked => out.blocked = true,
                        }
                    }
                    _ => {}
                }
            }
            LocalState::Choosing { node } => {
                if let Stimulus::Emit = stim {
                    let expansion = self.expand_choice(p, node)?;
                    for (member, log) in expansion.members {
                        let inner = self.local_step(p, &member, stim)?;
                        out.blocked |= inner.blocked;
                        for mut step in inner.steps {
                            let mut full = log.clone();
                            full.append(&mut step.finished);
                            step.finished = full;
                            out.steps.push(step);
                        }
                    }
                }
            }
            LocalState::Polling => {
                if let Stimulus::Deliver { from, payload } = stim {
                    let Some(annot) = payload.annot.as_ref() else {
                        return Ok(out);
                    };
                    let proj = self.projection(annot.current, p);
                    let Some((_, head)) = proj.first() else {
                        return Ok(out);
                    };
                    if head.kind != ActionKind::Receive
                        || &head.peer != *from
                        || head.label != payload.label
                    {
                        return Ok(out);
                    }
                    match self.settle(p, annot.current, annot.next, 1) {
                        Settled::State(state, finished) => out.steps.push(StepResult {
                            state,
                            message: Some(((*from).clone(), (*payload).clone())),
                            finished,
                        }),
                        Settled::Blocked => out.blocked = true,
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Default)]
struct ChoiceExpansion {
    members: Vec<(LocalState, Vec<FinishEvent>)>,
    polling: Option<Vec<FinishEvent>>,
}

/// A synthesized realization: the explicit CFM plus the prediction table and
/// the step logs the monitors consume.
pub struct Realization {
    pub cfm: Cfm,
    pub initial_prediction: PredId,
    pub hazards: Vec<Hazard>,
    table: PredictionTable,
    transition_logs: Vec<Vec<Vec<FinishEvent>>>,
    initial_logs: Vec<Vec<FinishEvent>>,
    settle_logs: Vec<BTreeMap<u32, Vec<FinishEvent>>>,
}

impl Realization {
    pub fn table(&self) -> &PredictionTable {
        &self.table
    }

    /// Finish events performed while taking one machine transition.
    pub fn transition_log(&self, machine: usize, transition: usize) -> &[FinishEvent] {
        &self.transition_logs[machine][transition]
    }

    /// Finish events performed by a machine before its first action.
    pub fn initial_log(&self, machine: usize) -> &[FinishEvent] {
        &self.initial_logs[machine]
    }

    /// Finish events of machines that may settle into polling inside a
    /// choosing state, keyed by state index.
    pub fn settle_logs(&self, machine: usize) -> &BTreeMap<u32, Vec<FinishEvent>> {
        &self.settle_logs[machine]
    }

    /// One visible step of the per-process semantics.
    pub fn local_step(
        &self,
        p: &ProcessId,
        state: &LocalState,
        stim: Stimulus<'_>,
    ) -> Result<StepOutcomes, RealizeError> {
        if !self.table.processes.contains(p) {
            return Err(RealizeError::UnknownProcess(p.clone()));
        }
        self.table.local_step(p, state, &stim)
    }
}

/// Synthesize the realization with the canonical initial prediction (the
/// least admissible control event). All machines must share one initial
/// prediction: mixing them breaks the agreed-future invariant.
pub fn synthesize_cfm(g: &MsgGraph) -> Result<Realization, RealizeError> {
    let table = PredictionTable::build(g)?;
    let initial = table.initial[0];
    synthesize_with(table, initial)
}

/// Synthesize with an explicitly chosen initial prediction from
/// [`initial_prediction_set`].
pub fn synthesize_cfm_with(
    g: &MsgGraph,
    initial: &Prediction,
) -> Result<Realization, RealizeError> {
    let table = PredictionTable::build(g)?;
    let id = table
        .initial
        .iter()
        .copied()
        .find(|id| table.prediction(*id) == initial)
        .ok_or(RealizeError::Internal(
            "not an admissible initial prediction",
        ))?;
    synthesize_with(table, id)
}

fn synthesize_with(table: PredictionTable, initial: PredId) -> Result<Realization, RealizeError> {
    let processes = table.processes.clone();
    let mut payloads: Vec<Payload> = Vec::new();
    let mut payload_ids: BTreeMap<Payload, u32> = BTreeMap::new();
    // Payloads known to occur on channel (from, to).
    let mut emitted: BTreeSet<(u32, u32, u32)> = BTreeSet::new();
    let mut hazards: Vec<Hazard> = Vec::new();

    let intern = |payloads: &mut Vec<Payload>,
                  payload_ids: &mut BTreeMap<Payload, u32>,
                  payload: Payload|
     -> u32 {
        if let Some(id) = payload_ids.get(&payload) {
            return *id;
        }
        let id = payloads.len() as u32;
        payloads.push(payload.clone());
        payload_ids.insert(payload, id);
        id
    };

    type MachineBuild = (
        Vec<Machine>,
        Vec<Vec<Vec<FinishEvent>>>,
        Vec<Vec<FinishEvent>>,
        Vec<BTreeMap<u32, Vec<FinishEvent>>>,
    );
    // Iterate machine construction until the emitted-payload relation is
    // stable; receives are only generated for payloads some sender emits.
    let mut result: Option<MachineBuild> = None;
    for _round in 0..=table.len() * processes.len() * 2 + 2 {
        let snapshot = emitted.clone();
        hazards.clear();
        let mut machines = Vec::new();
        let mut all_logs = Vec::new();
        let mut init_logs = Vec::new();
        let mut settle_logs = Vec::new();

        for (p_idx, p) in processes.iter().enumerate() {
            let (start_state, start_log) = match table.settle(p, initial, None, 0) {
                Settled::State(s, log) => (s, log),
                Settled::Blocked => {
                    return Err(RealizeError::Internal("initial prediction blocks at start"))
                }
            };
            init_logs.push(start_log);

            let mut states: Vec<StateInfo> = Vec::new();
            let mut state_ids: BTreeMap<LocalState, u32> = BTreeMap::new();
            let mut transitions: Vec<Transition> = Vec::new();
            let mut logs: Vec<Vec<FinishEvent>> = Vec::new();
            let mut accepting: BTreeSet<u32> = BTreeSet::new();
            let mut settles: BTreeMap<u32, Vec<FinishEvent>> = BTreeMap::new();

            let mut worklist = vec![start_state.clone()];
            state_ids.insert(start_state.clone(), 0);
            states.push(StateInfo::Local(start_state));

            let mut cursor = 0;
            while cursor < worklist.len() {
                let state = worklist[cursor].clone();
                let from = state_ids[&state];
                cursor += 1;

                match &state {
                    LocalState::Polling => {
                        accepting.insert(from);
                    }
                    LocalState::Choosing { node } => {
                        if let Some(log) = table.expand_choice(p, node)?.polling {
                            accepting.insert(from);
                            settles.insert(from, log);
                        }
                    }
                    LocalState::Executing { .. } => {}
                }

                let add = |state_ids: &mut BTreeMap<LocalState, u32>,
                           states: &mut Vec<StateInfo>,
                           worklist: &mut Vec<LocalState>,
                           s: LocalState|
                 -> u32 {
                    if let Some(id) = state_ids.get(&s) {
                        return *id;
                    }
                    let id = states.len() as u32;
                    state_ids.insert(s.clone(), id);
                    states.push(StateInfo::Local(s.clone()));
                    worklist.push(s);
                    id
                };

                // Sends.
                let emit = table.local_step(p, &state, &Stimulus::Emit)?;
                if emit.blocked {
                    hazards.push(Hazard {
                        process: p.clone(),
                        state: state.clone(),
                    });
                }
                for step in emit.steps {
                    let (peer, payload) = step.message.expect("emit steps carry a message");
                    let to = processes
                        .iter()
                        .position(|q| *q == peer)
                        .ok_or(RealizeError::Internal("send to unknown process"))?
                        as u32;
                    let pid = intern(&mut payloads, &mut payload_ids, payload);
                    emitted.insert((p_idx as u32, to, pid));
                    let target = add(&mut state_ids, &mut states, &mut worklist, step.state);
                    transitions.push(Transition {
                        from,
                        action: TransitionAction::Send { to, payload: pid },
                        to: target,
                    });
                    logs.push(step.finished);
                }

                // Receives over the payloads seen on channels into p.
                for (src, dst, pid) in snapshot.iter() {
                    if *dst != p_idx as u32 {
                        continue;
                    }
                    let payload = payloads[*pid as usize].clone();
                    let sender = processes[*src as usize].clone();
                    let deliver = table.local_step(
                        p,
                        &state,
                        &Stimulus::Deliver {
                            from: &sender,
                            payload: &payload,
                        },
                    )?;
                    if deliver.blocked {
                        hazards.push(Hazard {
                            process: p.clone(),
                            state: state.clone(),
                        });
                    }
                    for step in deliver.steps {
                        let target = add(&mut state_ids, &mut states, &mut worklist, step.state);
                        transitions.push(Transition {
                            from,
                            action: TransitionAction::Receive {
                                from: *src,
                                payload: *pid,
                            },
                            to: target,
                        });
                        logs.push(step.finished);
                    }
                }
            }

            machines.push(Machine {
                process: p.clone(),
                states,
                transitions,
                initial: 0,
                accepting,
            });
            all_logs.push(logs);
            settle_logs.push(settles);
        }

        let stable = emitted == snapshot;
        result = Some((machines, all_logs, init_logs, settle_logs));
        if stable {
            break;
        }
    }

    let (machines, transition_logs, initial_logs, settle_logs) =
        result.ok_or(RealizeError::Internal("machine construction did not run"))?;
    let prediction_triggers = table
        .entries
        .iter()
        .map(|e| table.triggers[e.prediction.path.last_node()].clone())
        .collect();
    let cfm = Cfm {
        processes,
        payloads,
        machines,
        predictions: table.entries.iter().map(|e| e.prediction.clone()).collect(),
        prediction_triggers,
    };
    Ok(Realization {
        cfm,
        initial_prediction: initial,
        hazards,
        table,
        transition_logs,
        initial_logs,
        settle_logs,
    })
}

/// The projection realization of a single chart: one machine per process
/// accepting exactly its projection word, labels only.
pub fn projection_cfm(b: &Bmsc) -> Cfm {
    let processes: Vec<ProcessId> = b.processes().iter().cloned().collect();
    let mut payloads: Vec<Payload> = Vec::new();
    let mut payload_ids: BTreeMap<Payload, u32> = BTreeMap::new();
    let mut machines = Vec::new();
    for p in &processes {
        let word = b.projection(p);
        let mut transitions = Vec::new();
        for (i, action) in word.iter().enumerate() {
            let payload = Payload {
                label: action.label.clone(),
                annot: None,
            };
            let pid = *payload_ids.entry(payload.clone()).or_insert_with(|| {
                payloads.push(payload);
                (payloads.len() - 1) as u32
            });
            let peer = processes
                .iter()
                .position(|q| q == &action.peer)
                .expect("peer is a chart process") as u32;
            let act = match action.kind {
                ActionKind::Send => TransitionAction::Send {
                    to: peer,
                    payload: pid,
                },
                ActionKind::Receive => TransitionAction::Receive {
                    from: peer,
                    payload: pid,
                },
            };
            transitions.push(Transition {
                from: i as u32,
                action: act,
                to: (i + 1) as u32,
            });
        }
        let states: Vec<StateInfo> = (0..=word.len())
            .map(|i| StateInfo::Word { pos: i as u32 })
            .collect();
        let accepting: BTreeSet<u32> = [word.len() as u32].into_iter().collect();
        machines.push(Machine {
            process: p.clone(),
            states,
            transitions,
            initial: 0,
            accepting,
        });
    }
    Cfm {
        processes,
        payloads,
        machines,
        predictions: Vec::new(),
        prediction_triggers: Vec::new(),
    }
}

/// The unannotated projection of a whole graph: each machine follows the
/// graph structure over its own projections with no control data. Useful as
/// the negative baseline; choice nodes desynchronize freely.
pub fn unannotated_projection_cfm(g: &MsgGraph) -> Cfm {
    let processes: Vec<ProcessId> = g.processes().into_iter().collect();
    let mut payloads: Vec<Payload> = Vec::new();
    let mut payload_ids: BTreeMap<Payload, u32> = BTreeMap::new();
    let mut machines = Vec::new();

    // NFA states (node, pos) with silent moves (node, len) -> (succ, 0).
    for p in &processes {
        let words: BTreeMap<NodeId, Vec<Action>> = g
            .node_ids()
            .map(|n| (n.clone(), g.label(n).expect("validated node").projection(p)))
            .collect();

        let closure = |state: &(NodeId, usize)| -> BTreeSet<(NodeId, usize)> {
            let mut out = BTreeSet::new();
            let mut stack = vec![state.clone()];
            while let Some(s) = stack.pop() {
                if !out.insert(s.clone()) {
                    continue;
                }
                if s.1 == words[&s.0].len() {
                    for succ in g.successors(&s.0) {
                        stack.push((succ.clone(), 0));
                    }
                }
            }
            out
        };

        let is_accepting = |state: &(NodeId, usize)| {
            closure(state)
                .iter()
                .any(|(n, pos)| n == g.terminal() && *pos == words[n].len())
        };

        let start = (g.initial().clone(), 0usize);
        let mut states: Vec<(NodeId, usize)> = vec![start.clone()];
        let mut ids: BTreeMap<(NodeId, usize), u32> = [(start, 0u32)].into_iter().collect();
        let mut transitions = Vec::new();
        let mut accepting = BTreeSet::new();

        let mut cursor = 0;
        while cursor < states.len() {
            let state = states[cursor].clone();
            let from = ids[&state];
            cursor += 1;
            if is_accepting(&state) {
                accepting.insert(from);
            }
            for (n, pos) in closure(&state) {
                let word = &words[&n];
                if pos == word.len() {
                    continue;
                }
                let action = &word[pos];
                let payload = Payload {
                    label: action.label.clone(),
                    annot: None,
                };
                let pid = *payload_ids.entry(payload.clone()).or_insert_with(|| {
                    payloads.push(payload);
                    (payloads.len() - 1) as u32
                });
                let peer = processes
                    .iter()
                    .position(|q| q == &action.peer)
                    .expect("peer is a graph process") as u32;
                let act = match action.kind {
                    ActionKind::Send => TransitionAction::Send {
                        to: peer,
                        payload: pid,
                    },
                    ActionKind::Receive => TransitionAction::Receive {
                        from: peer,
                        payload: pid,
                    },
                };
                let target = (n.clone(), pos + 1);
                let target_id = *ids.entry(target.clone()).or_insert_with(|| {
                    states.push(target);
                    (states.len() - 1) as u32
                });
                transitions.push(Transition {
                    from,
                    action: act,
                    to: target_id,
                });
            }
        }

        machines.push(Machine {
            process: p.clone(),
            states: (0..states.len())
                .map(|i| StateInfo::Word { pos: i as u32 })
                .collect(),
            transitions,
            initial: 0,
            accepting,
        });
    }

    Cfm {
        processes,
        payloads,
        machines,
        predictions: Vec::new(),
        prediction_triggers: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures::{ex_cross, ex_empty, ex_local};

    fn pred_paths(preds: &[Prediction]) -> BTreeSet<Vec<NodeId>> {
        preds.iter().map(|p| p.path.nodes.clone()).collect()
    }

    #[test]
    fn initial_predictions_of_cross_are_both_sends() {
        let preds = initial_prediction_set(&ex_cross()).unwrap();
        assert_eq!(preds.len(), 2);
        let controls: BTreeSet<Option<EventRef>> = preds.iter().map(|p| p.control).collect();
        // Both sends of the crossing chart, at path position 1.
        assert_eq!(
            controls,
            [Some(EventRef::new(1, 0)), Some(EventRef::new(1, 2))]
                .into_iter()
                .collect()
        );
    }

    #[test]
    fn initial_predictions_trivial_fixtures() {
        let preds = initial_prediction_set(&ex_empty()).unwrap();
        assert_eq!(preds.len(), 1);
        assert_eq!(preds[0].control, None);

        let preds = initial_prediction_set(&ex_local()).unwrap();
        assert_eq!(preds.len(), 1);
        assert_eq!(preds[0].control, None);
    }

    #[test]
    fn cross_prediction_enumeration() {
        let preds = enumerate_predictions(&ex_cross()).unwrap();
        // [s0,s] x2 controls, [s,s] x4 controls, [s,sf] and [sf] without.
        assert_eq!(preds.len(), 8);
        let loop_controls: BTreeSet<EventRef> = preds
            .iter()
            .filter(|p| p.path.nodes == vec![NodeId::new("s"), NodeId::new("s")])
            .map(|p| p.control.unwrap())
            .collect();
        assert_eq!(
            loop_controls,
            [
                EventRef::new(0, 0),
                EventRef::new(0, 2),
                EventRef::new(1, 0),
                EventRef::new(1, 2)
            ]
            .into_iter()
            .collect()
        );
        for p in &preds {
            if p.path.last_node().as_str() == "sf" {
                assert_eq!(p.control, None);
            }
        }
    }

    #[test]
    fn guess_predictions_of_cross_choice() {
        let preds = guess_predictions(&ex_cross(), &"s".into()).unwrap();
        let expected: BTreeSet<Vec<NodeId>> = [
            vec!["s".into(), "s".into()],
            vec!["s".into(), "sf".into()],
            vec!["sf".into()],
        ]
        .into_iter()
        .collect();
        assert_eq!(pred_paths(&preds), expected);
        assert!(matches!(
            guess_predictions(&ex_cross(), &"s0".into()),
            Err(RealizeError::NotAChoiceTarget(_))
        ));
    }

    #[test]
    fn guess_predictions_of_local_choice() {
        let preds = guess_predictions(&ex_local(), &"c".into()).unwrap();
        let expected: BTreeSet<Vec<NodeId>> =
            [vec!["A".into(), "sf".into()], vec!["B".into(), "sf".into()]]
                .into_iter()
                .collect();
        assert_eq!(pred_paths(&preds), expected);
        assert!(preds.iter().all(|p| p.control.is_none()));
    }

    #[test]
    fn empty_graph_machines_accept_immediately() {
        let r = synthesize_cfm(&ex_empty()).unwrap();
        // No process appears anywhere.
        assert!(r.cfm.machines.is_empty());
        assert!(r.hazards.is_empty());
    }

    #[test]
    fn local_leader_branches_and_follower_polls() {
        let r = synthesize_cfm(&ex_local()).unwrap();
        let p_idx = r.cfm.process_index(&"p".into()).unwrap();
        let q_idx = r.cfm.process_index(&"q".into()).unwrap();

        let p_machine = &r.cfm.machines[p_idx];
        assert!(matches!(
            p_machine.states[p_machine.initial as usize],
            StateInfo::Local(LocalState::Choosing { .. })
        ));
        let initial_sends: Vec<&Transition> = p_machine
            .transitions
            .iter()
            .filter(|t| t.from == p_machine.initial)
            .collect();
        assert_eq!(initial_sends.len(), 2);

        // q starts polling (accepting) with one receive per branch label.
        let q_machine = &r.cfm.machines[q_idx];
        assert!(matches!(
            q_machine.states[q_machine.initial as usize],
            StateInfo::Local(LocalState::Polling)
        ));
        assert!(q_machine.accepting.contains(&q_machine.initial));
        let recv_payloads: BTreeSet<u32> = q_machine
            .transitions
            .iter()
            .filter(|t| t.from == q_machine.initial)
            .map(|t| match t.action {
                TransitionAction::Receive { payload, .. } => payload,
                _ => panic!("polling state only receives"),
            })
            .collect();
        assert_eq!(recv_payloads.len(), 2);
        let labels: BTreeSet<&str> = recv_payloads
            .iter()
            .map(|pid| r.cfm.payloads[*pid as usize].label.as_str())
            .collect();
        assert_eq!(labels, ["m1", "m2"].into_iter().collect());
        // The two receives carry distinct current predictions.
        let currents: BTreeSet<PredId> = recv_payloads
            .iter()
            .map(|pid| {
                r.cfm.payloads[*pid as usize]
                    .annot
                    .as_ref()
                    .unwrap()
                    .current
            })
            .collect();
        assert_eq!(currents.len(), 2);
    }

    #[test]
    fn cross_machines_are_finite_and_annotate_guesses() {
        let r = synthesize_cfm(&ex_cross()).unwrap();
        assert_eq!(r.cfm.machines.len(), 2);
        let preds = r.table().len();
        let max_queue = 4;
        let bound = (preds + 1) * (preds + 1) * max_queue;
        for m in &r.cfm.machines {
            assert!(!m.states.is_empty());
            assert!(m.states.len() <= bound, "state blowup: {}", m.states.len());
            assert!(!m.accepting.is_empty());
        }
        // The initial control owner branches over every guessable prediction:
        // four loop controls plus the two terminal paths.
        let init = r.table().prediction(r.initial_prediction).clone();
        let owner = {
            let chart = r.table().chart(r.initial_prediction);
            chart.events()[&init.control.unwrap()].process.clone()
        };
        let m = &r.cfm.machines[r.cfm.process_index(&owner).unwrap()];
        let guesses: BTreeSet<Option<PredId>> = m
            .transitions
            .iter()
            .filter(|t| t.from == m.initial)
            .map(|t| match t.action {
                TransitionAction::Send { payload, .. } => {
                    r.cfm.payloads[payload as usize]
                        .annot
                        .as_ref()
                        .unwrap()
                        .next
                }
                _ => panic!("first event of the crossing chart is a send"),
            })
            .collect();
        assert_eq!(guesses.len(), 6);
        assert!(!guesses.contains(&None));
    }

    #[test]
    fn local_step_branches_over_guesses_at_the_control_event() {
        let r = synthesize_cfm(&ex_cross()).unwrap();
        let init = r.table().prediction(r.initial_prediction).clone();
        let chart = r.table().chart(r.initial_prediction);
        let owner = chart.events()[&init.control.unwrap()].process.clone();
        let state = LocalState::Executing {
            current: r.initial_prediction,
            next: None,
            pos: 0,
        };
        let emit = r.local_step(&owner, &state, Stimulus::Emit).unwrap();
        assert!(!emit.blocked);
        // One branch per guessable prediction at the loop choice.
        assert_eq!(emit.steps.len(), 6);
        for step in &emit.steps {
            let (_, payload) = step.message.as_ref().unwrap();
            let annot = payload.annot.as_ref().unwrap();
            assert_eq!(annot.current, r.initial_prediction);
            assert!(annot.next.is_some());
        }
        // The other process's send is not the control event: no branching.
        let other = r
            .cfm
            .processes
            .iter()
            .find(|p| **p != owner)
            .unwrap()
            .clone();
        let emit = r.local_step(&other, &state, Stimulus::Emit).unwrap();
        assert_eq!(emit.steps.len(), 1);
        assert_eq!(
            emit.steps[0]
                .message
                .as_ref()
                .unwrap()
                .1
                .annot
                .as_ref()
                .unwrap()
                .next,
            None
        );
        assert!(matches!(
            r.local_step(&ProcessId::new("ghost"), &state, Stimulus::Emit),
            Err(RealizeError::UnknownProcess(_))
        ));
    }

    #[test]
    fn projection_cfm_of_single_message() {
        let b = crate::bmsc::fixtures::single_message();
        let cfm = projection_cfm(&b);
        assert_eq!(cfm.machines.len(), 2);
        for m in &cfm.machines {
            assert_eq!(m.transitions.len(), 1);
            assert_eq!(m.states.len(), 2);
        }
    }

    #[test]
    fn unannotated_projection_of_cross_loops() {
        let cfm = unannotated_projection_cfm(&ex_cross());
        let p = &cfm.machines[cfm.process_index(&"p".into()).unwrap()];
        // Every run takes at least one lap through the loop chart, so the
        // initial state does not accept; finishing a lap does.
        assert!(!p.accepting.contains(&p.initial));
        assert!(!p.accepting.is_empty());
        // The lap closes back on the loop entry.
        let entry = p
            .transitions
            .iter()
            .find(|t| t.from == p.initial)
            .expect("initial send exists")
            .to;
        assert!(p
            .transitions
            .iter()
            .any(|t| t.to == entry && t.from != p.initial));
    }
}
