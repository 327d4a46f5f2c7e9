//! Executable correctness machinery: well-formed and complete words, word to
//! chart reconstruction, bounded language comparison between a graph and a
//! machine, and invariant monitors over explorations.

use crate::bmsc::{
    Action, ActionKind, Bmsc, Event, EventKind, EventRef, Message, MessageRef, ProcessId,
};
use crate::choice::triggers;
use crate::graph::MsgGraph;
use crate::realize::{
    Cfm, LocalState, PayloadAnnot, PredId, Realization, StateInfo, TransitionAction,
};
use crate::runtime::{accepted_words, Exploration};
use alloc::collections::{BTreeMap, BTreeSet};
#[cfg(test)]
use alloc::vec;
use alloc::vec::Vec;
use serde::Serialize;
use thiserror::Error;

/// Every receive in every prefix has a matching earlier send: per channel,
/// the k-th receive consumes the k-th send and labels must agree.
pub fn well_formed(word: &[Action]) -> bool {
    let mut pending: BTreeMap<(&ProcessId, &ProcessId), Vec<&Action>> = BTreeMap::new();
    for a in word {
        let key = (a.sender(), a.receiver());
        match a.kind {
            ActionKind::Send => pending.entry(key).or_default().push(a),
            ActionKind::Receive => {
                let queue = pending.entry(key).or_default();
                if queue.is_empty() || queue[0].label != a.label {
                    return false;
                }
                queue.remove(0);
            }
        }
    }
    true
}

/// Every send has a matching receive: per channel, the send and receive label
/// sequences coincide.
pub fn complete(word: &[Action]) -> bool {
    let mut sends: BTreeMap<(&ProcessId, &ProcessId), Vec<&Action>> = BTreeMap::new();
    let mut recvs: BTreeMap<(&ProcessId, &ProcessId), Vec<&Action>> = BTreeMap::new();
    for a in word {
        let key = (a.sender(), a.receiver());
        match a.kind {
            ActionKind::Send => sends.entry(key).or_default().push(a),
            ActionKind::Receive => recvs.entry(key).or_default().push(a),
        }
    }
    let keys: BTreeSet<_> = sends.keys().chain(recvs.keys()).cloned().collect();
    keys.into_iter().all(|k| {
        let s = sends.get(&k).map(Vec::as_slice).unwrap_or(&[]);
        let r = recvs.get(&k).map(Vec::as_slice).unwrap_or(&[]);
        s.len() == r.len() && s.iter().zip(r).all(|(a, b)| a.label == b.label)
    })
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WordError {
    #[error("word is not well-formed at position {position}")]
    NotWellFormed { position: usize },
    #[error("word is not complete: unmatched send at position {position}")]
    NotComplete { position: usize },
}

/// Reconstruct the chart of a well-formed complete word: pair the k-th send
/// with the k-th receive per channel, order events by appearance. The result
/// is FIFO by construction and has the word among its linearizations.
pub fn word_to_bmsc(word: &[Action]) -> Result<Bmsc, WordError> {
    // Locate the first offending position for diagnostics.
    {
        let mut pending: BTreeMap<(&ProcessId, &ProcessId), Vec<(usize, &Action)>> =
            BTreeMap::new();
        for (i, a) in word.iter().enumerate() {
            let key = (a.sender(), a.receiver());
            match a.kind {
                ActionKind::Send => pending.entry(key).or_default().push((i, a)),
                ActionKind::Receive => {
                    let queue = pending.entry(key).or_default();
                    if queue.is_empty() || queue[0].1.label != a.label {
                        return Err(WordError::NotWellFormed { position: i });
                    }
                    queue.remove(0);
                }
            }
        }
        if let Some((i, _)) = pending.values().flatten().next() {
            return Err(WordError::NotComplete { position: *i });
        }
    }

    let mut processes: BTreeSet<ProcessId> = BTreeSet::new();
    let mut events = BTreeMap::new();
    let mut order: BTreeMap<ProcessId, Vec<EventRef>> = BTreeMap::new();
    let mut messages = BTreeMap::new();
    // Per channel: message indices of sends not yet paired with a receive.
    let mut open: BTreeMap<(ProcessId, ProcessId), Vec<MessageRef>> = BTreeMap::new();
    let mut next_message = 0u32;

    for (i, a) in word.iter().enumerate() {
        let er = EventRef::new(0, i as u32);
        processes.insert(a.subject.clone());
        processes.insert(a.peer.clone());
        order.entry(a.subject.clone()).or_default().push(er);
        let channel = (a.sender().clone(), a.receiver().clone());
        match a.kind {
            ActionKind::Send => {
                let mr = MessageRef::new(0, next_message);
                next_message += 1;
                open.entry(channel).or_default().push(mr);
                events.insert(
                    er,
                    Event {
                        process: a.subject.clone(),
                        kind: EventKind::Send,
                        message: mr,
                    },
                );
                messages.insert(
                    mr,
                    Message {
                        send: er,
                        receive: er, // patched when the receive shows up
                        label: a.label.clone(),
                    },
                );
            }
            ActionKind::Receive => {
                let mr = open
                    .get_mut(&channel)
                    .and_then(|q| (!q.is_empty()).then(|| q.remove(0)))
                    .expect("well-formedness was checked");
                events.insert(
                    er,
                    Event {
                        process: a.subject.clone(),
                        kind: EventKind::Receive,
                        message: mr,
                    },
                );
                messages.get_mut(&mr).expect("send was recorded").receive = er;
            }
        }
    }

    Ok(Bmsc::from_parts(processes, events, order, messages))
}

/// Word set of a graph bounded by node visits and chart size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundedLanguage {
    pub words: BTreeSet<Vec<Action>>,
    /// Runs skipped because their composed chart exceeded the event cap.
    pub skipped_runs: usize,
    /// Longest enumerated word.
    pub max_word_len: usize,
}

/// Enumerate the linearizations of every run visiting each node at most
/// `visit_bound` times, skipping runs whose composition exceeds `event_cap`.
pub fn bounded_msg_language(g: &MsgGraph, visit_bound: usize, event_cap: usize) -> BoundedLanguage {
    let mut words = BTreeSet::new();
    let mut skipped = 0;
    let mut max_len = 0;
    for run in g.runs_bounded(visit_bound) {
        let chart = match g.compose_path(&run) {
            Ok(c) => c,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        if chart.event_count() > event_cap {
            skipped += 1;
            continue;
        }
        max_len = max_len.max(chart.event_count());
        match chart.linearizations(event_cap) {
            Ok(lin) => words.extend(lin),
            Err(_) => skipped += 1,
        }
    }
    BoundedLanguage {
        words,
        skipped_runs: skipped,
        max_word_len: max_len,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    EqualAtBound,
    Mismatch,
    Inconclusive,
}

/// Bounds for the language comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EquivalenceBounds {
    pub visit_bound: usize,
    pub event_cap: usize,
    /// Budget for the machine-side word enumeration.
    pub max_configurations: usize,
}

impl Default for EquivalenceBounds {
    fn default() -> Self {
        EquivalenceBounds {
            visit_bound: 3,
            event_cap: 12,
            max_configurations: 200_000,
        }
    }
}

/// Outcome of the bounded language comparison.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EquivalenceReport {
    pub visit_bound: usize,
    pub event_cap: usize,
    /// Word length both enumerations were compared at.
    pub word_length_bound: usize,
    pub missing_in_cfm: Vec<Vec<Action>>,
    pub extra_in_cfm: Vec<Vec<Action>>,
    /// True when some bound cut an enumeration.
    pub boundary_hit: bool,
    pub verdict: Verdict,
}

/// Compare the bounded graph language against the machine language at a
/// compatible word-length bound.
///
/// Machine words are charged against an enlarged graph enumeration (visit
/// bound raised to the word length plus one) so that a word reachable only
/// through extra visits of event-free nodes is not misreported as extra.
pub fn check_equivalence(g: &MsgGraph, cfm: &Cfm, bounds: EquivalenceBounds) -> EquivalenceReport {
    let reference = bounded_msg_language(g, bounds.visit_bound, bounds.event_cap);
    let word_len = reference.max_word_len;
    let machine = accepted_words(cfm, word_len, bounds.max_configurations);

    let wide = bounded_msg_language(g, word_len + 1, word_len);

    let missing: Vec<Vec<Action>> = reference
        .words
        .difference(&machine.words)
        .cloned()
        .collect();
    let extra: Vec<Vec<Action>> = machine.words.difference(&wide.words).cloned().collect();
    let boundary_hit = reference.skipped_runs > 0 || !machine.complete;
    let verdict = if !missing.is_empty() || !extra.is_empty() {
        Verdict::Mismatch
    } else if boundary_hit {
        Verdict::Inconclusive
    } else {
        Verdict::EqualAtBound
    };
    EquivalenceReport {
        visit_bound: bounds.visit_bound,
        event_cap: bounds.event_cap,
        word_length_bound: word_len,
        missing_in_cfm: missing,
        extra_in_cfm: extra,
        boundary_hit,
        verdict,
    }
}

/// Two processes caught executing the same prediction while holding different
/// future predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AgreementViolation {
    pub config: usize,
    pub process_a: ProcessId,
    pub process_b: ProcessId,
    pub current: PredId,
    pub next_a: PredId,
    pub next_b: PredId,
}

/// Check the agreed-future invariant over every explored configuration:
/// whenever two machines share a current prediction and both hold a set next
/// prediction, the nexts must coincide.
///
/// The comparison follows the quantification of the underlying statement:
/// only processes in the triggers set of the shared prediction's last node
/// participate (a pure consumer may lag whole predictions behind with a
/// stale next it will never promote), and pairs where one next equals the
/// shared current are skipped (when a prediction feeds into itself, one
/// process may already run the next lap with a fresh guess while the other
/// still carries the agreed "repeat" next). [`monitor_dissemination`] is the
/// per-step form without these blind spots.
pub fn monitor_agreement(cfm: &Cfm, exploration: &Exploration) -> Vec<AgreementViolation> {
    let mut out = Vec::new();
    for (ci, c) in exploration.configs.iter().enumerate() {
        let mut held: Vec<(usize, PredId, PredId)> = Vec::new();
        for (mi, m) in cfm.machines.iter().enumerate() {
            if let StateInfo::Local(LocalState::Executing {
                current,
                next: Some(next),
                ..
            }) = &m.states[c.locals[mi] as usize]
            {
                let in_triggers = cfm
                    .prediction_triggers
                    .get(current.0 as usize)
                    .map(|t| t.contains(&m.process))
                    .unwrap_or(false);
                if in_triggers {
                    held.push((mi, *current, *next));
                }
            }
        }
        for (i, (ma, cur_a, next_a)) in held.iter().enumerate() {
            for (mb, cur_b, next_b) in held.iter().skip(i + 1) {
                let lap_skew = next_a == cur_a || next_b == cur_b;
                if cur_a == cur_b && next_a != next_b && !lap_skew {
                    out.push(AgreementViolation {
                        config: ci,
                        process_a: cfm.machines[*ma].process.clone(),
                        process_b: cfm.machines[*mb].process.clone(),
                        current: *cur_a,
                        next_a: *next_a,
                        next_b: *next_b,
                    });
                }
            }
        }
    }
    out
}

/// A machine step that deviates from the prediction-passing rules: the
/// attached control data, the consumed payload, or the successor state is not
/// one the per-process semantics produces from the source state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DisseminationViolation {
    pub machine: usize,
    pub transition: usize,
}

/// Replay every explored transition through the per-process step semantics
/// and flag any edge the semantics cannot produce. This is the per-step form
/// of the agreement guarantee: a sender that advertises a future prediction
/// it did not commit to, or a receiver that adopts incorrectly, deviates on
/// the very transition, independent of how far other processes lag behind.
pub fn monitor_dissemination(
    realization: &Realization,
    cfm: &Cfm,
    exploration: &Exploration,
) -> Vec<DisseminationViolation> {
    use crate::realize::Stimulus;
    let mut taken: BTreeSet<(usize, usize)> = BTreeSet::new();
    for e in &exploration.edges {
        taken.insert((e.machine, e.transition));
    }
    let mut out = Vec::new();
    for (mi, ti) in taken {
        let m = &cfm.machines[mi];
        let t = &m.transitions[ti];
        let StateInfo::Local(pre) = &m.states[t.from as usize] else {
            continue;
        };
        let StateInfo::Local(post) = &m.states[t.to as usize] else {
            out.push(DisseminationViolation {
                machine: mi,
                transition: ti,
            });
            continue;
        };
        let legitimate = match t.action {
            TransitionAction::Send { to, payload } => realization
                .local_step(&m.process, pre, Stimulus::Emit)
                .map(|outcomes| {
                    outcomes.steps.iter().any(|s| {
                        s.state == *post
                            && s.message.as_ref().is_some_and(|(peer, p)| {
                                *peer == cfm.processes[to as usize]
                                    && *p == cfm.payloads[payload as usize]
                            })
                    })
                })
                .unwrap_or(false),
            TransitionAction::Receive { from, payload } => realization
                .local_step(
                    &m.process,
                    pre,
                    Stimulus::Deliver {
                        from: &cfm.processes[from as usize],
                        payload: &cfm.payloads[payload as usize],
                    },
                )
                .map(|outcomes| outcomes.steps.iter().any(|s| s.state == *post))
                .unwrap_or(false),
        };
        if !legitimate {
            out.push(DisseminationViolation {
                machine: mi,
                transition: ti,
            });
        }
    }
    out
}

/// A finish event that contradicts the polling rule: a process must enter
/// polling after finishing a prediction exactly when it does not trigger the
/// prediction's last node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PollingViolation {
    pub process: ProcessId,
    pub prediction: PredId,
    pub entered_polling: bool,
    pub expected_polling: bool,
}

/// Check every finish event of the reachable machine behavior against
/// triggers sets recomputed from the graph.
pub fn monitor_polling(
    g: &MsgGraph,
    realization: &Realization,
    exploration: &Exploration,
) -> Vec<PollingViolation> {
    let mut out = Vec::new();
    let mut check = |machine: usize, events: &[crate::realize::FinishEvent]| {
        let process = &realization.cfm.machines[machine].process;
        for ev in events {
            let last = realization
                .table()
                .prediction(ev.prediction)
                .path
                .last_node()
                .clone();
            let expected = !triggers(g, &last)
                .map(|t| t.contains(process))
                .unwrap_or(false);
            if expected != ev.entered_polling {
                out.push(PollingViolation {
                    process: process.clone(),
                    prediction: ev.prediction,
                    entered_polling: ev.entered_polling,
                    expected_polling: expected,
                });
            }
        }
    };

    for machine in 0..realization.cfm.machines.len() {
        check(machine, realization.initial_log(machine));
    }
    // Transitions actually taken somewhere in the exploration.
    let mut taken: BTreeSet<(usize, usize)> = BTreeSet::new();
    for e in &exploration.edges {
        taken.insert((e.machine, e.transition));
    }
    for (machine, transition) in taken {
        check(machine, realization.transition_log(machine, transition));
    }
    // Polling settlements of reachable choosing states.
    let mut reachable_states: BTreeSet<(usize, u32)> = BTreeSet::new();
    for c in &exploration.configs {
        for (mi, s) in c.locals.iter().enumerate() {
            reachable_states.insert((mi, *s));
        }
    }
    for (machine, state) in reachable_states {
        if let Some(events) = realization.settle_logs(machine).get(&state) {
            check(machine, events);
        }
    }
    out
}

/// A machine caught blocked at a promotion point: it sits in a state whose
/// continuation was dropped because the next prediction was unset, cannot
/// move, and is being offered input it cannot take.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromotionViolation {
    pub config: usize,
    pub process: ProcessId,
}

/// Check promotion safety over the exploration: the continuation of every
/// reachable execution must find its next prediction set when a triggering
/// process finishes a controllable-ending prediction. A violation shows up as
/// a machine stranded in a hazard state with pending input.
pub fn monitor_promotion(
    realization: &Realization,
    exploration: &Exploration,
) -> Vec<PromotionViolation> {
    let cfm = &realization.cfm;
    let n = cfm.machines.len();
    let mut hazard_states: BTreeSet<(usize, u32)> = BTreeSet::new();
    for h in &realization.hazards {
        let mi = cfm
            .process_index(&h.process)
            .expect("hazard process is a machine");
        if let Some(si) = cfm.machines[mi]
            .states
            .iter()
            .position(|s| matches!(s, StateInfo::Local(state) if state == &h.state))
        {
            hazard_states.insert((mi, si as u32));
        }
    }
    let mut out = Vec::new();
    for (ci, c) in exploration.configs.iter().enumerate() {
        for (mi, m) in cfm.machines.iter().enumerate() {
            let state = c.locals[mi];
            if !hazard_states.contains(&(mi, state)) {
                continue;
            }
            let can_move = m.transitions.iter().any(|t| {
                t.from == state
                    && match t.action {
                        TransitionAction::Send { .. } => true,
                        TransitionAction::Receive { from, payload } => {
                            c.channel(n, from as usize, mi).first() == Some(&payload)
                        }
                    }
            });
            let input_pending = (0..n).any(|from| !c.channel(n, from, mi).is_empty());
            if !can_move && input_pending {
                out.push(PromotionViolation {
                    config: ci,
                    process: m.process.clone(),
                });
            }
        }
    }
    out
}

/// Outcome of checking the projection realization of one chart.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectionCheck {
    pub equal: bool,
    pub missing: Vec<Vec<Action>>,
    pub extra: Vec<Vec<Action>>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProjectionCheckError {
    #[error(transparent)]
    Chart(#[from] crate::bmsc::BmscError),
    #[error("word enumeration budget exhausted")]
    Budget,
}

/// Build the projection machine of a chart and compare its accepted words
/// against the chart's linearizations, exactly.
pub fn check_projection_realization(
    b: &Bmsc,
    cap: usize,
) -> Result<ProjectionCheck, ProjectionCheckError> {
    let lin = b.linearizations(cap)?;
    let cfm = crate::realize::projection_cfm(b);
    let words = accepted_words(&cfm, b.event_count(), 500_000);
    if !words.complete {
        return Err(ProjectionCheckError::Budget);
    }
    let missing: Vec<Vec<Action>> = lin.difference(&words.words).cloned().collect();
    let extra: Vec<Vec<Action>> = words.words.difference(&lin).cloned().collect();
    Ok(ProjectionCheck {
        equal: missing.is_empty() && extra.is_empty(),
        missing,
        extra,
    })
}

/// Corrupt guess branches of a synthesized machine for monitor sensitivity
/// checks: in each variant, one send keeps its own guessed continuation but
/// attaches a different admissible one to the outgoing message, so receivers
/// adopt a future prediction the sender did not commit to. One variant per
/// corruptible transition.
pub fn corrupt_guess_branches(cfm: &Cfm) -> Vec<Cfm> {
    let mut out = Vec::new();
    for (mi, m) in cfm.machines.iter().enumerate() {
        for (ti, t) in m.transitions.iter().enumerate() {
            let TransitionAction::Send { to, payload } = t.action else {
                continue;
            };
            let p = &cfm.payloads[payload as usize];
            let Some(PayloadAnnot {
                current,
                next: Some(own_next),
            }) = p.annot
            else {
                continue;
            };
            // Self-feeding nexts are indistinguishable from lap skew for the
            // agreement monitor, so pick a mismatch away from the current
            // prediction on both sides.
            if own_next == current {
                continue;
            }
            let alt = cfm.payloads.iter().position(|q| {
                q.label == p.label
                    && matches!(
                        q.annot,
                        Some(PayloadAnnot { current: c, next: Some(n) })
                            if c == current && n != own_next && n != current
                    )
            });
            if let Some(alt) = alt {
                let mut corrupted = cfm.clone();
                corrupted.machines[mi].transitions[ti].action = TransitionAction::Send {
                    to,
                    payload: alt as u32,
                };
                out.push(corrupted);
            }
        }
    }
    out
}
