//! Operational semantics of communicating machines: global configurations,
//! FIFO channels, the interleaving step relation, acceptance, exhaustive
//! exploration with deadlock detection, word enumeration and simulation.

use crate::bmsc::Action;
use crate::realize::{Cfm, TransitionAction};
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A global state: one local state per machine plus the contents of every
/// ordered channel (indexed sender * n + receiver).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Configuration {
    pub locals: Vec<u32>,
    pub channels: Vec<Vec<u32>>,
}

impl Configuration {
    pub fn channel(&self, n: usize, from: usize, to: usize) -> &[u32] {
        &self.channels[from * n + to]
    }
}

/// Every machine in its initial state, all channels empty.
pub fn initial_configuration(cfm: &Cfm) -> Configuration {
    let n = cfm.machines.len();
    Configuration {
        locals: cfm.machines.iter().map(|m| m.initial).collect(),
        channels: vec![Vec::new(); n * n],
    }
}

/// Accepting: every machine in an accepting state and all channels empty.
pub fn is_accepting(cfm: &Cfm, c: &Configuration) -> bool {
    c.channels.iter().all(Vec::is_empty)
        && cfm
            .machines
            .iter()
            .zip(&c.locals)
            .all(|(m, s)| m.accepting.contains(s))
}

/// One enabled move: a machine index and one of its transition indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct EnabledStep {
    pub machine: usize,
    pub transition: usize,
}

/// All enabled moves: sends are always enabled, receives need their payload
/// at the head of the right channel.
pub fn enabled(cfm: &Cfm, c: &Configuration) -> Vec<EnabledStep> {
    let n = cfm.machines.len();
    let mut out = Vec::new();
    for (mi, m) in cfm.machines.iter().enumerate() {
        let state = c.locals[mi];
        for (ti, t) in m.transitions.iter().enumerate() {
            if t.from != state {
                continue;
            }
            let ok = match t.action {
                TransitionAction::Send { .. } => true,
                TransitionAction::Receive { from, payload } => c
                    .channel(n, from as usize, mi)
                    .first()
                    .is_some_and(|head| *head == payload),
            };
            if ok {
                out.push(EnabledStep {
                    machine: mi,
                    transition: ti,
                });
            }
        }
    }
    out
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StepError {
    #[error("chosen step is not enabled")]
    NotEnabled,
}

/// Apply one enabled move: a send enqueues its payload at the channel tail, a
/// receive dequeues the head; exactly one machine changes state.
pub fn step(
    cfm: &Cfm,
    c: &Configuration,
    choice: &EnabledStep,
) -> Result<Configuration, StepError> {
    let n = cfm.machines.len();
    let m = cfm
        .machines
        .get(choice.machine)
        .ok_or(StepError::NotEnabled)?;
    let t = m
        .transitions
        .get(choice.transition)
        .ok_or(StepError::NotEnabled)?;
    if c.locals[choice.machine] != t.from {
        return Err(StepError::NotEnabled);
    }
    let mut next = c.clone();
    match t.action {
        TransitionAction::Send { to, payload } => {
            next.channels[choice.machine * n + to as usize].push(payload);
        }
        TransitionAction::Receive { from, payload } => {
            let chan = &mut next.channels[from as usize * n + choice.machine];
            if chan.first() != Some(&payload) {
                return Err(StepError::NotEnabled);
            }
            chan.remove(0);
        }
    }
    next.locals[choice.machine] = t.to;
    Ok(next)
}

/// Bounds for exhaustive exploration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExploreBounds {
    pub channel_depth: usize,
    pub max_configurations: usize,
}

impl Default for ExploreBounds {
    fn default() -> Self {
        ExploreBounds {
            channel_depth: 4,
            max_configurations: 10_000,
        }
    }
}

/// One explored edge; `machine`/`transition` address the move taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ExploredEdge {
    pub from: usize,
    pub machine: usize,
    pub transition: usize,
    pub to: usize,
}

/// Result of an exhaustive exploration. Deadlocks are the explored
/// configurations from which no accepting configuration is reachable inside
/// the explored graph; the verdict is exact when no boundary was hit and the
/// budget sufficed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Exploration {
    pub configs: Vec<Configuration>,
    pub edges: Vec<ExploredEdge>,
    pub accepting: BTreeSet<usize>,
    pub deadlocks: BTreeSet<usize>,
    /// Configurations whose expansion was cut by the channel depth bound or
    /// the configuration budget.
    pub boundary: BTreeSet<usize>,
    /// False when the configuration budget ran out.
    pub complete: bool,
}

impl Exploration {
    /// True when the deadlock verdict is exact.
    pub fn exact(&self) -> bool {
        self.complete && self.boundary.is_empty()
    }

    /// Deadlocks that survive any continuation of a cut-off exploration: the
    /// whole set when exact, otherwise only fully expanded configurations
    /// with no moves at all.
    pub fn confirmed_deadlocks(&self) -> BTreeSet<usize> {
        if self.exact() {
            return self.deadlocks.clone();
        }
        let mut has_edge = BTreeSet::new();
        for e in &self.edges {
            has_edge.insert(e.from);
        }
        self.deadlocks
            .iter()
            .copied()
            .filter(|i| !has_edge.contains(i) && !self.boundary.contains(i))
            .collect()
    }
}

/// Breadth-first closure of the step relation from the initial configuration,
/// with bounded channels; deadlocks via backward reachability from accepting
/// configurations.
pub fn explore(cfm: &Cfm, bounds: ExploreBounds) -> Exploration {
    let n = cfm.machines.len();
    let init = initial_configuration(cfm);
    let mut configs = vec![init.clone()];
    let mut ids: BTreeMap<Configuration, usize> = [(init, 0usize)].into_iter().collect();
    let mut edges = Vec::new();
    let mut accepting = BTreeSet::new();
    let mut boundary = BTreeSet::new();
    let mut complete = true;

    let mut cursor = 0;
    while cursor < configs.len() {
        let c = configs[cursor].clone();
        let from = cursor;
        cursor += 1;
        if is_accepting(cfm, &c) {
            accepting.insert(from);
        }
        for choice in enabled(cfm, &c) {
            let t = &cfm.machines[choice.machine].transitions[choice.transition];
            if let TransitionAction::Send { to, .. } = t.action {
                if c.channel(n, choice.machine, to as usize).len() >= bounds.channel_depth {
                    boundary.insert(from);
                    continue;
                }
            }
            let next = step(cfm, &c, &choice).expect("enabled step applies");
            let to = match ids.get(&next) {
                Some(&id) => id,
                None => {
                    if configs.len() >= bounds.max_configurations {
                        boundary.insert(from);
                        complete = false;
                        continue;
                    }
                    let id = configs.len();
                    ids.insert(next.clone(), id);
                    configs.push(next);
                    id
                }
            };
            edges.push(ExploredEdge {
                from,
                machine: choice.machine,
                transition: choice.transition,
                to,
            });
        }
    }

    // Backward reachability from accepting configurations.
    let mut rev: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for e in &edges {
        rev.entry(e.to).or_default().push(e.from);
    }
    let mut can_accept: BTreeSet<usize> = accepting.clone();
    let mut stack: Vec<usize> = accepting.iter().copied().collect();
    while let Some(i) = stack.pop() {
        for &p in rev.get(&i).into_iter().flatten() {
            if can_accept.insert(p) {
                stack.push(p);
            }
        }
    }
    let deadlocks: BTreeSet<usize> = (0..configs.len())
        .filter(|i| !can_accept.contains(i))
        .collect();

    Exploration {
        configs,
        edges,
        accepting,
        deadlocks,
        boundary,
        complete,
    }
}

/// Accepted words of the machine up to a length bound, annotations stripped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordEnumeration {
    pub words: BTreeSet<Vec<Action>>,
    /// False when the configuration budget was exhausted; the word set is
    /// then a subset of the true bounded language.
    pub complete: bool,
}

/// Enumerate the accepted words of length at most `max_len` by a memoized
/// depth-bounded search. Channels never grow past the remaining budget, so no
/// channel bound is needed.
pub fn accepted_words(cfm: &Cfm, max_len: usize, max_configs: usize) -> WordEnumeration {
    // Intern rendered actions; distinct transitions may share a letter.
    let mut letters: Vec<Action> = Vec::new();
    let mut letter_ids: BTreeMap<Action, u32> = BTreeMap::new();
    let mut letter_of: BTreeMap<(usize, usize), u32> = BTreeMap::new();
    for (mi, m) in cfm.machines.iter().enumerate() {
        for (ti, t) in m.transitions.iter().enumerate() {
            let action = cfm.render_action(mi, &t.action);
            let id = *letter_ids.entry(action.clone()).or_insert_with(|| {
                letters.push(action);
                (letters.len() - 1) as u32
            });
            letter_of.insert((mi, ti), id);
        }
    }

    let mut config_ids: BTreeMap<Configuration, usize> = BTreeMap::new();
    let mut config_list: Vec<Configuration> = Vec::new();
    let mut memo: BTreeMap<(usize, usize), BTreeSet<Vec<u32>>> = BTreeMap::new();
    let mut complete = true;

    fn intern_config(
        c: Configuration,
        ids: &mut BTreeMap<Configuration, usize>,
        list: &mut Vec<Configuration>,
    ) -> usize {
        if let Some(&id) = ids.get(&c) {
            return id;
        }
        let id = list.len();
        ids.insert(c.clone(), id);
        list.push(c);
        id
    }

    #[allow(clippy::too_many_arguments)]
    fn words_from(
        cfm: &Cfm,
        cid: usize,
        budget: usize,
        letter_of: &BTreeMap<(usize, usize), u32>,
        config_ids: &mut BTreeMap<Configuration, usize>,
        config_list: &mut Vec<Configuration>,
        memo: &mut BTreeMap<(usize, usize), BTreeSet<Vec<u32>>>,
        max_configs: usize,
        complete: &mut bool,
    ) -> BTreeSet<Vec<u32>> {
        if let Some(hit) = memo.get(&(cid, budget)) {
            return hit.clone();
        }
        if config_list.len() > max_configs || memo.len() > max_configs * 4 {
            *complete = false;
            return BTreeSet::new();
        }
        let c = config_list[cid].clone();
        let mut out: BTreeSet<Vec<u32>> = BTreeSet::new();
        if is_accepting(cfm, &c) {
            out.insert(Vec::new());
        }
        if budget > 0 {
            for choice in enabled(cfm, &c) {
                let next = step(cfm, &c, &choice).expect("enabled step applies");
                let nid = intern_config(next, config_ids, config_list);
                let letter = letter_of[&(choice.machine, choice.transition)];
                for mut w in words_from(
                    cfm,
                    nid,
                    budget - 1,
                    letter_of,
                    config_ids,
                    config_list,
                    memo,
                    max_configs,
                    complete,
                ) {
                    w.insert(0, letter);
                    out.insert(w);
                }
            }
        }
        memo.insert((cid, budget), out.clone());
        out
    }

    let init = intern_config(
        initial_configuration(cfm),
        &mut config_ids,
        &mut config_list,
    );
    let raw = words_from(
        cfm,
        init,
        max_len,
        &letter_of,
        &mut config_ids,
        &mut config_list,
        &mut memo,
        max_configs,
        &mut complete,
    );
    let words = raw
        .into_iter()
        .map(|w| w.into_iter().map(|i| letters[i as usize].clone()).collect())
        .collect();
    WordEnumeration { words, complete }
}

/// Deterministic xorshift-style generator for seeded simulation.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    pub fn pick(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }
}

/// One simulated step: the acting process and its rendered action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SimStep {
    pub machine: usize,
    pub action: Action,
}

/// A seeded random run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SimTrace {
    pub steps: Vec<SimStep>,
    /// Configuration after each step (the initial one is not included).
    pub configs: Vec<Configuration>,
    /// Whether the final configuration is accepting.
    pub accepting: bool,
    /// True when the step limit cut the run while moves were still enabled.
    pub truncated: bool,
}

/// Run one pseudorandom resolution of the nondeterminism; reproducible per
/// seed. Stops when nothing is enabled or after `max_steps` moves.
pub fn simulate(cfm: &Cfm, seed: u64, max_steps: usize) -> SimTrace {
    let mut rng = SplitMix64::new(seed);
    let mut c = initial_configuration(cfm);
    let mut steps = Vec::new();
    let mut configs = Vec::new();
    let mut truncated = false;
    loop {
        let moves = enabled(cfm, &c);
        if moves.is_empty() {
            break;
        }
        if steps.len() >= max_steps {
            truncated = true;
            break;
        }
        let choice = moves[rng.pick(moves.len())];
        let t = &cfm.machines[choice.machine].transitions[choice.transition];
        steps.push(SimStep {
            machine: choice.machine,
            action: cfm.render_action(choice.machine, &t.action),
        });
        c = step(cfm, &c, &choice).expect("enabled step applies");
        configs.push(c.clone());
    }
    let accepting = is_accepting(cfm, &c);
    SimTrace {
        steps,
        configs,
        accepting,
        truncated,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bmsc::fixtures::{crossing, single_message};
    use crate::bmsc::{Action, DEFAULT_LINEARIZATION_CAP};
    use crate::graph::fixtures::{ex_cross, ex_empty, ex_local};
    use crate::realize::{projection_cfm, synthesize_cfm};

    #[test]
    fn empty_graph_accepts_immediately() {
        let r = synthesize_cfm(&ex_empty()).unwrap();
        let c = initial_configuration(&r.cfm);
        assert!(is_accepting(&r.cfm, &c));
        assert!(enabled(&r.cfm, &c).is_empty());
        let e = explore(&r.cfm, ExploreBounds::default());
        assert_eq!(e.configs.len(), 1);
        assert!(e.deadlocks.is_empty());
        assert!(e.exact());
    }

    #[test]
    fn crossing_sends_are_concurrently_enabled() {
        let r = synthesize_cfm(&ex_cross()).unwrap();
        let c = initial_configuration(&r.cfm);
        assert!(!is_accepting(&r.cfm, &c));
        let moves = enabled(&r.cfm, &c);
        // Both processes can fire their opening send; the control owner
        // branches over its guesses.
        let machines: BTreeSet<usize> = moves.iter().map(|m| m.machine).collect();
        assert_eq!(machines.len(), 2);
    }

    #[test]
    fn step_rejects_disabled_choices() {
        let r = synthesize_cfm(&ex_cross()).unwrap();
        let c = initial_configuration(&r.cfm);
        let bogus = EnabledStep {
            machine: 0,
            transition: usize::MAX,
        };
        assert!(step(&r.cfm, &c, &bogus).is_err());
    }

    #[test]
    fn projection_cfm_accepts_exactly_the_linearizations() {
        let b = crossing();
        let cfm = projection_cfm(&b);
        let words = accepted_words(&cfm, b.event_count(), 10_000);
        assert!(words.complete);
        assert_eq!(
            words.words,
            b.linearizations(DEFAULT_LINEARIZATION_CAP).unwrap()
        );

        let b = single_message();
        let cfm = projection_cfm(&b);
        let words = accepted_words(&cfm, 2, 10_000);
        assert_eq!(words.words.len(), 1);
        assert!(words.words.contains(&alloc::vec![
            Action::send("p", "q", "m"),
            Action::receive("q", "p", "m")
        ]));
    }

    #[test]
    fn cross_synthesis_explores_without_deadlocks() {
        let r = synthesize_cfm(&ex_cross()).unwrap();
        let e = explore(&r.cfm, ExploreBounds::default());
        assert!(e.exact(), "exploration should close within defaults");
        assert!(e.deadlocks.is_empty(), "deadlocks: {:?}", e.deadlocks.len());
        assert!(!e.accepting.is_empty());
    }

    #[test]
    fn cross_synthesis_accepts_the_one_lap_words() {
        let r = synthesize_cfm(&ex_cross()).unwrap();
        let got = accepted_words(&r.cfm, 4, 50_000);
        assert!(got.complete);
        let want = crossing()
            .linearizations(DEFAULT_LINEARIZATION_CAP)
            .unwrap();
        assert_eq!(got.words, want);
    }

    #[test]
    fn local_synthesis_language() {
        let r = synthesize_cfm(&ex_local()).unwrap();
        let got = accepted_words(&r.cfm, 2, 10_000);
        let want: BTreeSet<Vec<Action>> = [
            alloc::vec![
                Action::send("p", "q", "m1"),
                Action::receive("q", "p", "m1")
            ],
            alloc::vec![
                Action::send("p", "q", "m2"),
                Action::receive("q", "p", "m2")
            ],
        ]
        .into_iter()
        .collect();
        assert_eq!(got.words, want);
    }

    #[test]
    fn broken_cfm_flags_everything_deadlocked() {
        let r = synthesize_cfm(&ex_cross()).unwrap();
        let mut cfm = r.cfm.clone();
        for m in &mut cfm.machines {
            m.accepting.clear();
        }
        let e = explore(&cfm, ExploreBounds::default());
        assert_eq!(e.deadlocks.len(), e.configs.len());
    }

    #[test]
    fn channel_contents_respect_fifo() {
        let r = synthesize_cfm(&ex_cross()).unwrap();
        let e = explore(&r.cfm, ExploreBounds::default());
        // Replay every explored receive and check it dequeues the head that
        // the matching send enqueued first.
        for edge in &e.edges {
            let c = &e.configs[edge.from];
            let t = &r.cfm.machines[edge.machine].transitions[edge.transition];
            if let TransitionAction::Receive { from, payload } = t.action {
                let chan = c.channel(r.cfm.machines.len(), from as usize, edge.machine);
                assert_eq!(chan.first(), Some(&payload));
            }
        }
    }

    #[test]
    fn accepting_configurations_have_empty_channels() {
        let r = synthesize_cfm(&ex_cross()).unwrap();
        let e = explore(&r.cfm, ExploreBounds::default());
        for i in &e.accepting {
            assert!(e.configs[*i].channels.iter().all(Vec::is_empty));
        }
    }

    #[test]
    fn simulation_is_reproducible_and_accepts() {
        let r = synthesize_cfm(&ex_empty()).unwrap();
        let t = simulate(&r.cfm, 7, 100);
        assert!(t.accepting);
        assert!(t.steps.is_empty());

        let r = synthesize_cfm(&ex_cross()).unwrap();
        let a = simulate(&r.cfm, 42, 200);
        let b = simulate(&r.cfm, 42, 200);
        assert_eq!(a, b);
        // Some seed halts in an accepting configuration within the bound.
        let mut accepted = false;
        for seed in 0..64 {
            let t = simulate(&r.cfm, seed, 200);
            if !t.truncated && t.accepting {
                accepted = true;
                assert_eq!(t.steps.len() % 4, 0);
                break;
            }
        }
        assert!(accepted, "no seed reached acceptance");
    }

    #[test]
    fn broken_cfm_never_accepts_in_simulation() {
        let r = synthesize_cfm(&ex_cross()).unwrap();
        let mut cfm = r.cfm.clone();
        for m in &mut cfm.machines {
            m.accepting.clear();
        }
        for seed in 0..8 {
            assert!(!simulate(&cfm, seed, 100).accepting);
        }
    }
}
