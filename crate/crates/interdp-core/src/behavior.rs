//! Behavior automaton: the underlying DES enriched with observable
//! signature events marking changes of the continuous-dynamics group, plus the
//! on-line matcher turning filtered residual tuples into signature events.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::HybridModel;
use crate::parity::{BooleanSignature, ResidualBank};

/// A BA state: either a model mode or a fresh intermediate state inserted on a
/// group-crossing transition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaState {
    Mode(String),
    /// Inserted on `source --event--> target` when the groups differ; its only
    /// outgoing transition carries the signature event of `target`'s group.
    Intermediate {
        source: String,
        event: String,
        target: String,
    },
}

impl BaState {
    /// The behavioral mode the plant actually occupies in this BA state. For
    /// an intermediate state the discrete jump has already happened, so that
    /// is the transition target.
    pub fn mode(&self) -> &str {
        match self {
            BaState::Mode(m) => m,
            BaState::Intermediate { target, .. } => target,
        }
    }

    pub fn label(&self) -> String {
        match self {
            BaState::Mode(m) => m.clone(),
            BaState::Intermediate { source, event, target } => {
                format!("w({source}-{event}-{target})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaEvent {
    pub id: String,
    pub observable: bool,
    pub fault: bool,
    /// Partition group index when this is a signature event.
    pub signature_group: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorAutomaton {
    pub states: Vec<BaState>,
    pub events: Vec<BaEvent>,
    /// Deterministic transition map over state indices.
    pub transitions: BTreeMap<(usize, String), usize>,
    pub initial: usize,
    /// Signature event id of each partition group, indexed by group.
    pub signature_events: Vec<String>,
}

/// Event id used for the signature event of a partition group. Groups are
/// named after their first member in model order.
pub fn signature_event_id(group: &[String]) -> String {
    format!("sig:{}", group[0])
}

/// Builds the behavior automaton. Transitions within one diagnosability group
/// are copied unchanged; transitions crossing groups are routed through a
/// fresh intermediate state followed by the target group's signature event.
pub fn build_behavior_automaton(model: &HybridModel, bank: &ResidualBank) -> BehaviorAutomaton {
    let mut states: Vec<BaState> = model.modes.iter().map(|m| BaState::Mode(m.id.clone())).collect();
    let state_of_mode: BTreeMap<&str, usize> = model
        .modes
        .iter()
        .enumerate()
        .map(|(i, m)| (m.id.as_str(), i))
        .collect();

    let signature_events: Vec<String> = bank.partition.iter().map(|g| signature_event_id(g)).collect();

    let mut events: Vec<BaEvent> = model
        .events
        .iter()
        .map(|e| BaEvent {
            id: e.id.clone(),
            observable: e.observable,
            fault: e.fault,
            signature_group: None,
        })
        .collect();
    for (g, id) in signature_events.iter().enumerate() {
        debug_assert!(
            !model.events.iter().any(|e| &e.id == id),
            "signature event id collides with a model event"
        );
        events.push(BaEvent {
            id: id.clone(),
            observable: true,
            fault: false,
            signature_group: Some(g),
        });
    }

    let mut transitions = BTreeMap::new();
    for t in &model.transitions {
        let si = state_of_mode[t.source.as_str()];
        let ti = state_of_mode[t.target.as_str()];
        let sg = bank.group_of(&t.source).expect("mode in partition");
        let tg = bank.group_of(&t.target).expect("mode in partition");
        if sg == tg {
            transitions.insert((si, t.event.clone()), ti);
        } else {
            let w = states.len();
            states.push(BaState::Intermediate {
                source: t.source.clone(),
                event: t.event.clone(),
                target: t.target.clone(),
            });
            transitions.insert((si, t.event.clone()), w);
            transitions.insert((w, signature_events[tg].clone()), ti);
        }
    }

    BehaviorAutomaton {
        states,
        events,
        transitions,
        initial: state_of_mode[model.initial_mode.as_str()],
        signature_events,
    }
}

impl BehaviorAutomaton {
    pub fn event(&self, id: &str) -> Option<&BaEvent> {
        self.events.iter().find(|e| e.id == id)
    }

    pub fn target(&self, state: usize, event: &str) -> Option<usize> {
        self.transitions.get(&(state, event.to_string())).copied()
    }

    /// Plain-text dot-compatible node/edge listing.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph ba {\n");
        for (i, s) in self.states.iter().enumerate() {
            let shape = match s {
                BaState::Mode(_) => "ellipse",
                BaState::Intermediate { .. } => "point",
            };
            let marker = if i == self.initial { ", style=bold" } else { "" };
            out.push_str(&format!("  n{} [label=\"{}\", shape={}{}];\n", i, s.label(), shape, marker));
        }
        for ((src, ev), dst) in &self.transitions {
            out.push_str(&format!("  n{src} -> n{dst} [label=\"{ev}\"];\n"));
        }
        out.push_str("}\n");
        out
    }
}

/// Outcome of feeding a new filtered residual tuple to the matcher.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SignatureOutcome {
    /// The observed tuple settled on the signature of this group: emit its
    /// signature event.
    Event(String),
    /// The observed tuple settled on a pattern matching no group.
    Unknown(BooleanSignature),
}

/// Turns the on-line stream of filtered residual tuples into signature
/// events. A tuple must stay constant for `settle` consecutive ticks before it
/// is acted upon, which masks the mixed-window transient right after a mode
/// switch.
#[derive(Debug, Clone)]
pub struct SignatureMatcher {
    /// (signature pattern, signature event id) per partition group.
    table: Vec<(BooleanSignature, String)>,
    settle: usize,
    acknowledged: BooleanSignature,
    candidate: BooleanSignature,
    stable_for: usize,
}

impl SignatureMatcher {
    pub fn new(model: &HybridModel, bank: &ResidualBank) -> Self {
        let table = bank
            .partition
            .iter()
            .map(|group| (bank.signatures[&group[0]].clone(), signature_event_id(group)))
            .collect();
        let initial = bank.signatures[&model.initial_mode].clone();
        SignatureMatcher {
            table,
            settle: model.window() + 1,
            acknowledged: initial.clone(),
            candidate: initial,
            stable_for: 0,
        }
    }

    /// Feeds the next filtered tuple; returns a signature event (or unknown
    /// signal) when a new stable signature is recognized.
    pub fn push(&mut self, tuple: BooleanSignature) -> Option<SignatureOutcome> {
        if tuple == self.candidate {
            self.stable_for += 1;
        } else {
            self.candidate = tuple;
            self.stable_for = 1;
        }
        if self.stable_for < self.settle || self.candidate == self.acknowledged {
            return None;
        }
        self.acknowledged = self.candidate.clone();
        match self.table.iter().find(|(sig, _)| *sig == self.candidate) {
            Some((_, event)) => Some(SignatureOutcome::Event(event.clone())),
            None => Some(SignatureOutcome::Unknown(self.candidate.clone())),
        }
    }
}
