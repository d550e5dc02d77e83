//! Diagnoser construction (subset construction with fault-label propagation
//! over the behavior automaton) and the on-line tracker producing the
//! diagnosis vector.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behavior::{BaState, BehaviorAutomaton};

pub type FaultLabel = BTreeSet<String>;

#[derive(Debug, Error)]
pub enum DiagnoserError {
    #[error("diagnoser exceeds the state cap of {0}")]
    SizeLimit(usize),
    #[error("unknown mode: no transition for event {event} from the current diagnoser state")]
    UnknownMode { event: String },
    #[error("event {0} is not in the diagnoser alphabet")]
    UnknownEvent(String),
    #[error("diagnoser file is not a valid container: {0}")]
    BadContainer(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// A diagnoser state: the set of (BA state, fault label) pairs consistent with
/// the observations so far.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DiagnoserState(pub BTreeSet<(usize, FaultLabel)>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnoser {
    pub states: Vec<DiagnoserState>,
    /// Deterministic transition map over reachable states and feasible events.
    #[serde(with = "transition_map")]
    pub transitions: BTreeMap<(usize, String), usize>,
    pub initial: usize,
    /// Observable events of the BA, including signature events.
    pub alphabet: BTreeSet<String>,
    /// Mode occupied by the plant in each BA state (intermediates map to
    /// their transition target).
    pub ba_state_modes: Vec<String>,
    pub ba_state_labels: Vec<String>,
    pub fingerprint: String,
}

pub const DEFAULT_STATE_CAP: usize = 1_000_000;

/// Least fixpoint of `pairs` under unobservable transitions; traversing a
/// fault event adds the fault to the label.
pub fn unobservable_closure(
    ba: &BehaviorAutomaton,
    pairs: &BTreeSet<(usize, FaultLabel)>,
) -> BTreeSet<(usize, FaultLabel)> {
    let mut closed = pairs.clone();
    let mut queue: VecDeque<(usize, FaultLabel)> = pairs.iter().cloned().collect();
    while let Some((state, label)) = queue.pop_front() {
        for ((src, ev), dst) in &ba.transitions {
            if *src != state {
                continue;
            }
            let event = ba.event(ev).expect("transition event declared");
            if event.observable {
                continue;
            }
            let mut next_label = label.clone();
            if event.fault {
                next_label.insert(ev.clone());
            }
            let pair = (*dst, next_label);
            if closed.insert(pair.clone()) {
                queue.push_back(pair);
            }
        }
    }
    closed
}

/// Subset construction over observable events, reachable part only.
pub fn build_diagnoser(
    ba: &BehaviorAutomaton,
    fingerprint: &str,
    state_cap: usize,
) -> Result<Diagnoser, DiagnoserError> {
    let alphabet: BTreeSet<String> = ba
        .events
        .iter()
        .filter(|e| e.observable)
        .map(|e| e.id.clone())
        .collect();

    let mut seed = BTreeSet::new();
    seed.insert((ba.initial, FaultLabel::new()));
    let initial_state = DiagnoserState(unobservable_closure(ba, &seed));

    let mut states = vec![initial_state.clone()];
    let mut index: BTreeMap<DiagnoserState, usize> = BTreeMap::new();
    index.insert(initial_state, 0);
    let mut transitions = BTreeMap::new();
    let mut queue = VecDeque::from([0usize]);

    while let Some(current) = queue.pop_front() {
        for event in &alphabet {
            let mut moved = BTreeSet::new();
            for (state, label) in &states[current].0 {
                if let Some(dst) = ba.target(*state, event) {
                    moved.insert((dst, label.clone()));
                }
            }
            if moved.is_empty() {
                continue;
            }
            let next = DiagnoserState(unobservable_closure(ba, &moved));
            let next_idx = match index.get(&next) {
                Some(i) => *i,
                None => {
                    if states.len() >= state_cap {
                        return Err(DiagnoserError::SizeLimit(state_cap));
                    }
                    let i = states.len();
                    states.push(next.clone());
                    index.insert(next, i);
                    queue.push_back(i);
                    i
                }
            };
            transitions.insert((current, event.clone()), next_idx);
        }
    }

    Ok(Diagnoser {
        states,
        transitions,
        initial: 0,
        alphabet,
        ba_state_modes: ba.states.iter().map(|s| s.mode().to_string()).collect(),
        ba_state_labels: ba.states.iter().map(BaState::label).collect(),
        fingerprint: fingerprint.to_string(),
    })
}

/// One diagnosis hypothesis: a behavioral mode together with the faults that
/// must have occurred for the system to be there.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Hypothesis {
    pub mode: String,
    pub faults: FaultLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosisVector(pub Vec<Hypothesis>);

impl DiagnosisVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// True when every hypothesis agrees that `fault` has occurred.
    pub fn fault_certain(&self, fault: &str) -> bool {
        !self.0.is_empty() && self.0.iter().all(|h| h.faults.contains(fault))
    }
}

impl Diagnoser {
    /// Collapses a diagnoser state into the diagnosis vector: one hypothesis
    /// per distinct (mode, label) pair. Ordering: descending prior when
    /// priors are given, then fewest faults, then mode id.
    pub fn decorate(&self, state: usize, priors: Option<&BTreeMap<Hypothesis, f64>>) -> DiagnosisVector {
        let mut set: BTreeSet<Hypothesis> = BTreeSet::new();
        for (ba_state, label) in &self.states[state].0 {
            set.insert(Hypothesis {
                mode: self.ba_state_modes[*ba_state].clone(),
                faults: label.clone(),
            });
        }
        let mut hyps: Vec<Hypothesis> = set.into_iter().collect();
        hyps.sort_by(|a, b| {
            if let Some(priors) = priors {
                let pa = priors.get(a).copied().unwrap_or(0.0);
                let pb = priors.get(b).copied().unwrap_or(0.0);
                if let Some(ord) = pb.partial_cmp(&pa) {
                    if ord != std::cmp::Ordering::Equal {
                        return ord;
                    }
                }
            }
            a.faults
                .len()
                .cmp(&b.faults.len())
                .then_with(|| a.mode.cmp(&b.mode))
                .then_with(|| a.faults.cmp(&b.faults))
        });
        DiagnosisVector(hyps)
    }

    /// Deterministic text listing for golden-file tests.
    pub fn dump_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("diagnoser states={} initial={}\n", self.states.len(), self.initial));
        for (i, state) in self.states.iter().enumerate() {
            let pairs: Vec<String> = state
                .0
                .iter()
                .map(|(s, label)| {
                    let faults: Vec<&str> = label.iter().map(String::as_str).collect();
                    format!("({},{{{}}})", self.ba_state_labels[*s], faults.join(","))
                })
                .collect();
            out.push_str(&format!("state {i}: {}\n", pairs.join(" ")));
        }
        for ((src, ev), dst) in &self.transitions {
            out.push_str(&format!("trans {src} --{ev}--> {dst}\n"));
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::from(*CONTAINER_MAGIC);
        out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
        let body = serde_json::to_vec(self).expect("diagnoser serialization cannot fail");
        out.extend_from_slice(&body);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DiagnoserError> {
        if bytes.len() < CONTAINER_MAGIC.len() + 4 || &bytes[..CONTAINER_MAGIC.len()] != CONTAINER_MAGIC {
            return Err(DiagnoserError::BadContainer("bad magic".into()));
        }
        let rest = &bytes[CONTAINER_MAGIC.len()..];
        let version = u32::from_le_bytes(rest[..4].try_into().unwrap());
        if version != CONTAINER_VERSION {
            return Err(DiagnoserError::BadContainer(format!("unsupported version {version}")));
        }
        serde_json::from_slice(&rest[4..]).map_err(|e| DiagnoserError::BadContainer(e.to_string()))
    }
}

const CONTAINER_MAGIC: &[u8; 8] = b"IDPDIAG\0";
const CONTAINER_VERSION: u32 = 1;

/// JSON-friendly representation of the transition map (tuple keys are not
/// valid JSON object keys).
mod transition_map {
    use super::BTreeMap;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<(usize, String), usize>,
        serializer: S,
    ) -> Result<S::Ok, S::Error> {
        let entries: Vec<(usize, &str, usize)> =
            map.iter().map(|((s, e), d)| (*s, e.as_str(), *d)).collect();
        entries.serialize(serializer)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        deserializer: D,
    ) -> Result<BTreeMap<(usize, String), usize>, D::Error> {
        let entries: Vec<(usize, String, usize)> = Vec::deserialize(deserializer)?;
        Ok(entries.into_iter().map(|(s, e, d)| ((s, e), d)).collect())
    }
}

/// On-line tracker over a built diagnoser. Freezes on an unknown-mode signal.
#[derive(Debug, Clone)]
pub struct Tracker<'a> {
    diagnoser: &'a Diagnoser,
    current: usize,
    frozen: bool,
}

impl<'a> Tracker<'a> {
    pub fn new(diagnoser: &'a Diagnoser) -> Self {
        Tracker { diagnoser, current: diagnoser.initial, frozen: false }
    }

    pub fn current_state(&self) -> usize {
        self.current
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Marks the tracker as lost (e.g. on unknown-signature evidence).
    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn diagnosis(&self, priors: Option<&BTreeMap<Hypothesis, f64>>) -> DiagnosisVector {
        self.diagnoser.decorate(self.current, priors)
    }

    /// Advances on an observable or signature event. On an undefined event the
    /// tracker freezes in place and reports unknown mode.
    pub fn step(&mut self, event: &str) -> Result<DiagnosisVector, DiagnoserError> {
        if !self.diagnoser.alphabet.contains(event) {
            self.frozen = true;
            return Err(DiagnoserError::UnknownEvent(event.to_string()));
        }
        if self.frozen {
            return Err(DiagnoserError::UnknownMode { event: event.to_string() });
        }
        match self.diagnoser.transitions.get(&(self.current, event.to_string())) {
            Some(next) => {
                self.current = *next;
                Ok(self.diagnosis(None))
            }
            None => {
                self.frozen = true;
                Err(DiagnoserError::UnknownMode { event: event.to_string() })
            }
        }
    }
}
