//! Enriched hybrid automaton model: modes with discrete-time LTI dynamics,
//! events, transitions, per-mode Weibull aging laws and the system fault tree.
//!
//! The model is immutable after loading and is the single source of truth for
//! every other module.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("io error reading model: {0}")]
    Io(#[from] std::io::Error),
    #[error("model parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("model validation failed:\n{}", .0.join("\n"))]
    Invalid(Vec<String>),
}

/// A discrete event of the underlying DES.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventDef {
    pub id: String,
    pub observable: bool,
    #[serde(default)]
    pub fault: bool,
}

/// Discrete-time LTI dynamics x_{k+1} = A x_k + B u_k, y_k = C x_k + D u_k.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDynamics {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl LinearDynamics {
    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }
    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }
    pub fn n_y(&self) -> usize {
        self.c.nrows()
    }

    fn dim_violations(&self, mode: &str, out: &mut Vec<String>) {
        if self.a.nrows() != self.a.ncols() {
            out.push(format!("mode {mode}: A is not square"));
        }
        if self.b.nrows() != self.a.nrows() {
            out.push(format!("mode {mode}: B row count differs from A"));
        }
        if self.c.ncols() != self.a.ncols() {
            out.push(format!("mode {mode}: C column count differs from A"));
        }
        if self.d.nrows() != self.c.nrows() || self.d.ncols() != self.b.ncols() {
            out.push(format!("mode {mode}: D dimensions inconsistent with B/C"));
        }
        if self.c.nrows() == 0 {
            out.push(format!("mode {mode}: at least one output is required (n_y >= 1)"));
        }
    }
}

/// Three-parameter Weibull law: shape beta, scale eta, location gamma.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeibullLaw {
    pub beta: f64,
    pub eta: f64,
    #[serde(default)]
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeKind {
    Nominal,
    Faulty,
    Failure,
}

/// A behavioral mode: dynamics plus the aging laws of every fault that can
/// still occur from this mode. Faults already contained in the mode are listed
/// in `faults` and carry no law.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeDef {
    pub id: String,
    pub kind: ModeKind,
    pub faults: BTreeSet<String>,
    pub dynamics: LinearDynamics,
    pub aging: BTreeMap<String, WeibullLaw>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionDef {
    pub source: String,
    pub event: String,
    pub target: String,
}

/// AND/OR tree over fault events describing when the system has failed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase")]
pub enum FaultTree {
    Fault(String),
    And(Vec<FaultTree>),
    Or(Vec<FaultTree>),
}

impl FaultTree {
    /// Evaluates the tree against a set of occurred faults.
    pub fn eval(&self, occurred: &BTreeSet<String>) -> bool {
        match self {
            FaultTree::Fault(f) => occurred.contains(f),
            FaultTree::And(children) => children.iter().all(|c| c.eval(occurred)),
            FaultTree::Or(children) => children.iter().any(|c| c.eval(occurred)),
        }
    }

    pub fn leaves(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            FaultTree::Fault(f) => {
                out.insert(f.as_str());
            }
            FaultTree::And(children) | FaultTree::Or(children) => {
                for c in children {
                    c.collect_leaves(out);
                }
            }
        }
    }

    fn is_empty(&self) -> bool {
        match self {
            FaultTree::Fault(_) => false,
            FaultTree::And(c) | FaultTree::Or(c) => c.iter().all(|t| t.is_empty()),
        }
    }
}

/// The enriched hybrid automaton.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridModel {
    pub events: Vec<EventDef>,
    pub modes: Vec<ModeDef>,
    pub transitions: Vec<TransitionDef>,
    pub initial_mode: String,
    pub initial_state: DVector<f64>,
    pub failure_tree: FaultTree,
    pub sampling_period: f64,
    pub p_max: f64,
    /// Parity window length override; defaults to n_x when absent.
    pub window_length: Option<usize>,
}

impl HybridModel {
    pub fn mode(&self, id: &str) -> Option<&ModeDef> {
        self.modes.iter().find(|m| m.id == id)
    }

    pub fn mode_index(&self, id: &str) -> Option<usize> {
        self.modes.iter().position(|m| m.id == id)
    }

    pub fn event(&self, id: &str) -> Option<&EventDef> {
        self.events.iter().find(|e| e.id == id)
    }

    /// Target of the transition from `source` on `event`, if defined.
    pub fn transition(&self, source: &str, event: &str) -> Option<&str> {
        self.transitions
            .iter()
            .find(|t| t.source == source && t.event == event)
            .map(|t| t.target.as_str())
    }

    /// Declared fault events, in declaration order.
    pub fn fault_events(&self) -> Vec<&str> {
        self.events.iter().filter(|e| e.fault).map(|e| e.id.as_str()).collect()
    }

    pub fn n_x(&self) -> usize {
        self.modes.first().map_or(0, |m| m.dynamics.n_x())
    }
    pub fn n_u(&self) -> usize {
        self.modes.first().map_or(0, |m| m.dynamics.n_u())
    }
    pub fn n_y(&self) -> usize {
        self.modes.first().map_or(0, |m| m.dynamics.n_y())
    }

    /// Effective parity window length.
    pub fn window(&self) -> usize {
        self.window_length.unwrap_or_else(|| self.n_x())
    }

    /// Stable content hash used to check that diagnoser/residual-bank
    /// artifacts were built from the same model.
    pub fn fingerprint(&self) -> String {
        let raw = schema::RawModel::from_model(self);
        let json = serde_json::to_string(&raw).expect("model serialization cannot fail");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        hex::encode(hasher.finalize())
    }

    /// Checks every structural invariant; returns one message per violation.
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();

        // Event set.
        let mut seen = HashSet::new();
        for e in &self.events {
            if !seen.insert(e.id.as_str()) {
                v.push(format!("event {}: duplicate id", e.id));
            }
            if e.fault && e.observable {
                v.push(format!("event {}: fault must be unobservable", e.id));
            }
        }
        let fault_set: BTreeSet<&str> = self.fault_events().into_iter().collect();

        // Modes.
        let mut mode_ids = HashSet::new();
        for m in &self.modes {
            if !mode_ids.insert(m.id.as_str()) {
                v.push(format!("mode {}: duplicate id", m.id));
            }
            m.dynamics.dim_violations(&m.id, &mut v);
            if m.kind == ModeKind::Nominal && !m.faults.is_empty() {
                v.push(format!("mode {}: nominal mode must contain no faults", m.id));
            }
            if m.kind == ModeKind::Failure && !self.failure_tree.eval(&m.faults) {
                v.push(format!(
                    "mode {}: failure mode whose fault set does not satisfy the fault tree",
                    m.id
                ));
            }
            for f in &m.faults {
                if !fault_set.contains(f.as_str()) {
                    v.push(format!("mode {}: contained fault {f} is not a declared fault event", m.id));
                }
            }
            // The aging vector covers exactly the faults that can still occur.
            let expected: BTreeSet<&str> = fault_set
                .iter()
                .copied()
                .filter(|f| !m.faults.contains(*f))
                .collect();
            let actual: BTreeSet<&str> = m.aging.keys().map(String::as_str).collect();
            for missing in expected.difference(&actual) {
                v.push(format!("mode {}: missing aging law for pending fault {missing}", m.id));
            }
            for extra in actual.difference(&expected) {
                v.push(format!(
                    "mode {}: aging law for {extra}, which cannot occur from this mode",
                    m.id
                ));
            }
            for (f, law) in &m.aging {
                if !(law.beta > 0.0) || !(law.eta > 0.0) {
                    v.push(format!("mode {}: aging law for {f} needs beta > 0 and eta > 0", m.id));
                }
                if !law.gamma.is_finite() {
                    v.push(format!("mode {}: aging law for {f} has non-finite gamma", m.id));
                }
            }
        }

        // Uniform continuous dimensions (the state carries over across modes).
        if let Some(first) = self.modes.first() {
            let (nx, nu, ny) = (first.dynamics.n_x(), first.dynamics.n_u(), first.dynamics.n_y());
            for m in &self.modes[1..] {
                if m.dynamics.n_x() != nx || m.dynamics.n_u() != nu || m.dynamics.n_y() != ny {
                    v.push(format!(
                        "mode {}: continuous dimensions differ from mode {}",
                        m.id, first.id
                    ));
                }
            }
        }

        // Transitions.
        let mut pairs = HashMap::new();
        for t in &self.transitions {
            let source = match self.mode(&t.source) {
                Some(m) => m,
                None => {
                    v.push(format!("transition {}--{}-->{}: unknown source mode", t.source, t.event, t.target));
                    continue;
                }
            };
            let target = match self.mode(&t.target) {
                Some(m) => m,
                None => {
                    v.push(format!("transition {}--{}-->{}: unknown target mode", t.source, t.event, t.target));
                    continue;
                }
            };
            let event = match self.event(&t.event) {
                Some(e) => e,
                None => {
                    v.push(format!("transition {}--{}-->{}: unknown event", t.source, t.event, t.target));
                    continue;
                }
            };
            if let Some(prev) = pairs.insert((t.source.as_str(), t.event.as_str()), t.target.as_str()) {
                v.push(format!(
                    "T not a partial function at ({}, {}): targets {} and {}",
                    t.source, t.event, prev, t.target
                ));
            }
            if event.fault {
                if source.kind == ModeKind::Failure {
                    v.push(format!(
                        "unidirectionality violated at {}: fault {} leaves a failure mode",
                        t.source, t.event
                    ));
                }
                if !target.faults.contains(&t.event) {
                    v.push(format!(
                        "transition {}--{}-->{}: target does not contain the fault",
                        t.source, t.event, t.target
                    ));
                }
                if !target.faults.is_superset(&source.faults) || target.faults.len() <= source.faults.len() {
                    v.push(format!(
                        "unidirectionality violated at {}--{}-->{}: target fault set does not strictly grow",
                        t.source, t.event, t.target
                    ));
                }
            } else if source.faults != target.faults {
                v.push(format!(
                    "transition {}--{}-->{}: non-fault event changes the fault set",
                    t.source, t.event, t.target
                ));
            }
        }

        // Every pending fault with a law must have a transition out of the mode.
        for m in &self.modes {
            for f in m.aging.keys() {
                if self.transition(&m.id, f).is_none() {
                    v.push(format!(
                        "mode {}: fault {f} has an aging law but no transition",
                        m.id
                    ));
                }
            }
        }

        // Initial condition.
        match self.mode(&self.initial_mode) {
            None => v.push(format!("initial mode {} does not exist", self.initial_mode)),
            Some(m) => {
                if m.kind != ModeKind::Nominal {
                    v.push(format!("initial mode {} must be nominal", self.initial_mode));
                }
                if self.initial_state.len() != m.dynamics.n_x() {
                    v.push(format!(
                        "initial state has dimension {}, expected {}",
                        self.initial_state.len(),
                        m.dynamics.n_x()
                    ));
                }
                for (f, law) in &m.aging {
                    if law.gamma != 0.0 {
                        v.push(format!(
                            "initial mode {}: aging law for {f} must have gamma = 0",
                            self.initial_mode
                        ));
                    }
                }
            }
        }

        // Fault tree.
        if self.failure_tree.is_empty() {
            v.push("failure tree is empty".to_string());
        }
        for leaf in self.failure_tree.leaves() {
            if !fault_set.contains(leaf) {
                v.push(format!("failure tree leaf {leaf} is not a declared fault event"));
            }
        }

        // Scalars.
        if !(self.sampling_period > 0.0) {
            v.push("sampling_period must be > 0".to_string());
        }
        if !(self.p_max > 0.0 && self.p_max < 1.0) {
            v.push("p_max must lie in (0, 1)".to_string());
        }
        if let Some(0) = self.window_length {
            // window 0 is legal (hardware redundancy), nothing to flag
        }

        v
    }

    /// Projection onto the underlying DES, discarding continuous and aging data.
    pub fn underlying_des(&self) -> Des {
        Des {
            states: self.modes.iter().map(|m| m.id.clone()).collect(),
            events: self.events.clone(),
            transitions: self.transitions.clone(),
            initial: self.initial_mode.clone(),
        }
    }
}

/// The discrete part (Q, Sigma, T, q0) of the hybrid automaton.
#[derive(Debug, Clone, PartialEq)]
pub struct Des {
    pub states: Vec<String>,
    pub events: Vec<EventDef>,
    pub transitions: Vec<TransitionDef>,
    pub initial: String,
}

/// Loads and validates a model file.
pub fn load_model(path: impl AsRef<Path>) -> Result<HybridModel, ModelError> {
    let text = std::fs::read_to_string(path)?;
    load_model_str(&text)
}

pub fn load_model_str(text: &str) -> Result<HybridModel, ModelError> {
    let raw: schema::RawModel = serde_json::from_str(text)?;
    let model = raw.into_model()?;
    let violations = model.validate();
    if violations.is_empty() {
        Ok(model)
    } else {
        Err(ModelError::Invalid(violations))
    }
}

/// Serializes a model back to the on-disk JSON schema.
pub fn save_model(model: &HybridModel) -> String {
    let raw = schema::RawModel::from_model(model);
    serde_json::to_string_pretty(&raw).expect("model serialization cannot fail")
}

/// On-disk JSON representation. Matrices are row-major nested arrays; unknown
/// keys are rejected.
mod schema {
    use super::*;

    #[derive(Debug, Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct RawModel {
        pub events: Vec<EventDef>,
        pub modes: Vec<RawMode>,
        pub transitions: Vec<TransitionDef>,
        pub initial: RawInitial,
        pub failure_tree: FaultTree,
        pub sampling_period: f64,
        pub p_max: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub window_length: Option<usize>,
    }

    #[derive(Debug, Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct RawInitial {
        pub mode: String,
        pub state: Vec<f64>,
    }

    #[derive(Debug, Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct RawMode {
        pub id: String,
        pub kind: ModeKind,
        #[serde(default)]
        pub faults: BTreeSet<String>,
        pub dynamics: RawDynamics,
        #[serde(default)]
        pub aging: BTreeMap<String, WeibullLaw>,
    }

    #[derive(Debug, Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct RawDynamics {
        pub a: Vec<Vec<f64>>,
        pub b: Vec<Vec<f64>>,
        pub c: Vec<Vec<f64>>,
        pub d: Vec<Vec<f64>>,
    }

    fn to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, ModelError> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        for r in rows {
            if r.len() != ncols {
                return Err(ModelError::Invalid(vec![format!("{what}: ragged matrix rows")]));
            }
        }
        Ok(DMatrix::from_row_iterator(nrows, ncols, rows.iter().flatten().copied()))
    }

    fn from_matrix(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
        (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
            .collect()
    }

    impl RawModel {
        pub fn into_model(self) -> Result<HybridModel, ModelError> {
            let modes = self
                .modes
                .into_iter()
                .map(|m| {
                    Ok(ModeDef {
                        dynamics: LinearDynamics {
                            a: to_matrix(&m.dynamics.a, &format!("mode {} A", m.id))?,
                            b: to_matrix(&m.dynamics.b, &format!("mode {} B", m.id))?,
                            c: to_matrix(&m.dynamics.c, &format!("mode {} C", m.id))?,
                            d: to_matrix(&m.dynamics.d, &format!("mode {} D", m.id))?,
                        },
                        id: m.id,
                        kind: m.kind,
                        faults: m.faults,
                        aging: m.aging,
                    })
                })
                .collect::<Result<Vec<_>, ModelError>>()?;
            Ok(HybridModel {
                events: self.events,
                modes,
                transitions: self.transitions,
                initial_mode: self.initial.mode,
                initial_state: DVector::from_vec(self.initial.state),
                failure_tree: self.failure_tree,
                sampling_period: self.sampling_period,
                p_max: self.p_max,
                window_length: self.window_length,
            })
        }

        pub fn from_model(model: &HybridModel) -> RawModel {
            RawModel {
                events: model.events.clone(),
                modes: model
                    .modes
                    .iter()
                    .map(|m| RawMode {
                        id: m.id.clone(),
                        kind: m.kind,
                        faults: m.faults.clone(),
                        dynamics: RawDynamics {
                            a: from_matrix(&m.dynamics.a),
                            b: from_matrix(&m.dynamics.b),
                            c: from_matrix(&m.dynamics.c),
                            d: from_matrix(&m.dynamics.d),
                        },
                        aging: m.aging.clone(),
                    })
                    .collect(),
                transitions: model.transitions.clone(),
                initial: RawInitial {
                    mode: model.initial_mode.clone(),
                    state: model.initial_state.iter().copied().collect(),
                },
                failure_tree: model.failure_tree.clone(),
                sampling_period: model.sampling_period,
                p_max: model.p_max,
                window_length: model.window_length,
            }
        }
    }
}
