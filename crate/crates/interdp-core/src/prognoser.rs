//! Weibull-based prognosis: per-fault aging state, fault-date prediction,
//! gamma-shift memory across behavioral modes, greedy propagation of the
//! predicted fault sequence and RUL through the fault tree.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnoser::{DiagnosisVector, FaultLabel, Hypothesis};
use crate::model::{FaultTree, HybridModel, WeibullLaw};

#[derive(Debug, Error)]
pub enum PrognoserError {
    #[error("invalid Weibull parameters: beta={beta}, eta={eta}")]
    Domain { beta: f64, eta: f64 },
    #[error("accumulated probability {p_start} already exceeds p_max={p_max}")]
    AlreadyExceeded { p_start: f64, p_max: f64 },
    #[error("mode {mode} has no aging law for pending fault {fault}")]
    MissingLaw { mode: String, fault: String },
    #[error("mode {mode} has no transition for fault {fault}")]
    MissingTransition { mode: String, fault: String },
    #[error("unknown mode {0}")]
    UnknownMode(String),
}

fn check_law(law: &WeibullLaw) -> Result<(), PrognoserError> {
    if law.beta > 0.0 && law.eta > 0.0 {
        Ok(())
    } else {
        Err(PrognoserError::Domain { beta: law.beta, eta: law.eta })
    }
}

/// Weibull probability density. Zero for t < gamma.
pub fn weibull_pdf(law: &WeibullLaw, t: f64) -> Result<f64, PrognoserError> {
    check_law(law)?;
    if t < law.gamma {
        return Ok(0.0);
    }
    let z = (t - law.gamma) / law.eta;
    if z == 0.0 {
        // beta = 1 gives the exponential rate 1/eta at the origin; beta > 1
        // starts at zero; beta < 1 diverges, callers use the CDF there.
        return Ok(match law.beta {
            b if b > 1.0 => 0.0,
            b if b == 1.0 => 1.0 / law.eta,
            _ => f64::INFINITY,
        });
    }
    Ok(law.beta / law.eta * z.powf(law.beta - 1.0) * (-z.powf(law.beta)).exp())
}

/// Closed-form Weibull CDF. Zero for t <= gamma.
pub fn weibull_cdf(law: &WeibullLaw, t: f64) -> Result<f64, PrognoserError> {
    check_law(law)?;
    if t <= law.gamma {
        return Ok(0.0);
    }
    let z = (t - law.gamma) / law.eta;
    Ok(1.0 - (-z.powf(law.beta)).exp())
}

/// Date at which the fault probability reaches `p_max`:
/// d = gamma + eta * (-ln(1 - p_max))^(1/beta). `p_start` is the probability
/// already accumulated (encoded in gamma); it only gates the threshold.
pub fn predict_fault_date(law: &WeibullLaw, p_start: f64, p_max: f64) -> Result<f64, PrognoserError> {
    check_law(law)?;
    if p_start >= p_max {
        return Err(PrognoserError::AlreadyExceeded { p_start, p_max });
    }
    Ok(law.gamma + law.eta * (-(1.0 - p_max).ln()).powf(1.0 / law.beta))
}

/// Relocates a new mode's law so that its CDF at `switch_date` equals the
/// probability already reached: delta = eta_new * (-ln(1-p))^(1/beta_new),
/// gamma_new = switch_date - delta. The gamma of `new_law_base` is ignored.
pub fn shift_gamma(
    reached_p: f64,
    new_law_base: &WeibullLaw,
    switch_date: f64,
) -> Result<WeibullLaw, PrognoserError> {
    check_law(new_law_base)?;
    if !(0.0..1.0).contains(&reached_p) {
        return Err(PrognoserError::Domain { beta: new_law_base.beta, eta: new_law_base.eta });
    }
    let delta = new_law_base.eta * (-(1.0 - reached_p).ln()).powf(1.0 / new_law_base.beta);
    Ok(WeibullLaw {
        beta: new_law_base.beta,
        eta: new_law_base.eta,
        gamma: switch_date - delta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FaultStatus {
    Pending,
    Occurred(f64),
}

/// Aging state of one anticipated fault: its current (gamma-shifted) law and
/// whether it has occurred.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgingEntry {
    pub fault: String,
    pub law: WeibullLaw,
    pub status: FaultStatus,
}

impl AgingEntry {
    pub fn accumulated_p(&self, now: f64) -> Result<f64, PrognoserError> {
        weibull_cdf(&self.law, now)
    }
}

/// Per-fault aging entries, keyed by fault id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgingState(pub BTreeMap<String, AgingEntry>);

impl AgingState {
    /// Initial state: the initial mode's laws (gamma = 0 by model invariant),
    /// every fault pending.
    pub fn initial(model: &HybridModel) -> Self {
        let mode = model.mode(&model.initial_mode).expect("validated model");
        AgingState(
            mode.aging
                .iter()
                .map(|(f, law)| {
                    (f.clone(), AgingEntry { fault: f.clone(), law: *law, status: FaultStatus::Pending })
                })
                .collect(),
        )
    }

    pub fn pending(&self) -> impl Iterator<Item = &AgingEntry> {
        self.0.values().filter(|e| e.status == FaultStatus::Pending)
    }
}

/// Predicted dated fault sequence of one hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrognosisSequence {
    /// (fault id, predicted date), in prediction order; dates non-decreasing.
    pub entries: Vec<(String, f64)>,
}

/// Per-hypothesis sequences and RULs, aligned with a diagnosis vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrognosisVector {
    pub sequences: Vec<PrognosisSequence>,
    pub ruls: Vec<Option<f64>>,
}

/// Greedy minimal-date propagation: dates every pending fault by repeatedly
/// predicting the earliest fault under the current hypothetical mode's laws,
/// following the fault transition, and gamma-shifting the remaining laws into
/// the successor mode. Ties break on the fault id.
pub fn propagate_sequence(
    model: &HybridModel,
    hypothesis_mode: &str,
    now: f64,
    aging: &AgingState,
    p_max: f64,
) -> Result<PrognosisSequence, PrognoserError> {
    let mut mode = model
        .mode(hypothesis_mode)
        .ok_or_else(|| PrognoserError::UnknownMode(hypothesis_mode.to_string()))?;
    let mut time = now;
    let mut laws: BTreeMap<String, WeibullLaw> =
        aging.pending().map(|e| (e.fault.clone(), e.law)).collect();
    let mut entries = Vec::with_capacity(laws.len());

    while !laws.is_empty() {
        // Earliest predicted date wins; dates never move before `time`.
        let mut best: Option<(&String, f64)> = None;
        for (fault, law) in &laws {
            let raw = law.gamma + law.eta * (-(1.0 - p_max).ln()).powf(1.0 / law.beta);
            let date = raw.max(time);
            match best {
                Some((_, d)) if d <= date => {}
                _ => best = Some((fault, date)),
            }
        }
        let (fault, date) = best.expect("laws nonempty");
        let fault = fault.clone();

        let successor_id = model
            .transition(&mode.id, &fault)
            .ok_or_else(|| PrognoserError::MissingTransition { mode: mode.id.clone(), fault: fault.clone() })?;
        let successor = model
            .mode(successor_id)
            .ok_or_else(|| PrognoserError::UnknownMode(successor_id.to_string()))?;

        laws.remove(&fault);
        entries.push((fault, date));

        // Re-base every remaining law onto the successor mode at the
        // predicted switch date.
        let mut shifted = BTreeMap::new();
        for (f, law) in &laws {
            let reached = weibull_cdf(law, date)?;
            let base = successor
                .aging
                .get(f)
                .ok_or_else(|| PrognoserError::MissingLaw { mode: successor.id.clone(), fault: f.clone() })?;
            shifted.insert(f.clone(), shift_gamma(reached, base, date)?);
        }
        laws = shifted;
        mode = successor;
        time = date;
    }

    Ok(PrognosisSequence { entries })
}

/// Remaining useful life: time until the fault tree first evaluates true while
/// walking the predicted sequence in date order. `None` when the anticipated
/// faults cannot satisfy the tree.
pub fn rul(
    sequence: &PrognosisSequence,
    already_occurred: &BTreeSet<String>,
    tree: &FaultTree,
    now: f64,
) -> Option<f64> {
    let mut occurred = already_occurred.clone();
    if tree.eval(&occurred) {
        return Some(0.0);
    }
    for (fault, date) in &sequence.entries {
        occurred.insert(fault.clone());
        if tree.eval(&occurred) {
            return Some(date - now);
        }
    }
    None
}

/// Re-bases the shared aging state onto one diagnosis hypothesis at time
/// `t_k`: label faults become occurred, pending laws are gamma-shifted onto
/// the hypothesis mode.
pub fn rebase_for_hypothesis(
    model: &HybridModel,
    aging: &AgingState,
    hypothesis: &Hypothesis,
    t_k: f64,
) -> Result<AgingState, PrognoserError> {
    let mode = model
        .mode(&hypothesis.mode)
        .ok_or_else(|| PrognoserError::UnknownMode(hypothesis.mode.clone()))?;
    let mut out = BTreeMap::new();
    for (fault, entry) in &aging.0 {
        let mut entry = entry.clone();
        if hypothesis.faults.contains(fault) {
            if entry.status == FaultStatus::Pending {
                entry.status = FaultStatus::Occurred(t_k);
            }
        } else if entry.status == FaultStatus::Pending {
            let reached = weibull_cdf(&entry.law, t_k)?;
            let base = mode.aging.get(fault).ok_or_else(|| PrognoserError::MissingLaw {
                mode: mode.id.clone(),
                fault: fault.clone(),
            })?;
            entry.law = shift_gamma(reached, base, t_k)?;
        }
        out.insert(fault.clone(), entry);
    }
    Ok(AgingState(out))
}

/// Prior probability of each hypothesis given the shared aging state: the
/// product of the accumulated probabilities of its occurred faults times the
/// survival of the others. Used to order the diagnosis vector.
pub fn hypothesis_priors(
    aging: &AgingState,
    delta: &DiagnosisVector,
    t_k: f64,
) -> BTreeMap<Hypothesis, f64> {
    let mut priors = BTreeMap::new();
    for hyp in &delta.0 {
        let mut p = 1.0;
        for (fault, entry) in &aging.0 {
            let pf = match entry.status {
                FaultStatus::Occurred(_) => 1.0,
                FaultStatus::Pending => weibull_cdf(&entry.law, t_k).unwrap_or(0.0),
            };
            p *= if hyp.faults.contains(fault) { pf } else { 1.0 - pf };
        }
        priors.insert(hyp.clone(), p);
    }
    priors
}

/// Per-hypothesis prognosis at a clock tick: re-bases the aging state for each
/// hypothesis, propagates its fault sequence and computes its RUL.
pub fn update_on_diagnosis(
    model: &HybridModel,
    aging: &AgingState,
    delta: &DiagnosisVector,
    t_k: f64,
    p_max: f64,
) -> Result<(Vec<AgingState>, PrognosisVector), PrognoserError> {
    let mut states = Vec::with_capacity(delta.len());
    let mut sequences = Vec::with_capacity(delta.len());
    let mut ruls = Vec::with_capacity(delta.len());
    for hyp in &delta.0 {
        let state = rebase_for_hypothesis(model, aging, hyp, t_k)?;
        let sequence = propagate_sequence(model, &hyp.mode, t_k, &state, p_max)?;
        let life = rul(&sequence, &hyp.faults, &model.failure_tree, t_k);
        states.push(state);
        sequences.push(sequence);
        ruls.push(life);
    }
    Ok((states, PrognosisVector { sequences, ruls }))
}

pub type Label = FaultLabel;
