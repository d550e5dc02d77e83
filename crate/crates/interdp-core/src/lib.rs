//! Interleaved diagnosis and prognosis of hybrid systems.
//!
//! The pipeline: a hybrid-automaton [`model`] with per-mode LTI dynamics and
//! Weibull aging laws; [`parity`]-space residual generators and mode
//! signatures; a [`behavior`] automaton enriched with signature events; a
//! subset-construction [`diagnoser`] tracked on-line; a Weibull [`prognoser`]
//! with gamma-shift aging memory; the [`interdp`] loop coupling them; and a
//! ground-truth [`sim`]ulator.

pub mod behavior;
pub mod diagnoser;
pub mod interdp;
pub mod model;
pub mod parity;
pub mod prognoser;
pub mod sim;
pub mod testmodels;

pub use behavior::{build_behavior_automaton, BehaviorAutomaton, SignatureMatcher};
pub use diagnoser::{build_diagnoser, Diagnoser, DiagnosisVector, Hypothesis, Tracker};
pub use model::{load_model, save_model, HybridModel, ModelError, WeibullLaw};
pub use parity::{BooleanSignature, FilterConfig, ResidualBank};
pub use prognoser::{
    predict_fault_date, propagate_sequence, rul, shift_gamma, update_on_diagnosis, weibull_cdf,
    weibull_pdf, AgingState, PrognosisSequence, PrognosisVector,
};
pub use sim::{simulate, ObservationRecord, Scenario};
