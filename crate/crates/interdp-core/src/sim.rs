//! Ground-truth plant simulator: per-mode discrete-time LTI integration,
//! scenario-scheduled events and fault injections, optional measurement noise,
//! observation stream and ground-truth log.

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::HybridModel;
use crate::parity::prbs_inputs;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("io error reading scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("scenario invalid: {0}")]
    Invalid(String),
    #[error("injected event {event} at t={time} has no transition from mode {mode}")]
    NoTransition { event: String, time: f64, mode: String },
}

/// Deterministic input signal generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase", tag = "kind")]
pub enum InputSignal {
    Constant { values: Vec<f64> },
    Step { values: Vec<f64>, at: f64 },
    Prbs { seed: u64, amplitude: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectedEvent {
    pub time: f64,
    pub event: String,
}

/// A simulation scenario. `noise_std` is per-sensor (empty means noise-free);
/// `real_time_scale` is model-seconds per wall-second for Hypothesis-1 checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub duration: f64,
    pub input: InputSignal,
    #[serde(default)]
    pub events: Vec<InjectedEvent>,
    #[serde(default)]
    pub noise_std: Vec<f64>,
    #[serde(default = "default_noise_seed")]
    pub noise_seed: u64,
    #[serde(default = "default_scale")]
    pub real_time_scale: f64,
    /// Residual filter threshold used by the run pipeline.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Residual filter debounce count used by the run pipeline.
    #[serde(default = "default_debounce")]
    pub debounce: usize,
}

fn default_noise_seed() -> u64 {
    0
}
fn default_scale() -> f64 {
    1.0
}
fn default_epsilon() -> f64 {
    1e-6
}
fn default_debounce() -> usize {
    1
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, SimError> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// One sample of the observation stream.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationRecord {
    pub t: f64,
    pub u: DVector<f64>,
    pub y: DVector<f64>,
    /// Observable event ids that occurred at this tick.
    pub discrete_events: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthTick {
    pub t: f64,
    pub mode: String,
    pub state: DVector<f64>,
    pub faults: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub ticks: Vec<GroundTruthTick>,
}

fn input_sequence(signal: &InputSignal, n_u: usize, steps: usize, dt: f64) -> Result<Vec<DVector<f64>>, SimError> {
    match signal {
        InputSignal::Constant { values } => {
            if values.len() != n_u {
                return Err(SimError::Invalid(format!(
                    "constant input has {} channels, model expects {}",
                    values.len(),
                    n_u
                )));
            }
            Ok(vec![DVector::from_vec(values.clone()); steps])
        }
        InputSignal::Step { values, at } => {
            if values.len() != n_u {
                return Err(SimError::Invalid(format!(
                    "step input has {} channels, model expects {}",
                    values.len(),
                    n_u
                )));
            }
            Ok((0..steps)
                .map(|k| {
                    if (k as f64) * dt >= *at {
                        DVector::from_vec(values.clone())
                    } else {
                        DVector::zeros(n_u)
                    }
                })
                .collect())
        }
        InputSignal::Prbs { seed, amplitude } => Ok(prbs_inputs(n_u, steps, *seed)
            .into_iter()
            .map(|u| u * *amplitude)
            .collect()),
    }
}

/// Simulates the plant under a scenario. The continuous state carries over
/// across mode switches; injected events fire at the first tick at or after
/// their scheduled time, before the tick's output is produced.
pub fn simulate(model: &HybridModel, scenario: &Scenario) -> Result<(Vec<ObservationRecord>, GroundTruth), SimError> {
    if scenario.duration < 0.0 {
        return Err(SimError::Invalid("duration must be non-negative".into()));
    }
    if !scenario.noise_std.is_empty() && scenario.noise_std.len() != model.n_y() {
        return Err(SimError::Invalid(format!(
            "noise_std has {} entries, model has {} sensors",
            scenario.noise_std.len(),
            model.n_y()
        )));
    }
    for e in &scenario.events {
        if model.event(&e.event).is_none() {
            return Err(SimError::Invalid(format!("injected event {} is not declared", e.event)));
        }
    }

    let dt = model.sampling_period;
    let steps = (scenario.duration / dt).floor() as usize + 1;
    let inputs = input_sequence(&scenario.input, model.n_u(), steps, dt)?;

    let mut schedule: Vec<&InjectedEvent> = scenario.events.iter().collect();
    schedule.sort_by(|a, b| a.time.partial_cmp(&b.time).unwrap());
    let mut next_event = 0usize;

    let mut rng = ChaCha8Rng::seed_from_u64(scenario.noise_seed);
    let noise = |rng: &mut ChaCha8Rng, ny: usize, std: &[f64]| -> DVector<f64> {
        use rand::Rng;
        if std.is_empty() {
            DVector::zeros(ny)
        } else {
            DVector::from_fn(ny, |i, _| {
                // Box-Muller keeps us off rand_distr for one distribution.
                let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                let u2: f64 = rng.gen::<f64>();
                std[i] * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            })
        }
    };

    let mut mode = model.mode(&model.initial_mode).expect("validated model");
    let mut x = model.initial_state.clone();
    let mut observations = Vec::with_capacity(steps);
    let mut truth = GroundTruth::default();

    for (k, u) in inputs.iter().enumerate() {
        let t = k as f64 * dt;

        // Fire every event scheduled up to and including this tick.
        let mut discrete_events = Vec::new();
        while next_event < schedule.len() && schedule[next_event].time <= t {
            let inj = schedule[next_event];
            next_event += 1;
            let target = model.transition(&mode.id, &inj.event).ok_or_else(|| SimError::NoTransition {
                event: inj.event.clone(),
                time: inj.time,
                mode: mode.id.clone(),
            })?;
            mode = model.mode(target).expect("validated model");
            if model.event(&inj.event).map(|e| e.observable).unwrap_or(false) {
                discrete_events.push(inj.event.clone());
            }
        }

        let y = &mode.dynamics.c * &x + &mode.dynamics.d * u + noise(&mut rng, model.n_y(), &scenario.noise_std);
        observations.push(ObservationRecord { t, u: u.clone(), y, discrete_events });
        truth.ticks.push(GroundTruthTick {
            t,
            mode: mode.id.clone(),
            state: x.clone(),
            faults: mode.faults.clone(),
        });

        x = &mode.dynamics.a * &x + &mode.dynamics.b * u;
    }

    Ok((observations, truth))
}

/// CSV export of an observation stream: t, u..., y..., events (';'-joined).
pub fn observations_to_csv(model: &HybridModel, observations: &[ObservationRecord]) -> String {
    let mut out = String::from("t");
    for i in 0..model.n_u() {
        out.push_str(&format!(",u{i}"));
    }
    for i in 0..model.n_y() {
        out.push_str(&format!(",y{i}"));
    }
    out.push_str(",events\n");
    for rec in observations {
        out.push_str(&format!("{}", rec.t));
        for v in rec.u.iter().chain(rec.y.iter()) {
            out.push_str(&format!(",{v}"));
        }
        out.push(',');
        out.push_str(&rec.discrete_events.join(";"));
        out.push('\n');
    }
    out
}

/// Parses an observation CSV produced by [`observations_to_csv`].
pub fn observations_from_csv(model: &HybridModel, text: &str) -> Result<Vec<ObservationRecord>, SimError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| SimError::Invalid("empty csv".into()))?;
    let expected_cols = 2 + model.n_u() + model.n_y();
    if header.split(',').count() != expected_cols {
        return Err(SimError::Invalid("csv header does not match the model".into()));
    }
    let mut out = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected_cols {
            return Err(SimError::Invalid(format!("line {}: wrong column count", lineno + 2)));
        }
        let parse = |s: &str| -> Result<f64, SimError> {
            s.parse().map_err(|_| SimError::Invalid(format!("line {}: bad number {s}", lineno + 2)))
        };
        let t = parse(fields[0])?;
        let u = DVector::from_iterator(
            model.n_u(),
            fields[1..1 + model.n_u()].iter().map(|s| parse(s)).collect::<Result<Vec<_>, _>>()?,
        );
        let y = DVector::from_iterator(
            model.n_y(),
            fields[1 + model.n_u()..1 + model.n_u() + model.n_y()]
                .iter()
                .map(|s| parse(s))
                .collect::<Result<Vec<_>, _>>()?,
        );
        let events_field = fields[expected_cols - 1].trim();
        let discrete_events = if events_field.is_empty() {
            Vec::new()
        } else {
            events_field.split(';').map(str::to_string).collect()
        };
        out.push(ObservationRecord { t, u, y, discrete_events });
    }
    Ok(out)
}
