//! End-to-end pipeline integration tests: bundled artifacts, replay parity,
//! tracking loss, and the compute-time hypothesis report.

mod common;

use interdp_core::behavior::build_behavior_automaton;
use interdp_core::diagnoser::{build_diagnoser, Diagnoser, DEFAULT_STATE_CAP};
use interdp_core::interdp::{check_hypothesis1, run, trace_to_csv, InterdpError, RunConfig};
use interdp_core::model::{load_model, save_model, HybridModel};
use interdp_core::parity::{FilterConfig, ResidualBank, DEFAULT_STIMULUS_SEED};
use interdp_core::sim::{
    load_scenario, observations_from_csv, observations_to_csv, simulate, Scenario,
};
use interdp_core::testmodels;

fn models_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn artifacts(model: &HybridModel, scenario: &Scenario) -> (ResidualBank, Diagnoser) {
    let filter = FilterConfig { threshold: scenario.epsilon, debounce: scenario.debounce };
    let bank = ResidualBank::build(model, filter, DEFAULT_STIMULUS_SEED).unwrap();
    let ba = build_behavior_automaton(model, &bank);
    let diag = build_diagnoser(&ba, &model.fingerprint(), DEFAULT_STATE_CAP).unwrap();
    (bank, diag)
}

#[test]
fn bundled_tutorial_model_matches_builtin() {
    let bundled = load_model(models_dir().join("tutorial.json")).unwrap();
    let builtin = testmodels::fig3();
    assert_eq!(bundled.validate(), Vec::<String>::new());
    assert_eq!(bundled.fingerprint(), builtin.fingerprint());
    assert_eq!(save_model(&bundled), save_model(&builtin));
}

#[test]
fn bundled_scenarios_parse() {
    for name in ["scenario_f1.json", "scenario_nominal.json"] {
        let scenario = load_scenario(models_dir().join(name)).unwrap();
        assert!(scenario.duration > 0.0, "{name}");
    }
}

#[test]
fn replay_through_csv_matches_direct_run() {
    let model = testmodels::fig3();
    let scenario = load_scenario(models_dir().join("scenario_f1.json")).unwrap();
    let (bank, diag) = artifacts(&model, &scenario);
    let (obs, _) = simulate(&model, &scenario).unwrap();

    let csv = observations_to_csv(&model, &obs);
    let replayed = observations_from_csv(&model, &csv).unwrap();

    let direct = run(&model, &diag, &bank, &obs, RunConfig::default()).unwrap();
    let via_csv = run(&model, &diag, &bank, &replayed, RunConfig::default()).unwrap();
    assert_eq!(
        interdp_core::interdp::strip_compute_time(&trace_to_csv(&direct)),
        interdp_core::interdp::strip_compute_time(&trace_to_csv(&via_csv)),
    );
}

#[test]
fn corrupted_outputs_trigger_unknown_mode_and_stale_outputs() {
    let model = testmodels::fig3();
    let scenario = load_scenario(models_dir().join("scenario_nominal.json")).unwrap();
    let (bank, diag) = artifacts(&model, &scenario);
    let (mut obs, _) = simulate(&model, &scenario).unwrap();
    // A constant sensor offset from t = 20 on matches no mode signature.
    for record in obs.iter_mut().filter(|r| r.t >= 20.0) {
        record.y[0] += 50.0;
        record.y[1] -= 50.0;
    }
    let outputs = run(&model, &diag, &bank, &obs, RunConfig::default()).unwrap();
    let lost = outputs.iter().position(|o| o.unknown_mode).expect("tracking never lost");
    assert!(outputs[lost].t >= 20.0);
    for out in &outputs[lost..] {
        assert!(out.stale || out.unknown_mode, "output at t={} not flagged", out.t);
    }
    // The last consistent diagnosis is retained, not discarded.
    assert!(!outputs[lost].delta.is_empty());
}

#[test]
fn emit_every_tick_covers_all_observations() {
    let model = testmodels::fig3();
    let scenario = load_scenario(models_dir().join("scenario_nominal.json")).unwrap();
    let (bank, diag) = artifacts(&model, &scenario);
    let (obs, _) = simulate(&model, &scenario).unwrap();
    let outputs = run(&model, &diag, &bank, &obs, RunConfig { emit_every_tick: true }).unwrap();
    // One initial emission before the stream plus one per observation tick.
    assert_eq!(outputs.len(), obs.len() + 1);
    let sparse = run(&model, &diag, &bank, &obs, RunConfig::default()).unwrap();
    assert!(sparse.len() < outputs.len());
}

#[test]
fn hypothesis1_report_depends_on_time_scale() {
    let model = testmodels::fig3();
    let scenario = load_scenario(models_dir().join("scenario_f1.json")).unwrap();
    let (bank, diag) = artifacts(&model, &scenario);
    let (obs, _) = simulate(&model, &scenario).unwrap();
    let outputs = run(&model, &diag, &bank, &obs, RunConfig::default()).unwrap();

    // Generous budget: one model second per wall second.
    assert!(check_hypothesis1(&outputs, 1.0).violations.is_empty());
    // Absurd budget: the whole 42-tick interval maps to ~4e-11 wall seconds.
    let report = check_hypothesis1(&outputs, 1e12);
    assert!(!report.violations.is_empty());
    for v in &report.violations {
        assert!(v.compute_time > v.budget);
    }
}

#[test]
fn artifacts_from_modified_model_are_rejected() {
    let model = testmodels::fig3();
    let scenario = load_scenario(models_dir().join("scenario_nominal.json")).unwrap();
    let (bank, _) = artifacts(&model, &scenario);
    let (obs, _) = simulate(&model, &scenario).unwrap();

    let mut other = testmodels::fig3();
    other.p_max = 0.4;
    let (_, other_diag) = artifacts(&other, &scenario);
    let err = run(&model, &other_diag, &bank, &obs, RunConfig::default()).unwrap_err();
    assert!(matches!(err, InterdpError::FingerprintMismatch { .. }));
}

#[test]
fn fault_certainty_is_monotone_over_a_run() {
    let model = testmodels::fig3();
    let scenario = load_scenario(models_dir().join("scenario_f1.json")).unwrap();
    let (bank, diag) = artifacts(&model, &scenario);
    let (obs, _) = simulate(&model, &scenario).unwrap();
    let outputs = run(&model, &diag, &bank, &obs, RunConfig { emit_every_tick: true }).unwrap();
    let mut certain = false;
    for out in &outputs {
        let now = out.delta.fault_certain("f1");
        assert!(!certain || now, "certainty of f1 lost at t={}", out.t);
        certain = now;
    }
    assert!(certain, "f1 never became certain");
}
