//! Shared test helpers: an independent quadrature oracle for the Weibull CDF
//! and a randomized hybrid-model generator.

// Each integration-test target compiles its own copy; not all of them use
// every helper.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use interdp_core::model::{
    EventDef, FaultTree, HybridModel, LinearDynamics, ModeDef, ModeKind, TransitionDef, WeibullLaw,
};

/// Adaptive-Simpson quadrature of the Weibull density from gamma to t.
///
/// Uses the substitution s = ((x - gamma)/1)^beta scaled by eta^beta, under
/// which the integrand becomes exp(-s / eta^beta) / eta^beta — smooth for
/// every beta > 0, so the beta < 1 singularity at gamma never appears. The
/// integration itself is honest numerical quadrature and never evaluates the
/// closed-form CDF.
pub fn weibull_cdf_quadrature(law: &WeibullLaw, t: f64) -> f64 {
    if t <= law.gamma {
        return 0.0;
    }
    let scale = law.eta.powf(law.beta);
    // Beyond s = 50 * scale the remaining mass is exp(-50) < 2e-22; clamping
    // keeps the adaptive refinement off astronomically long flat tails.
    let upper = (t - law.gamma).powf(law.beta).min(50.0 * scale);
    let f = |s: f64| (-s / scale).exp() / scale;
    adaptive_simpson(&f, 0.0, upper, 1e-12, 60)
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let c = 0.5 * (a + b);
    let whole = simpson(f, a, b);
    let left = simpson(f, a, c);
    let right = simpson(f, c, b);
    if depth == 0 || (left + right - whole).abs() < 15.0 * tol {
        left + right + (left + right - whole) / 15.0
    } else {
        adaptive_simpson(f, a, c, tol / 2.0, depth - 1) + adaptive_simpson(f, c, b, tol / 2.0, depth - 1)
    }
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    (b - a) / 6.0 * (f(a) + 4.0 * f(c) + f(b))
}

/// Bisection solve of cdf(d) = target on [lo, hi] given a monotone cdf.
pub fn bisect(cdf: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, target: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn dyn2(a: f64, b: f64, c2: f64) -> LinearDynamics {
    LinearDynamics {
        a: DMatrix::from_element(1, 1, a),
        b: DMatrix::from_element(1, 1, b),
        c: DMatrix::from_row_slice(2, 1, &[1.0, c2]),
        d: DMatrix::zeros(2, 1),
    }
}

fn random_law(rng: &mut ChaCha8Rng) -> WeibullLaw {
    WeibullLaw {
        beta: rng.gen_range(0.8..3.0),
        eta: rng.gen_range(60.0..300.0),
        gamma: 0.0,
    }
}

/// Randomized valid hybrid model: `nominals` (1 or 2) nominal modes joined by
/// an a1/a2 action cycle, `faults` (1 or 2) permanent faults enabled from
/// every non-failure mode, plus the failure mode when there are two faults.
/// All mode dynamics are pairwise well-separated scalar systems with two
/// sensors.
pub fn random_model(rng: &mut ChaCha8Rng, nominals: usize, faults: usize) -> HybridModel {
    assert!((1..=2).contains(&nominals) && (1..=2).contains(&faults));
    let n_modes = nominals + faults + if faults == 2 { 1 } else { 0 };

    // Well-separated dynamics parameters, shuffled.
    let mut a_vals: Vec<f64> = (0..n_modes).map(|i| 0.35 + 0.1 * i as f64).collect();
    let mut c_vals: Vec<f64> = (0..n_modes).map(|i| 0.5 + 0.25 * i as f64).collect();
    a_vals.shuffle(rng);
    c_vals.shuffle(rng);
    let mut dynamics: Vec<LinearDynamics> = (0..n_modes)
        .map(|i| dyn2(a_vals[i], rng.gen_range(0.6..1.4), c_vals[i]))
        .collect();

    let fault_ids: Vec<String> = (1..=faults).map(|i| format!("f{i}")).collect();
    let mut events = vec![];
    if nominals == 2 {
        events.push(EventDef { id: "a1".into(), observable: true, fault: false });
        events.push(EventDef { id: "a2".into(), observable: true, fault: false });
    }
    for f in &fault_ids {
        events.push(EventDef { id: f.clone(), observable: false, fault: true });
    }

    let law_table: BTreeMap<String, WeibullLaw> =
        fault_ids.iter().map(|f| (f.clone(), random_law(rng))).collect();
    let laws = |pending: &[&str]| -> BTreeMap<String, WeibullLaw> {
        pending.iter().map(|f| (f.to_string(), law_table[*f])).collect()
    };

    let mut modes = Vec::new();
    let mut take = dynamics.drain(..);
    for i in 0..nominals {
        let pending: Vec<&str> = fault_ids.iter().map(String::as_str).collect();
        modes.push(ModeDef {
            id: format!("q0{}", i + 1),
            kind: ModeKind::Nominal,
            faults: BTreeSet::new(),
            dynamics: take.next().unwrap(),
            aging: laws(&pending),
        });
    }
    for (i, f) in fault_ids.iter().enumerate() {
        let pending: Vec<&str> = fault_ids
            .iter()
            .filter(|g| *g != f)
            .map(String::as_str)
            .collect();
        let kind = if faults == 1 { ModeKind::Failure } else { ModeKind::Faulty };
        modes.push(ModeDef {
            id: format!("qf{}", i + 1),
            kind,
            faults: BTreeSet::from([f.clone()]),
            dynamics: take.next().unwrap(),
            aging: laws(&pending),
        });
    }
    if faults == 2 {
        modes.push(ModeDef {
            id: "qfail".into(),
            kind: ModeKind::Failure,
            faults: fault_ids.iter().cloned().collect(),
            dynamics: take.next().unwrap(),
            aging: BTreeMap::new(),
        });
    }
    drop(take);

    let mut transitions = Vec::new();
    let t = |s: &str, e: &str, d: &str| TransitionDef { source: s.into(), event: e.into(), target: d.into() };
    if nominals == 2 {
        transitions.push(t("q01", "a1", "q02"));
        transitions.push(t("q02", "a2", "q01"));
    }
    for i in 0..nominals {
        for (j, f) in fault_ids.iter().enumerate() {
            transitions.push(t(&format!("q0{}", i + 1), f, &format!("qf{}", j + 1)));
        }
    }
    if faults == 2 {
        transitions.push(t("qf1", "f2", "qfail"));
        transitions.push(t("qf2", "f1", "qfail"));
    }

    let failure_tree = if faults == 1 {
        FaultTree::Fault("f1".into())
    } else {
        FaultTree::And(vec![FaultTree::Fault("f1".into()), FaultTree::Fault("f2".into())])
    };

    let model = HybridModel {
        events,
        modes,
        transitions,
        initial_mode: "q01".into(),
        initial_state: DVector::from_vec(vec![1.0]),
        failure_tree,
        sampling_period: 1.0,
        p_max: 0.5,
        window_length: None,
    };
    assert_eq!(model.validate(), Vec::<String>::new(), "generated model must be valid");
    model
}
