//! Built-in tutorial models used by the test suites and the bundled model
//! files under `models/`.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};

use crate::model::{
    EventDef, FaultTree, HybridModel, LinearDynamics, ModeDef, ModeKind, TransitionDef, WeibullLaw,
};

fn m1(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

fn dyn_siso2(a: f64, b: f64, c2: f64) -> LinearDynamics {
    // One state, one input, two sensors; the second sensor gain is c2.
    LinearDynamics {
        a: m1(a),
        b: m1(b),
        c: DMatrix::from_row_slice(2, 1, &[1.0, c2]),
        d: DMatrix::zeros(2, 1),
    }
}

fn law(beta: f64, eta: f64) -> WeibullLaw {
    WeibullLaw { beta, eta, gamma: 0.0 }
}

/// Two-nominal-mode system with faults f1, f2 and failure = AND(f1, f2).
///
/// Modes: q01, q02 (nominal, actions a1/a2 commute between them), qf1, qf2
/// (one fault each), qf12 (failure). All five modes have distinct dynamics so
/// every mode signature is distinct.
pub fn fig3() -> HybridModel {
    let events = vec![
        EventDef { id: "a1".into(), observable: true, fault: false },
        EventDef { id: "a2".into(), observable: true, fault: false },
        EventDef { id: "f1".into(), observable: false, fault: true },
        EventDef { id: "f2".into(), observable: false, fault: true },
    ];

    let mode = |id: &str, kind: ModeKind, faults: &[&str], dynamics: LinearDynamics, aging: &[(&str, WeibullLaw)]| ModeDef {
        id: id.into(),
        kind,
        faults: faults.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>(),
        dynamics,
        aging: aging
            .iter()
            .map(|(f, l)| (f.to_string(), *l))
            .collect::<BTreeMap<_, _>>(),
    };

    let modes = vec![
        mode(
            "q01",
            ModeKind::Nominal,
            &[],
            dyn_siso2(0.9, 1.0, 1.0),
            &[("f1", law(2.0, 100.0)), ("f2", law(1.5, 150.0))],
        ),
        mode(
            "q02",
            ModeKind::Nominal,
            &[],
            dyn_siso2(0.7, 1.0, 1.0),
            &[("f1", law(2.0, 60.0)), ("f2", law(1.5, 150.0))],
        ),
        mode(
            "qf1",
            ModeKind::Faulty,
            &["f1"],
            dyn_siso2(0.9, 1.0, 0.5),
            &[("f2", law(1.5, 80.0))],
        ),
        mode(
            "qf2",
            ModeKind::Faulty,
            &["f2"],
            dyn_siso2(0.5, 0.8, 1.0),
            &[("f1", law(2.0, 50.0))],
        ),
        mode("qf12", ModeKind::Failure, &["f1", "f2"], dyn_siso2(0.5, 0.8, 0.5), &[]),
    ];

    let t = |source: &str, event: &str, target: &str| TransitionDef {
        source: source.into(),
        event: event.into(),
        target: target.into(),
    };

    HybridModel {
        events,
        modes,
        transitions: vec![
            t("q01", "a1", "q02"),
            t("q02", "a2", "q01"),
            t("q01", "f1", "qf1"),
            t("q02", "f1", "qf1"),
            t("q01", "f2", "qf2"),
            t("q02", "f2", "qf2"),
            t("qf1", "f2", "qf12"),
            t("qf2", "f1", "qf12"),
        ],
        initial_mode: "q01".into(),
        initial_state: DVector::from_vec(vec![1.0]),
        failure_tree: FaultTree::And(vec![
            FaultTree::Fault("f1".into()),
            FaultTree::Fault("f2".into()),
        ]),
        sampling_period: 1.0,
        p_max: 0.5,
        window_length: None,
    }
}

/// One nominal mode with a duplicated sensor, one failure mode where the
/// second sensor gain drops. Smallest model with a usable residual.
pub fn redundant_sensor() -> HybridModel {
    let events = vec![EventDef { id: "f1".into(), observable: false, fault: true }];
    let modes = vec![
        ModeDef {
            id: "q0".into(),
            kind: ModeKind::Nominal,
            faults: BTreeSet::new(),
            dynamics: dyn_siso2(1.0, 0.0, 1.0),
            aging: BTreeMap::from([("f1".to_string(), law(1.0, 100.0))]),
        },
        ModeDef {
            id: "qf".into(),
            kind: ModeKind::Failure,
            faults: BTreeSet::from(["f1".to_string()]),
            dynamics: dyn_siso2(1.0, 0.0, 2.0),
            aging: BTreeMap::new(),
        },
    ];
    HybridModel {
        events,
        modes,
        transitions: vec![TransitionDef {
            source: "q0".into(),
            event: "f1".into(),
            target: "qf".into(),
        }],
        initial_mode: "q0".into(),
        initial_state: DVector::from_vec(vec![1.0]),
        failure_tree: FaultTree::Fault("f1".into()),
        sampling_period: 1.0,
        p_max: 0.5,
        window_length: None,
    }
}
