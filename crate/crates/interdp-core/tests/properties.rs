//! Property-based invariants over the numeric and symbolic layers.

mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{random_model, weibull_cdf_quadrature};
use interdp_core::behavior::build_behavior_automaton;
use interdp_core::diagnoser::{build_diagnoser, DEFAULT_STATE_CAP};
use interdp_core::interdp::{run, trace_to_csv, RunConfig};
use interdp_core::model::WeibullLaw;
use interdp_core::parity::{
    diagnosability_partition, filter_residuals, FilterConfig, ResidualBank, DEFAULT_STIMULUS_SEED,
};
use interdp_core::prognoser::{predict_fault_date, shift_gamma, weibull_cdf};
use interdp_core::sim::{simulate, InjectedEvent, InputSignal, Scenario};
use interdp_core::testmodels;

fn law_strategy() -> impl Strategy<Value = WeibullLaw> {
    (0.5f64..5.0, 1.0f64..1e3, -100.0f64..100.0)
        .prop_map(|(beta, eta, gamma)| WeibullLaw { beta, eta, gamma })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// The closed-form CDF agrees with honest quadrature of the density.
    #[test]
    fn cdf_matches_quadrature(law in law_strategy(), offset in -10.0f64..500.0) {
        let t = law.gamma + offset;
        let closed = weibull_cdf(&law, t).unwrap();
        let quad = weibull_cdf_quadrature(&law, t);
        prop_assert!((closed - quad).abs() <= 1e-8);
    }

    /// The CDF is non-decreasing in time and confined to [0, 1).
    #[test]
    fn cdf_is_monotone(law in law_strategy(), a in -50.0f64..400.0, b in -50.0f64..400.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let pa = weibull_cdf(&law, law.gamma + lo).unwrap();
        let pb = weibull_cdf(&law, law.gamma + hi).unwrap();
        // The exact value 1.0 is reachable in floating point when the tail
        // mass underflows.
        prop_assert!((0.0..=1.0).contains(&pa));
        prop_assert!(pa <= pb);
    }

    /// Predicted dates increase strictly with the probability threshold.
    #[test]
    fn predicted_date_increases_with_threshold(
        law in law_strategy(),
        p1 in 0.05f64..0.5,
        bump in 0.05f64..0.45,
    ) {
        let d1 = predict_fault_date(&law, 0.0, p1).unwrap();
        let d2 = predict_fault_date(&law, 0.0, p1 + bump).unwrap();
        prop_assert!(d2 > d1);
    }

    /// Gamma-shifting preserves the accumulated probability at the switch.
    #[test]
    fn gamma_shift_is_continuous(
        old in law_strategy(),
        base in law_strategy(),
        frac in 0.01f64..2.0,
    ) {
        let switch = old.gamma + frac * old.eta;
        let reached = weibull_cdf(&old, switch).unwrap();
        prop_assume!(reached < 1.0 - 1e-12);
        let shifted = shift_gamma(reached, &base, switch).unwrap();
        let got = weibull_cdf(&shifted, switch).unwrap();
        prop_assert!((got - reached).abs() <= 1e-9);
    }

    /// Raising the residual threshold can only clear signature bits.
    #[test]
    fn filter_bits_shrink_with_threshold(
        history in proptest::collection::vec(
            proptest::collection::vec(-2.0f64..2.0, 3), 1..20),
        eps in 1e-6f64..0.5,
        factor in 1.0f64..10.0,
    ) {
        let lo = filter_residuals(&history, FilterConfig { threshold: eps, debounce: 1 });
        let hi = filter_residuals(&history, FilterConfig { threshold: eps * factor, debounce: 1 });
        for (a, b) in lo.0.iter().zip(hi.0.iter()) {
            prop_assert!(*a || !*b, "bit set at high threshold but not at low");
        }
    }
}

/// The diagnosability partition is an equivalence: groups are disjoint, cover
/// every mode, members share one signature, and distinct groups differ.
#[test]
fn partition_is_an_equivalence_relation() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut models = vec![testmodels::fig3(), testmodels::redundant_sensor()];
    for _ in 0..10 {
        models.push(random_model(&mut rng, 2, 2));
    }
    for model in &models {
        let bank = ResidualBank::build(model, FilterConfig::default(), DEFAULT_STIMULUS_SEED).unwrap();
        let partition = diagnosability_partition(&bank);
        let mut seen = BTreeSet::new();
        for group in partition {
            assert!(!group.is_empty());
            for mode in group {
                assert!(seen.insert(mode.clone()), "{mode} appears in two groups");
                assert_eq!(bank.signatures[mode], bank.signatures[&group[0]]);
            }
        }
        let all: BTreeSet<String> = model.modes.iter().map(|m| m.id.clone()).collect();
        assert_eq!(seen, all, "partition does not cover the mode set");
        for (i, g1) in partition.iter().enumerate() {
            for g2 in &partition[i + 1..] {
                assert_ne!(bank.signatures[&g1[0]], bank.signatures[&g2[0]]);
            }
        }
    }
}

/// Two identical runs produce byte-identical traces (modulo wall-clock).
#[test]
fn runs_are_deterministic() {
    let model = testmodels::fig3();
    let scenario = Scenario {
        duration: 70.0,
        input: InputSignal::Prbs { seed: 23, amplitude: 1.0 },
        events: vec![
            InjectedEvent { time: 15.0, event: "a1".into() },
            InjectedEvent { time: 45.0, event: "f1".into() },
        ],
        noise_std: vec![],
        noise_seed: 0,
        real_time_scale: 1.0,
        epsilon: 1e-6,
        debounce: 1,
    };
    let bank = ResidualBank::build(&model, FilterConfig::default(), DEFAULT_STIMULUS_SEED).unwrap();
    let ba = build_behavior_automaton(&model, &bank);
    let diag = build_diagnoser(&ba, &model.fingerprint(), DEFAULT_STATE_CAP).unwrap();

    let mut traces = Vec::new();
    for _ in 0..2 {
        let (obs, _) = simulate(&model, &scenario).unwrap();
        let outputs = run(&model, &diag, &bank, &obs, RunConfig::default()).unwrap();
        traces.push(interdp_core::interdp::strip_compute_time(&trace_to_csv(&outputs)));
    }
    assert_eq!(traces[0], traces[1]);
}

/// Prognosed sequences have non-decreasing dates, never schedule before the
/// current time, and cover exactly the pending faults.
#[test]
fn prognosis_sequences_are_sane() {
    use interdp_core::prognoser::{propagate_sequence, AgingState};
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for _ in 0..25 {
        let model = random_model(&mut rng, 2, 2);
        let aging = AgingState::initial(&model);
        for now in [0.0, 10.0, 200.0] {
            let seq = propagate_sequence(&model, &model.initial_mode, now, &aging, model.p_max)
                .unwrap();
            let mut last = now;
            for (_, date) in &seq.entries {
                assert!(*date >= last, "dates must be non-decreasing from {now}");
                last = *date;
            }
            let named: BTreeSet<&str> = seq.entries.iter().map(|(f, _)| f.as_str()).collect();
            let pending: BTreeSet<&str> = aging.pending().map(|e| e.fault.as_str()).collect();
            assert_eq!(named, pending);
        }
    }
}
