use bellgate::feasibility::{build_prop1, build_prop2, check_prop1, check_prop2, min_slack, Prop1Options};
use bellgate::ontology::{
    EpistemicState, LocalHVModel, OnticSpace, OntologicalModel, ResponseFunctions, Side, Strategy as Pair,
};
use bellgate::qubit::{canonical_scenario, Scenario};
use bellgate::scalar::{Mode, Scalar};
use bellgate::simplex::solve_min;
use bellgate::transform::{forward_charlie, forward_charlie_with, induced_model, reverse_group, TransformError};
use proptest::prelude::*;
use proptest::strategy::ValueTree;

const SETTINGS: [&str; 3] = ["Z", "Z+X", "X"];

fn q(n: i64, d: i64) -> Scalar {
    Scalar::from_ratio(Mode::Exact, n, d)
}

fn settings() -> Vec<String> {
    SETTINGS.iter().map(|s| s.to_string()).collect()
}

fn normalized(raw: &[i64]) -> Vec<Scalar> {
    let total: i64 = raw.iter().sum();
    raw.iter().map(|&w| q(w, total)).collect()
}

fn weights(n: usize) -> impl Strategy<Value = Vec<i64>> {
    proptest::collection::vec(prop_oneof![Just(0i64), 0i64..7], n).prop_filter("nonzero", |w| w.iter().any(|&x| x > 0))
}

/// Deterministic-cell model read off a single-system LP point.
fn model_from_point(scenario: &Scenario, x: &[Scalar]) -> OntologicalModel {
    let m = scenario.measurements().len();
    let space = OnticSpace::deterministic(m);
    let k = space.len();
    let epistemics = scenario
        .states()
        .iter()
        .enumerate()
        .map(|(i, s)| (s.label.clone(), EpistemicState::new(x[i * k..(i + 1) * k].to_vec())))
        .collect();
    let labels = scenario.measurements().iter().map(|m| m.label.clone()).collect();
    let responses =
        ResponseFunctions::deterministic(Mode::Exact, labels, k, |meas, cell| (cell >> meas & 1) as u8).unwrap();
    OntologicalModel::new(space, epistemics, responses).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn round_trip_on_diagonal_models(raw in weights(8)) {
        let w = normalized(&raw);
        let lhv = LocalHVModel::from_weight_map(
            settings(),
            Mode::Exact,
            (0..8u32).map(|bits| (Pair { alice: bits, bob: bits }, w[bits as usize].clone())),
        ).unwrap();
        let (induced, decompositions) = induced_model(&lhv, Side::B).unwrap();
        // one setting's outcomes already determine the common measure
        let again = forward_charlie_with(&induced, lhv.settings(), &decompositions[..1]).unwrap();
        prop_assert_eq!(&again, &lhv);
        let again = forward_charlie_with(&induced, lhv.settings(), &decompositions).unwrap();
        prop_assert_eq!(again, lhv);
    }

    #[test]
    fn induced_states_share_one_measure(raw in weights(64), side in prop_oneof![Just(Side::A), Just(Side::B)]) {
        let lhv = LocalHVModel::new(settings(), normalized(&raw)).unwrap();
        let (induced, decompositions) = induced_model(&lhv, side).unwrap();
        // succeeds only if every decomposition reassembles the same measure
        prop_assert!(forward_charlie_with(&induced, lhv.settings(), &decompositions).is_ok());
        for d in &decompositions {
            for (state, _) in &d.parts {
                let parts: Vec<&str> = state.split(':').collect();
                let single = reverse_group(&lhv, side, parts[1], parts[2].parse().unwrap()).unwrap();
                for meas in SETTINGS {
                    prop_assert_eq!(
                        single.predict(state, meas, 0).unwrap(),
                        induced.predict(state, meas, 0).unwrap()
                    );
                }
            }
        }
    }
}

#[test]
fn canonical_questions_fail_together() {
    let s = canonical_scenario();
    assert!(!check_prop1(&s, Prop1Options::default()).unwrap().is_feasible());
    assert!(!check_prop2(&s).unwrap().is_feasible());
}

#[test]
fn relaxed_vertices_violate_the_premise() {
    let s = canonical_scenario();
    let relaxed =
        build_prop1(&s, Prop1Options { include_decomposition_equality: false, ..Prop1Options::default() }).unwrap();
    let with_equality = build_prop1(&s, Prop1Options::default()).unwrap();
    let eps1 = min_slack(&with_equality).unwrap().epsilon;
    let eps2 = min_slack(&build_prop2(&s).unwrap()).unwrap().epsilon;
    assert!(eps1.is_positive() && eps2.is_positive());

    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let objectives = proptest::collection::vec(-3i64..=3, relaxed.num_columns());
    for _ in 0..12 {
        let c: Vec<Scalar> = objectives.new_tree(&mut runner).unwrap().current().iter().map(|&v| q(v, 1)).collect();
        let vertex = solve_min(&c, &relaxed.a, &relaxed.b).unwrap();
        let model = model_from_point(&s, &vertex.x);
        assert!(model.validate(&s).unwrap().quantum_compatible);
        assert!(matches!(forward_charlie(&model, &s), Err(TransformError::PremiseViolated(_))));
    }
}

#[test]
fn forward_output_is_diagonal() {
    let (model, scenario) = {
        let s = canonical_scenario().restricted_to(&["Z", "X"]).unwrap();
        let check = check_prop1(&s, Prop1Options::default()).unwrap();
        (model_from_point(&s, check.result.witness().unwrap()), s)
    };
    let lhv = forward_charlie(&model, &scenario).unwrap();
    for (s, w) in lhv.strategies() {
        if s.alice != s.bob {
            assert!(w.is_zero());
        }
    }
}
