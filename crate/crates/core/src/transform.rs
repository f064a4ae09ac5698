//! Moving between single-system models and local models of the Bell pair.
//!
//! Forward: a single-qubit model whose decompositions of the maximally mixed
//! state share one measure `Λ` lets a source prepare both halves of a pair
//! with the same hidden variable, so each cell of `Λ` becomes a diagonal
//! strategy pair ([`forward_charlie`]).
//!
//! Reverse: conditioning a local model on one side's outcome yields an
//! epistemic state for the other side over the strategies themselves
//! ([`reverse_group`], [`induced_model`]).

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::ontology::{
    EpistemicState, LocalHVModel, ModelError, OnticSpace, OntologicalModel, ResponseFunctions, Side, Strategy,
};
use crate::qubit::Scenario;
use crate::scalar::{Mode, Scalar, ScalarError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransformError {
    #[error(transparent)]
    Scalar(#[from] ScalarError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    PremiseViolated(Box<PremiseViolation>),
    #[error("conditioning event {0} has probability zero")]
    ZeroProbabilityCondition(String),
    #[error("model has no response function for measurement {0:?}")]
    MissingMeasurement(String),
    #[error("no decomposition to take the common measure from")]
    NoDecomposition,
}

/// Where two decompositions first disagree.
#[derive(Debug, Clone, PartialEq, Serialize, Error)]
#[error("decompositions {reference} and {other} differ by {difference} on cell {cell:?}")]
pub struct PremiseViolation {
    pub cell: String,
    pub reference: String,
    pub other: String,
    pub difference: Scalar,
}

/// A convex decomposition `Σ wᵢ μ_{stateᵢ}` of one mixed state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decomposition {
    pub parts: Vec<(String, Scalar)>,
}

impl Decomposition {
    pub fn equal_pair(first: &str, second: &str, mode: Mode) -> Self {
        let half = Scalar::from_ratio(mode, 1, 2);
        Decomposition { parts: vec![(first.to_string(), half.clone()), (second.to_string(), half)] }
    }

    fn describe(&self) -> String {
        let names: Vec<&str> = self.parts.iter().map(|(s, _)| s.as_str()).collect();
        format!("({})", names.join(","))
    }

    fn measure(&self, model: &OntologicalModel) -> Result<Vec<Scalar>, TransformError> {
        let mut total = vec![Scalar::zero(model.mode()); model.space().len()];
        for (state, w) in &self.parts {
            for (t, mu) in total.iter_mut().zip(model.epistemic(state)?.weights()) {
                *t = t.add(&w.mul(mu)?)?;
            }
        }
        Ok(total)
    }
}

fn state_label(side: Side, meas: &str, outcome: u8) -> String {
    format!("{side}:{meas}:{outcome}")
}

/// Forward construction for `scenario`'s equal-weight antipodal decompositions.
pub fn forward_charlie(model: &OntologicalModel, scenario: &Scenario) -> Result<LocalHVModel, TransformError> {
    let states = scenario.states();
    let decompositions: Vec<Decomposition> = scenario
        .decompositions()
        .iter()
        .map(|&(i, j)| Decomposition::equal_pair(&states[i].label, &states[j].label, model.mode()))
        .collect();
    let settings: Vec<String> = scenario.measurements().iter().map(|m| m.label.clone()).collect();
    forward_charlie_with(model, &settings, &decompositions)
}

/// Forward construction for arbitrary weighted decompositions.
///
/// All decompositions must induce the same measure `Λ` exactly. Every cell
/// of `Λ` (after refinement to deterministic responses) contributes its mass
/// to the diagonal strategy pair whose two halves both follow the cell's
/// responses on `settings`.
pub fn forward_charlie_with(
    model: &OntologicalModel,
    settings: &[String],
    decompositions: &[Decomposition],
) -> Result<LocalHVModel, TransformError> {
    let (reference, others) = decompositions.split_first().ok_or(TransformError::NoDecomposition)?;
    let lambda = reference.measure(model)?;
    for other in others {
        let measure = other.measure(model)?;
        for (c, (p, q)) in lambda.iter().zip(&measure).enumerate() {
            let difference = p.sub(q)?;
            if !difference.is_zero() {
                return Err(TransformError::PremiseViolated(Box::new(PremiseViolation {
                    cell: model.space().cells()[c].clone(),
                    reference: reference.describe(),
                    other: other.describe(),
                    difference,
                })));
            }
        }
    }
    let columns = settings
        .iter()
        .map(|s| model.responses().index_of(s).ok_or_else(|| TransformError::MissingMeasurement(s.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let fine = model.canonicalize_deterministic();
    // Λ on the refined space: the refinement is linear in the epistemic states
    let fine_lambda = {
        let mut total = vec![Scalar::zero(model.mode()); fine.space().len()];
        for (state, w) in &reference.parts {
            for (t, mu) in total.iter_mut().zip(fine.epistemic(state)?.weights()) {
                *t = t.add(&w.mul(mu)?)?;
            }
        }
        total
    };
    let mut entries = Vec::new();
    for (cell, w) in fine_lambda.into_iter().enumerate() {
        if w.is_zero() {
            continue;
        }
        let mut bits = 0u32;
        for (i, &meas) in columns.iter().enumerate() {
            let outcome = fine.responses().outcome(meas, cell).expect("refined responses are deterministic");
            bits |= (outcome as u32) << i;
        }
        entries.push((Strategy { alice: bits, bob: bits }, w));
    }
    Ok(LocalHVModel::from_weight_map(settings.to_vec(), model.mode(), entries)?)
}

/// Conditional weights `p(s | side's meas = outcome)` over all strategies,
/// or `None` when the event has probability zero.
fn conditioned(
    lhv: &LocalHVModel,
    side: Side,
    setting: usize,
    outcome: u8,
) -> Result<Option<Vec<Scalar>>, TransformError> {
    let mode = lhv.mode();
    let mut restricted = Vec::with_capacity(lhv.weights().len());
    for (s, w) in lhv.strategies() {
        restricted.push(if s.bit(side, setting) == outcome { w.clone() } else { Scalar::zero(mode) });
    }
    let total = Scalar::sum(mode, &restricted)?;
    if total.is_zero() {
        return Ok(None);
    }
    Ok(Some(restricted.iter().map(|w| w.div(&total)).collect::<Result<_, _>>()?))
}

fn opposite_responses(lhv: &LocalHVModel, side: Side, cells: &[Strategy]) -> Result<ResponseFunctions, TransformError> {
    let reader = side.opposite();
    Ok(ResponseFunctions::deterministic(lhv.mode(), lhv.settings().to_vec(), cells.len(), |meas, cell| {
        cells[cell].bit(reader, meas)
    })?)
}

/// Single-system model of the half opposite to `side`, prepared by `side`
/// measuring `meas` and seeing `outcome`.
///
/// The ontic space is the set of strategy pairs with nonzero conditioned
/// weight, keyed as `aaa|bbb`; responses read the opposite side's bits. The
/// one epistemic state is labelled `side:meas:outcome`.
pub fn reverse_group(
    lhv: &LocalHVModel,
    side: Side,
    meas: &str,
    outcome: u8,
) -> Result<OntologicalModel, TransformError> {
    if outcome > 1 {
        return Err(ModelError::InvalidOutcome(outcome).into());
    }
    let m = lhv.settings().len();
    let label = state_label(side, meas, outcome);
    let weights = conditioned(lhv, side, lhv.setting_index(meas)?, outcome)?
        .ok_or_else(|| TransformError::ZeroProbabilityCondition(label.clone()))?;
    let (cells, mu): (Vec<Strategy>, Vec<Scalar>) = weights
        .into_iter()
        .enumerate()
        .filter(|(_, w)| !w.is_zero())
        .map(|(i, w)| (Strategy::from_index(i, m), w))
        .unzip();
    let space = OnticSpace::new(cells.iter().map(|s| s.key(m)).collect())?;
    let responses = opposite_responses(lhv, side, &cells)?;
    Ok(OntologicalModel::new(space, vec![(label, EpistemicState::new(mu))], responses)?)
}

/// Every conditioned state of the opposite half at once, over the support of
/// the whole local model, with one decomposition per setting weighted by
/// that setting's outcome probabilities.
pub fn induced_model(lhv: &LocalHVModel, side: Side) -> Result<(OntologicalModel, Vec<Decomposition>), TransformError> {
    let m = lhv.settings().len();
    let support: Vec<usize> = (0..lhv.weights().len()).filter(|&i| !lhv.weights()[i].is_zero()).collect();
    let cells: Vec<Strategy> = support.iter().map(|&i| Strategy::from_index(i, m)).collect();
    let mut epistemics = Vec::new();
    let mut decompositions = Vec::new();
    for (k, meas) in lhv.settings().iter().enumerate() {
        let mut parts = Vec::new();
        for outcome in 0..2u8 {
            let Some(weights) = conditioned(lhv, side, k, outcome)? else {
                continue;
            };
            let label = state_label(side, meas, outcome);
            epistemics
                .push((label.clone(), EpistemicState::new(support.iter().map(|&i| weights[i].clone()).collect())));
            parts.push((label, lhv.marginal(side, meas, outcome)?));
        }
        decompositions.push(Decomposition { parts });
    }
    let space = OnticSpace::new(cells.iter().map(|s| s.key(m)).collect())?;
    let responses = opposite_responses(lhv, side, &cells)?;
    Ok((OntologicalModel::new(space, epistemics, responses)?, decompositions))
}

/// Residual of reassembling the strategy distribution from one setting's
/// conditioned states.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndependenceResidual {
    pub setting: String,
    /// `Σ_b P(b|setting) · p(· | b) − p`, keyed by strategy, nonzero entries only.
    pub residual: BTreeMap<String, Scalar>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndependenceReport {
    pub side: Side,
    pub settings: Vec<IndependenceResidual>,
    pub all_zero: bool,
}

/// Checks that conditioning on any one setting of `side` and averaging over
/// its outcomes gives back the same distribution.
pub fn decomposition_independence_check(lhv: &LocalHVModel, side: Side) -> Result<IndependenceReport, TransformError> {
    let m = lhv.settings().len();
    let mode = lhv.mode();
    let mut settings = Vec::new();
    for (k, meas) in lhv.settings().iter().enumerate() {
        let mut total = vec![Scalar::zero(mode); lhv.weights().len()];
        for outcome in 0..2u8 {
            let Some(weights) = conditioned(lhv, side, k, outcome)? else {
                continue;
            };
            let p = lhv.marginal(side, meas, outcome)?;
            for (t, w) in total.iter_mut().zip(&weights) {
                *t = t.add(&p.mul(w)?)?;
            }
        }
        let mut residual = BTreeMap::new();
        for (i, (t, w)) in total.iter().zip(lhv.weights()).enumerate() {
            let r = t.sub(w)?;
            if !r.is_zero() {
                residual.insert(Strategy::from_index(i, m).key(m), r);
            }
        }
        settings.push(IndependenceResidual { setting: meas.clone(), residual });
    }
    let all_zero = settings.iter().all(|s| s.residual.is_empty());
    Ok(IndependenceReport { side, settings, all_zero })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qubit::{bell_joint, born_probability, steered_state, PlanarAngle};

    fn q(n: i64, d: i64) -> Scalar {
        Scalar::from_ratio(Mode::Exact, n, d)
    }

    fn toy() -> (OntologicalModel, Scenario) {
        let scenario =
            Scenario::from_measurement_angles(&[PlanarAngle::quarter_pi(0), PlanarAngle::quarter_pi(2)]).unwrap();
        let space = OnticSpace::deterministic(2);
        let mu = |w: [i64; 4]| EpistemicState::new(w.iter().map(|&n| q(n, 2)).collect());
        // cells in order 00, 10, 01, 11 (bit i = measurement i)
        let epistemics = vec![
            ("0".to_string(), mu([1, 0, 1, 0])),
            ("1".to_string(), mu([0, 1, 0, 1])),
            ("+".to_string(), mu([1, 1, 0, 0])),
            ("-".to_string(), mu([0, 0, 1, 1])),
        ];
        let responses =
            ResponseFunctions::deterministic(Mode::Exact, vec!["Z".into(), "X".into()], 4, |m, c| (c >> m & 1) as u8)
                .unwrap();
        (OntologicalModel::new(space, epistemics, responses).unwrap(), scenario)
    }

    #[test]
    fn toy_model_is_quantum_compatible() {
        let (model, scenario) = toy();
        let report = model.validate(&scenario).unwrap();
        assert!(report.quantum_compatible && report.decompositions_equal);
    }

    #[test]
    fn forward_reproduces_bell_table() {
        let (model, scenario) = toy();
        let lhv = forward_charlie(&model, &scenario).unwrap();
        for (s, w) in lhv.strategies() {
            let expected = if s.alice == s.bob { q(1, 4) } else { q(0, 1) };
            assert_eq!(*w, expected);
        }
        for ma in scenario.measurements() {
            for mb in scenario.measurements() {
                for a in 0..2 {
                    for b in 0..2 {
                        assert_eq!(
                            lhv.predict_lhv(&ma.label, &mb.label, a, b).unwrap(),
                            bell_joint(ma, mb, a, b).unwrap()
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn forward_constant_responses() {
        let space = OnticSpace::new(vec!["x".into(), "y".into()]).unwrap();
        let responses =
            ResponseFunctions::deterministic(Mode::Exact, vec!["P".into(), "Q".into(), "R".into()], 2, |_, _| 0)
                .unwrap();
        let model = OntologicalModel::new(
            space,
            vec![
                ("u".into(), EpistemicState::new(vec![q(1, 1), q(0, 1)])),
                ("v".into(), EpistemicState::new(vec![q(0, 1), q(1, 1)])),
            ],
            responses,
        )
        .unwrap();
        let settings: Vec<String> = ["P", "Q", "R"].map(String::from).to_vec();
        let d = Decomposition::equal_pair("u", "v", Mode::Exact);
        let lhv = forward_charlie_with(&model, &settings, &[d]).unwrap();
        assert_eq!(*lhv.weight(Strategy { alice: 0, bob: 0 }), q(1, 1));
        assert_eq!(lhv.predict_lhv("P", "R", 0, 0).unwrap(), q(1, 1));
    }

    #[test]
    fn forward_rejects_premise_violation() {
        let scenario = crate::qubit::canonical_scenario();
        let model = OntologicalModel::product_model(&scenario).unwrap();
        let err = forward_charlie(&model, &scenario).unwrap_err();
        match err {
            TransformError::PremiseViolated(v) => assert!(!v.difference.is_zero()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn forward_refines_stochastic_cells() {
        // one cell answering Z and X with fair coins, shared by all four states
        let space = OnticSpace::new(vec!["c".into()]).unwrap();
        let half = [q(1, 2), q(1, 2)];
        let responses =
            ResponseFunctions::new(vec!["Z".into(), "X".into()], vec![vec![half.clone()], vec![half]]).unwrap();
        let mu = || EpistemicState::new(vec![q(1, 1)]);
        let model = OntologicalModel::new(space, vec![("a".into(), mu()), ("b".into(), mu())], responses).unwrap();
        let settings = vec!["Z".to_string(), "X".to_string()];
        let lhv = forward_charlie_with(&model, &settings, &[Decomposition::equal_pair("a", "b", Mode::Exact)]).unwrap();
        for bits in 0..4 {
            assert_eq!(*lhv.weight(Strategy { alice: bits, bob: bits }), q(1, 4));
        }
    }

    #[test]
    fn reverse_on_toy_matches_steered_state() {
        let (model, scenario) = toy();
        let lhv = forward_charlie(&model, &scenario).unwrap();
        let reversed = reverse_group(&lhv, Side::B, "X", 0).unwrap();
        assert_eq!(reversed.space().len(), 2);
        let x = scenario.measurement("X").unwrap();
        let plus = steered_state(x, 0).unwrap();
        assert_eq!(plus.angle, PlanarAngle::quarter_pi(2));
        for meas in scenario.measurements() {
            for a in 0..2 {
                assert_eq!(
                    reversed.predict("B:X:0", &meas.label, a).unwrap(),
                    born_probability(&plus, meas, a).unwrap()
                );
            }
        }
        assert_eq!(reversed.predict("B:X:0", "Z", 0).unwrap(), q(1, 2));
        assert_eq!(reversed.predict("B:X:0", "X", 0).unwrap(), q(1, 1));
    }

    #[test]
    fn reverse_uniform_is_flat() {
        let settings: Vec<String> = ["Z", "Z+X", "X"].map(String::from).to_vec();
        let lhv = LocalHVModel::uniform(settings.clone(), Mode::Exact).unwrap();
        for side in [Side::A, Side::B] {
            let model = reverse_group(&lhv, side, "Z+X", 1).unwrap();
            for meas in &settings {
                assert_eq!(model.predict(&format!("{side}:Z+X:1"), meas, 0).unwrap(), q(1, 2));
            }
        }
    }

    #[test]
    fn reverse_zero_probability() {
        let settings = vec!["Z".to_string()];
        let lhv =
            LocalHVModel::from_weight_map(settings, Mode::Exact, [(Strategy { alice: 0, bob: 0 }, q(1, 1))]).unwrap();
        assert!(matches!(reverse_group(&lhv, Side::B, "Z", 1), Err(TransformError::ZeroProbabilityCondition(_))));
    }

    #[test]
    fn independence_on_forward_output() {
        let (model, scenario) = toy();
        let lhv = forward_charlie(&model, &scenario).unwrap();
        let report = decomposition_independence_check(&lhv, Side::B).unwrap();
        assert_eq!(report.settings.len(), 2);
        assert!(report.all_zero);
    }

    #[test]
    fn induced_round_trip() {
        let (model, scenario) = toy();
        let lhv = forward_charlie(&model, &scenario).unwrap();
        let (induced, decompositions) = induced_model(&lhv, Side::B).unwrap();
        assert_eq!(induced.states().len(), 4);
        let again = forward_charlie_with(&induced, lhv.settings(), &decompositions).unwrap();
        assert_eq!(again, lhv);
    }
}
