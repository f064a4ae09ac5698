//! Hidden-variable models.
//!
//! [`OntologicalModel`] describes a single system: a finite ontic space, one
//! epistemic distribution per prepared state, and response functions keyed
//! by measurement and cell only (never by the prepared state).
//! [`LocalHVModel`] describes a bipartite system as a distribution over pairs
//! of deterministic local strategies.

use std::collections::HashSet;
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qubit::{born_probability, QubitError, Scenario};
use crate::scalar::{Mode, Scalar, ScalarError};

/// Largest number of settings per side accepted by [`LocalHVModel`].
pub const MAX_SETTINGS: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Scalar(#[from] ScalarError),
    #[error(transparent)]
    Qubit(#[from] QubitError),
    #[error("ontic space must have at least one cell")]
    EmptySpace,
    #[error("duplicate label {0:?}")]
    DuplicateLabel(String),
    #[error("unknown cell {0:?}")]
    UnknownCell(String),
    #[error("unknown state {0:?}")]
    UnknownState(String),
    #[error("unknown measurement {0:?}")]
    UnknownMeasurement(String),
    #[error("unknown setting {0:?}")]
    UnknownSetting(String),
    #[error("{what}: expected {expected} entries, got {got}")]
    Length { what: String, expected: usize, got: usize },
    #[error("{0}: negative probability")]
    NegativeWeight(String),
    #[error("{context}: probabilities sum to {total}, not 1")]
    NotNormalized { context: String, total: String },
    #[error("outcome must be 0 or 1, got {0}")]
    InvalidOutcome(u8),
    #[error("at most {MAX_SETTINGS} settings per side are supported, got {0}")]
    TooManySettings(usize),
    #[error("invalid strategy key {0:?}")]
    InvalidStrategyKey(String),
}

fn check_bit(bit: u8) -> Result<(), ModelError> {
    if bit > 1 {
        Err(ModelError::InvalidOutcome(bit))
    } else {
        Ok(())
    }
}

fn check_distribution(context: &str, mode: Mode, values: &[Scalar]) -> Result<(), ModelError> {
    if values.iter().any(|v| v.mode() != mode) {
        return Err(ScalarError::MixedBackend.into());
    }
    if values.iter().any(Scalar::is_negative) {
        return Err(ModelError::NegativeWeight(context.to_string()));
    }
    let total = Scalar::sum(mode, values)?;
    if !total.sub(&Scalar::one(mode))?.is_zero() {
        return Err(ModelError::NotNormalized { context: context.to_string(), total: total.to_string() });
    }
    Ok(())
}

fn unique(labels: &[String]) -> Result<(), ModelError> {
    let mut seen = HashSet::new();
    for l in labels {
        if !seen.insert(l) {
            return Err(ModelError::DuplicateLabel(l.clone()));
        }
    }
    Ok(())
}

/// Label for a deterministic cell: one character per measurement, in order.
pub fn bits_label(bits: u32, width: usize) -> String {
    (0..width).map(|i| if bits >> i & 1 == 1 { '1' } else { '0' }).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OnticSpace {
    cells: Vec<String>,
}

impl OnticSpace {
    pub fn new(cells: Vec<String>) -> Result<Self, ModelError> {
        if cells.is_empty() {
            return Err(ModelError::EmptySpace);
        }
        unique(&cells)?;
        Ok(OnticSpace { cells })
    }

    /// The `2^m` outcome assignments for `m` measurements.
    pub fn deterministic(measurements: usize) -> Self {
        let cells = (0..1u32 << measurements).map(|b| bits_label(b, measurements)).collect();
        OnticSpace { cells }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[String] {
        &self.cells
    }

    pub fn index_of(&self, cell: &str) -> Option<usize> {
        self.cells.iter().position(|c| c == cell)
    }
}

/// Probability mass per cell, aligned with an [`OnticSpace`].
#[derive(Debug, Clone, PartialEq)]
pub struct EpistemicState {
    weights: Vec<Scalar>,
}

impl EpistemicState {
    pub fn new(weights: Vec<Scalar>) -> Self {
        EpistemicState { weights }
    }

    pub fn weights(&self) -> &[Scalar] {
        &self.weights
    }

    /// Cellwise difference `self − other`.
    pub fn difference(&self, other: &EpistemicState) -> Result<Vec<Scalar>, ScalarError> {
        self.weights.iter().zip(&other.weights).map(|(x, y)| x.sub(y)).collect()
    }
}

/// Outcome distribution per (measurement, cell).
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseFunctions {
    measurements: Vec<String>,
    table: Vec<Vec<[Scalar; 2]>>,
}

impl ResponseFunctions {
    pub fn new(measurements: Vec<String>, table: Vec<Vec<[Scalar; 2]>>) -> Result<Self, ModelError> {
        unique(&measurements)?;
        if table.len() != measurements.len() {
            return Err(ModelError::Length {
                what: "response table".into(),
                expected: measurements.len(),
                got: table.len(),
            });
        }
        Ok(ResponseFunctions { measurements, table })
    }

    /// Outcome-deterministic responses: `outcome(meas_index, cell_index)`.
    pub fn deterministic(
        mode: Mode,
        measurements: Vec<String>,
        cells: usize,
        outcome: impl Fn(usize, usize) -> u8,
    ) -> Result<Self, ModelError> {
        let table = (0..measurements.len())
            .map(|m| {
                (0..cells)
                    .map(|c| {
                        if outcome(m, c) == 0 {
                            [Scalar::one(mode), Scalar::zero(mode)]
                        } else {
                            [Scalar::zero(mode), Scalar::one(mode)]
                        }
                    })
                    .collect()
            })
            .collect();
        ResponseFunctions::new(measurements, table)
    }

    pub fn measurements(&self) -> &[String] {
        &self.measurements
    }

    pub fn index_of(&self, meas: &str) -> Option<usize> {
        self.measurements.iter().position(|m| m == meas)
    }

    pub fn response(&self, meas: usize, cell: usize) -> &[Scalar; 2] {
        &self.table[meas][cell]
    }

    /// The outcome produced with certainty, if any.
    pub fn outcome(&self, meas: usize, cell: usize) -> Option<u8> {
        let [p0, p1] = &self.table[meas][cell];
        match (p0.is_zero(), p1.is_zero()) {
            (false, true) => Some(0),
            (true, false) => Some(1),
            _ => None,
        }
    }

    pub fn is_deterministic(&self) -> bool {
        self.table.iter().enumerate().all(|(m, row)| (0..row.len()).all(|c| self.outcome(m, c).is_some()))
    }
}

/// Single-system ontological model over a finite ontic space.
#[derive(Debug, Clone, PartialEq)]
pub struct OntologicalModel {
    mode: Mode,
    space: OnticSpace,
    states: Vec<String>,
    epistemics: Vec<EpistemicState>,
    responses: ResponseFunctions,
}

impl OntologicalModel {
    pub fn new(
        space: OnticSpace,
        epistemics: Vec<(String, EpistemicState)>,
        responses: ResponseFunctions,
    ) -> Result<Self, ModelError> {
        let n = space.len();
        let (states, epistemics): (Vec<_>, Vec<_>) = epistemics.into_iter().unzip();
        unique(&states)?;
        let mode = epistemics
            .first()
            .and_then(|e| e.weights.first())
            .or_else(|| responses.table.first().and_then(|r| r.first()).map(|p| &p[0]))
            .map(Scalar::mode)
            .unwrap_or(Mode::Exact);
        for (state, e) in states.iter().zip(&epistemics) {
            if e.weights.len() != n {
                return Err(ModelError::Length {
                    what: format!("epistemic state {state:?}"),
                    expected: n,
                    got: e.weights.len(),
                });
            }
            check_distribution(&format!("epistemic state {state:?}"), mode, &e.weights)?;
        }
        for (meas, row) in responses.measurements.iter().zip(&responses.table) {
            if row.len() != n {
                return Err(ModelError::Length { what: format!("responses of {meas:?}"), expected: n, got: row.len() });
            }
            for (cell, p) in space.cells.iter().zip(row) {
                check_distribution(&format!("response of {meas:?} on cell {cell:?}"), mode, p)?;
            }
        }
        Ok(OntologicalModel { mode, space, states, epistemics, responses })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn space(&self) -> &OnticSpace {
        &self.space
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn responses(&self) -> &ResponseFunctions {
        &self.responses
    }

    pub fn epistemic(&self, state: &str) -> Result<&EpistemicState, ModelError> {
        self.states
            .iter()
            .position(|s| s == state)
            .map(|i| &self.epistemics[i])
            .ok_or_else(|| ModelError::UnknownState(state.to_string()))
    }

    fn measurement_index(&self, meas: &str) -> Result<usize, ModelError> {
        self.responses.index_of(meas).ok_or_else(|| ModelError::UnknownMeasurement(meas.to_string()))
    }

    /// `Σ_λ μ_state(λ) · ξ(outcome | meas, λ)`.
    pub fn predict(&self, state: &str, meas: &str, outcome: u8) -> Result<Scalar, ModelError> {
        check_bit(outcome)?;
        let mu = self.epistemic(state)?;
        let m = self.measurement_index(meas)?;
        let mut total = Scalar::zero(self.mode);
        for (cell, w) in mu.weights.iter().enumerate() {
            if !w.is_zero() {
                total = total.add(&w.mul(&self.responses.table[m][cell][outcome as usize])?)?;
            }
        }
        Ok(total)
    }

    /// Equal-weight mixture `(μ₁ + μ₂)/2` of two states' epistemic states.
    pub fn mixture_measure(&self, first: &str, second: &str) -> Result<EpistemicState, ModelError> {
        let (x, y) = (self.epistemic(first)?, self.epistemic(second)?);
        let half = Scalar::from_ratio(self.mode, 1, 2);
        let weights = x.weights.iter().zip(&y.weights).map(|(p, q)| p.add(q)?.mul(&half)).collect::<Result<_, _>>()?;
        Ok(EpistemicState { weights })
    }

    /// Observationally equivalent model with 0/1-valued responses.
    ///
    /// Each cell λ is split into sub-cells indexed by joint outcome
    /// assignments `s`, carrying mass `μ(λ)·Π_M ξ(s(M) | M, λ)`. Sub-cells
    /// whose response product vanishes are dropped. Already-deterministic
    /// models are returned unchanged.
    pub fn canonicalize_deterministic(&self) -> OntologicalModel {
        if self.responses.is_deterministic() {
            return self.clone();
        }
        let m = self.responses.measurements.len();
        let mut cells = Vec::new();
        let mut factors: Vec<(usize, Scalar)> = Vec::new();
        let mut assignments = Vec::new();
        for (c, label) in self.space.cells.iter().enumerate() {
            for bits in 0..1u32 << m {
                let mut product = Scalar::one(self.mode);
                for meas in 0..m {
                    let p = &self.responses.table[meas][c][(bits >> meas & 1) as usize];
                    product = product.mul(p).expect("single backend");
                }
                if product.is_zero() {
                    continue;
                }
                cells.push(format!("{label}:{}", bits_label(bits, m)));
                factors.push((c, product));
                assignments.push(bits);
            }
        }
        let epistemics = self
            .states
            .iter()
            .zip(&self.epistemics)
            .map(|(s, e)| {
                let weights = factors.iter().map(|(c, f)| e.weights[*c].mul(f).expect("single backend")).collect();
                (s.clone(), EpistemicState { weights })
            })
            .collect();
        let responses = ResponseFunctions::deterministic(
            self.mode,
            self.responses.measurements.clone(),
            cells.len(),
            |meas, cell| (assignments[cell] >> meas & 1) as u8,
        )
        .expect("labels already unique");
        OntologicalModel::new(OnticSpace { cells }, epistemics, responses).expect("refinement preserves normalization")
    }

    /// Merges cells with identical response rows. Deterministic classes are
    /// labelled by their outcome pattern over the measurements.
    pub fn quotient_by_responses(&self) -> OntologicalModel {
        let m = self.responses.measurements.len();
        let mut classes: Vec<(usize, Vec<usize>)> = Vec::new();
        for c in 0..self.space.len() {
            let same = |d: usize| (0..m).all(|meas| self.responses.table[meas][c] == self.responses.table[meas][d]);
            match classes.iter_mut().find(|(rep, _)| same(*rep)) {
                Some((_, members)) => members.push(c),
                None => classes.push((c, vec![c])),
            }
        }
        let cells = classes
            .iter()
            .map(|(rep, _)| {
                let bits: Option<u32> =
                    (0..m).map(|meas| self.responses.outcome(meas, *rep).map(|o| (o as u32) << meas)).sum();
                match bits {
                    Some(b) => bits_label(b, m),
                    None => self.space.cells[*rep].clone(),
                }
            })
            .collect();
        let epistemics = self
            .states
            .iter()
            .zip(&self.epistemics)
            .map(|(s, e)| {
                let weights = classes
                    .iter()
                    .map(|(_, members)| {
                        Scalar::sum(self.mode, members.iter().map(|&c| &e.weights[c])).expect("single backend")
                    })
                    .collect();
                (s.clone(), EpistemicState { weights })
            })
            .collect();
        let table = (0..m)
            .map(|meas| classes.iter().map(|(rep, _)| self.responses.table[meas][*rep].clone()).collect())
            .collect();
        let responses = ResponseFunctions::new(self.responses.measurements.clone(), table).expect("unchanged labels");
        OntologicalModel::new(OnticSpace { cells }, epistemics, responses).expect("merging preserves normalization")
    }

    /// Deterministic-cell model for every state of `scenario` with the product
    /// measure `μ_ψ(λ) = Π_M born(ψ, M, λ(M))`. It reproduces all Born
    /// statistics but in general violates decomposition equality.
    pub fn product_model(scenario: &Scenario) -> Result<OntologicalModel, ModelError> {
        let mode = scenario.mode();
        let ms = scenario.measurements();
        let space = OnticSpace::deterministic(ms.len());
        let mut epistemics = Vec::new();
        for state in scenario.states() {
            let mut weights = Vec::with_capacity(space.len());
            for bits in 0..1u32 << ms.len() {
                let mut w = Scalar::one(mode);
                for (i, m) in ms.iter().enumerate() {
                    w = w.mul(&born_probability(state, m, (bits >> i & 1) as u8)?)?;
                }
                weights.push(w);
            }
            epistemics.push((state.label.clone(), EpistemicState { weights }));
        }
        let labels = ms.iter().map(|m| m.label.clone()).collect();
        let responses =
            ResponseFunctions::deterministic(mode, labels, space.len(), |meas, cell| (cell >> meas & 1) as u8)?;
        OntologicalModel::new(space, epistemics, responses)
    }

    /// Compares the model against the Born rule and the decomposition
    /// equality property of `scenario`.
    pub fn validate(&self, scenario: &Scenario) -> Result<ValidationReport, ModelError> {
        if scenario.mode() != self.mode && !(scenario.states().is_empty() && scenario.measurements().is_empty()) {
            return Err(ScalarError::MixedBackend.into());
        }
        let mut report = ValidationReport::default();
        for state in scenario.states() {
            if self.epistemic(&state.label).is_err() {
                report.missing.push(format!("state {}", state.label));
                continue;
            }
            for meas in scenario.measurements() {
                if self.responses.index_of(&meas.label).is_none() {
                    continue;
                }
                for outcome in 0..2u8 {
                    let predicted = self.predict(&state.label, &meas.label, outcome)?;
                    let born = born_probability(state, meas, outcome)?;
                    let residual = predicted.sub(&born)?;
                    report.born.push(BornResidual {
                        state: state.label.clone(),
                        measurement: meas.label.clone(),
                        outcome,
                        predicted,
                        born,
                        residual,
                    });
                }
            }
        }
        for meas in scenario.measurements() {
            if self.responses.index_of(&meas.label).is_none() {
                report.missing.push(format!("measurement {}", meas.label));
            }
        }
        let pairs = scenario.decomposition_labels();
        if let Some((reference, rest)) = pairs.split_first() {
            if let Ok(base) = self.mixture_measure(&reference.0, &reference.1) {
                for other in rest {
                    let Ok(mix) = self.mixture_measure(&other.0, &other.1) else {
                        continue;
                    };
                    for (cell, difference) in self.space.cells.iter().zip(base.difference(&mix)?) {
                        report.mixture_differences.push(MixtureDifference {
                            reference: reference.clone(),
                            other: other.clone(),
                            cell: cell.clone(),
                            difference,
                        });
                    }
                }
            }
        }
        report.quantum_compatible = report.missing.is_empty() && report.born.iter().all(|r| r.residual.is_zero());
        report.decompositions_equal = report.mixture_differences.iter().all(|d| d.difference.is_zero());
        Ok(report)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BornResidual {
    pub state: String,
    pub measurement: String,
    pub outcome: u8,
    pub predicted: Scalar,
    pub born: Scalar,
    pub residual: Scalar,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixtureDifference {
    pub reference: (String, String),
    pub other: (String, String),
    pub cell: String,
    pub difference: Scalar,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub quantum_compatible: bool,
    pub decompositions_equal: bool,
    pub missing: Vec<String>,
    pub born: Vec<BornResidual>,
    pub mixture_differences: Vec<MixtureDifference>,
}

impl Default for ValidationReport {
    fn default() -> Self {
        ValidationReport {
            quantum_compatible: true,
            decompositions_equal: true,
            missing: Vec::new(),
            born: Vec::new(),
            mixture_differences: Vec::new(),
        }
    }
}

// ---------------------------------------------------------------------------
// bipartite models

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::A => Side::B,
            Side::B => Side::A,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::A => "A",
            Side::B => "B",
        })
    }
}

/// A pair of deterministic local strategies; bit `i` is the outcome for setting `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Strategy {
    pub alice: u32,
    pub bob: u32,
}

impl Strategy {
    pub fn from_index(index: usize, settings: usize) -> Self {
        let mask = (1usize << settings) - 1;
        Strategy { alice: (index & mask) as u32, bob: (index >> settings) as u32 }
    }

    pub fn index(&self, settings: usize) -> usize {
        self.alice as usize | (self.bob as usize) << settings
    }

    pub fn bit(&self, side: Side, setting: usize) -> u8 {
        let word = match side {
            Side::A => self.alice,
            Side::B => self.bob,
        };
        (word >> setting & 1) as u8
    }

    /// `aaa|bbb`, one character per setting in order.
    pub fn key(&self, settings: usize) -> String {
        format!("{}|{}", bits_label(self.alice, settings), bits_label(self.bob, settings))
    }

    pub fn parse_key(key: &str, settings: usize) -> Result<Self, ModelError> {
        let bad = || ModelError::InvalidStrategyKey(key.to_string());
        let (a, b) = key.split_once('|').ok_or_else(bad)?;
        let parse = |s: &str| -> Result<u32, ModelError> {
            if s.len() != settings {
                return Err(bad());
            }
            s.bytes().enumerate().try_fold(0u32, |acc, (i, c)| match c {
                b'0' => Ok(acc),
                b'1' => Ok(acc | 1 << i),
                _ => Err(bad()),
            })
        };
        Ok(Strategy { alice: parse(a)?, bob: parse(b)? })
    }
}

/// Distribution over the `2^(2m)` strategy pairs of an m-setting bipartite scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalHVModel {
    mode: Mode,
    settings: Vec<String>,
    weights: Vec<Scalar>,
}

impl LocalHVModel {
    pub fn new(settings: Vec<String>, weights: Vec<Scalar>) -> Result<Self, ModelError> {
        let m = settings.len();
        if m > MAX_SETTINGS {
            return Err(ModelError::TooManySettings(m));
        }
        unique(&settings)?;
        let expected = 1usize << (2 * m);
        if weights.len() != expected {
            return Err(ModelError::Length { what: "strategy weights".into(), expected, got: weights.len() });
        }
        let mode = weights[0].mode();
        check_distribution("strategy weights", mode, &weights)?;
        Ok(LocalHVModel { mode, settings, weights })
    }

    pub fn from_weight_map(
        settings: Vec<String>,
        mode: Mode,
        entries: impl IntoIterator<Item = (Strategy, Scalar)>,
    ) -> Result<Self, ModelError> {
        let m = settings.len();
        if m > MAX_SETTINGS {
            return Err(ModelError::TooManySettings(m));
        }
        let mut weights = vec![Scalar::zero(mode); 1 << (2 * m)];
        for (s, w) in entries {
            let i = s.index(m);
            weights[i] = weights[i].add(&w)?;
        }
        LocalHVModel::new(settings, weights)
    }

    pub fn uniform(settings: Vec<String>, mode: Mode) -> Result<Self, ModelError> {
        let n = 1i64 << (2 * settings.len().min(MAX_SETTINGS));
        let w = Scalar::from_ratio(mode, 1, n);
        LocalHVModel::new(settings, vec![w; n as usize])
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn settings(&self) -> &[String] {
        &self.settings
    }

    pub fn weights(&self) -> &[Scalar] {
        &self.weights
    }

    pub fn weight(&self, s: Strategy) -> &Scalar {
        &self.weights[s.index(self.settings.len())]
    }

    pub fn strategies(&self) -> impl Iterator<Item = (Strategy, &Scalar)> + '_ {
        let m = self.settings.len();
        self.weights.iter().enumerate().map(move |(i, w)| (Strategy::from_index(i, m), w))
    }

    pub fn setting_index(&self, label: &str) -> Result<usize, ModelError> {
        self.settings.iter().position(|s| s == label).ok_or_else(|| ModelError::UnknownSetting(label.to_string()))
    }

    /// Probability that Alice's `meas_a` gives `a` and Bob's `meas_b` gives `b`.
    pub fn predict_lhv(&self, meas_a: &str, meas_b: &str, a: u8, b: u8) -> Result<Scalar, ModelError> {
        check_bit(a)?;
        check_bit(b)?;
        let (i, j) = (self.setting_index(meas_a)?, self.setting_index(meas_b)?);
        let mut total = Scalar::zero(self.mode);
        for (s, w) in self.strategies() {
            if s.bit(Side::A, i) == a && s.bit(Side::B, j) == b && !w.is_zero() {
                total = total.add(w)?;
            }
        }
        Ok(total)
    }

    /// Probability that `side`'s `meas` gives `bit`.
    pub fn marginal(&self, side: Side, meas: &str, bit: u8) -> Result<Scalar, ModelError> {
        check_bit(bit)?;
        let i = self.setting_index(meas)?;
        let mut total = Scalar::zero(self.mode);
        for (s, w) in self.strategies() {
            if s.bit(side, i) == bit && !w.is_zero() {
                total = total.add(w)?;
            }
        }
        Ok(total)
    }
}

// ---------------------------------------------------------------------------
// JSON

#[derive(Serialize, Deserialize)]
struct ModelJson {
    cells: Vec<String>,
    epistemics: IndexMap<String, IndexMap<String, Scalar>>,
    responses: IndexMap<String, IndexMap<String, [Scalar; 2]>>,
}

impl Serialize for OntologicalModel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let cells = &self.space.cells;
        let epistemics = self
            .states
            .iter()
            .zip(&self.epistemics)
            .map(|(s, e)| {
                let weights = cells
                    .iter()
                    .zip(&e.weights)
                    .filter(|(_, w)| !w.is_zero())
                    .map(|(c, w)| (c.clone(), w.clone()))
                    .collect();
                (s.clone(), weights)
            })
            .collect();
        let responses = self
            .responses
            .measurements
            .iter()
            .zip(&self.responses.table)
            .map(|(m, row)| (m.clone(), cells.iter().cloned().zip(row.iter().cloned()).collect()))
            .collect();
        ModelJson { cells: cells.clone(), epistemics, responses }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for OntologicalModel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let raw = ModelJson::deserialize(deserializer)?;
        let build = || -> Result<OntologicalModel, ModelError> {
            let space = OnticSpace::new(raw.cells.clone())?;
            let mode = raw
                .epistemics
                .values()
                .flat_map(|m| m.values())
                .chain(raw.responses.values().flat_map(|m| m.values().flatten()))
                .map(Scalar::mode)
                .next()
                .unwrap_or(Mode::Exact);
            let mut epistemics = Vec::new();
            for (state, entries) in &raw.epistemics {
                let mut weights = vec![Scalar::zero(mode); space.len()];
                for (cell, w) in entries {
                    let i = space.index_of(cell).ok_or_else(|| ModelError::UnknownCell(cell.clone()))?;
                    weights[i] = w.clone();
                }
                epistemics.push((state.clone(), EpistemicState { weights }));
            }
            let mut measurements = Vec::new();
            let mut table = Vec::new();
            for (meas, entries) in &raw.responses {
                let mut row = Vec::with_capacity(space.len());
                for cell in space.cells() {
                    let p = entries.get(cell).ok_or_else(|| ModelError::UnknownCell(format!("{meas}/{cell}")))?;
                    row.push(p.clone());
                }
                if let Some(extra) = entries.keys().find(|c| space.index_of(c).is_none()) {
                    return Err(ModelError::UnknownCell(extra.clone()));
                }
                measurements.push(meas.clone());
                table.push(row);
            }
            OntologicalModel::new(space, epistemics, ResponseFunctions::new(measurements, table)?)
        };
        build().map_err(D::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct LhvJson {
    settings: Vec<String>,
    weights: IndexMap<String, Scalar>,
}

impl Serialize for LocalHVModel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let m = self.settings.len();
        let weights = self.strategies().filter(|(_, w)| !w.is_zero()).map(|(s, w)| (s.key(m), w.clone())).collect();
        LhvJson { settings: self.settings.clone(), weights }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for LocalHVModel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let raw = LhvJson::deserialize(deserializer)?;
        let m = raw.settings.len();
        let mode = raw.weights.values().next().map(Scalar::mode).unwrap_or(Mode::Exact);
        let entries = raw
            .weights
            .iter()
            .map(|(k, w)| Ok((Strategy::parse_key(k, m)?, w.clone())))
            .collect::<Result<Vec<_>, ModelError>>()
            .map_err(D::Error::custom)?;
        LocalHVModel::from_weight_map(raw.settings, mode, entries).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qubit::canonical_scenario;

    fn q(n: i64, d: i64) -> Scalar {
        Scalar::from_ratio(Mode::Exact, n, d)
    }

    fn coin() -> [Scalar; 2] {
        [q(1, 2), q(1, 2)]
    }

    fn labels(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    /// Two cells splitting [0,1) in half; Z+X reads the half.
    fn two_cell_model() -> OntologicalModel {
        let space = OnticSpace::new(labels(&["lo", "hi"])).unwrap();
        let responses = ResponseFunctions::deterministic(Mode::Exact, labels(&["Z+X"]), 2, |_, c| c as u8).unwrap();
        let epistemics = vec![
            ("pi/4".to_string(), EpistemicState::new(vec![q(1, 1), q(0, 1)])),
            ("5pi/4".to_string(), EpistemicState::new(vec![q(0, 1), q(1, 1)])),
        ];
        OntologicalModel::new(space, epistemics, responses).unwrap()
    }

    #[test]
    fn two_cell_predictions() {
        let m = two_cell_model();
        assert_eq!(m.predict("pi/4", "Z+X", 0).unwrap(), q(1, 1));
        assert_eq!(m.predict("5pi/4", "Z+X", 0).unwrap(), q(0, 1));
        let mix = m.mixture_measure("pi/4", "5pi/4").unwrap();
        assert_eq!(mix.weights(), &[q(1, 2), q(1, 2)]);
        assert_eq!(m.mixture_measure("pi/4", "pi/4").unwrap(), m.epistemic("pi/4").unwrap().clone());
        assert!(matches!(m.predict("0", "Z+X", 0), Err(ModelError::UnknownState(_))));
        assert!(matches!(m.predict("pi/4", "Z", 0), Err(ModelError::UnknownMeasurement(_))));
    }

    #[test]
    fn fair_coin_predicts_half() {
        let space = OnticSpace::new(labels(&["a", "b", "c"])).unwrap();
        let responses = ResponseFunctions::new(labels(&["Z"]), vec![vec![coin(), coin(), coin()]]).unwrap();
        let uniform = EpistemicState::new(vec![q(1, 3); 3]);
        let m = OntologicalModel::new(space, vec![("s".into(), uniform)], responses).unwrap();
        assert_eq!(m.predict("s", "Z", 0).unwrap(), q(1, 2));
        assert_eq!(m.predict("s", "Z", 1).unwrap(), q(1, 2));
    }

    #[test]
    fn validation_rejects_bad_models() {
        let space = OnticSpace::new(labels(&["a", "b"])).unwrap();
        let responses = ResponseFunctions::new(labels(&["Z"]), vec![vec![coin(), coin()]]).unwrap();
        let bad = EpistemicState::new(vec![q(1, 2), q(1, 4)]);
        assert!(matches!(
            OntologicalModel::new(space.clone(), vec![("s".into(), bad)], responses.clone()),
            Err(ModelError::NotNormalized { .. })
        ));
        let neg = EpistemicState::new(vec![q(3, 2), q(-1, 2)]);
        assert!(matches!(
            OntologicalModel::new(space.clone(), vec![("s".into(), neg)], responses.clone()),
            Err(ModelError::NegativeWeight(_))
        ));
        let mixed = EpistemicState::new(vec![q(1, 2), Scalar::Float(0.5)]);
        assert!(matches!(
            OntologicalModel::new(space.clone(), vec![("s".into(), mixed)], responses),
            Err(ModelError::Scalar(ScalarError::MixedBackend))
        ));
        assert_eq!(OnticSpace::new(vec![]), Err(ModelError::EmptySpace));
        assert!(matches!(OnticSpace::new(labels(&["a", "a"])), Err(ModelError::DuplicateLabel(_))));
    }

    #[test]
    fn product_model_matches_born_but_not_decompositions() {
        let scenario = canonical_scenario();
        let model = OntologicalModel::product_model(&scenario).unwrap();
        assert_eq!(model.space().len(), 8);
        let quarter = Scalar::Exact(crate::scalar::ExactScalar::new(
            crate::scalar::rational(1, 2),
            crate::scalar::rational(1, 4),
        ));
        assert_eq!(model.predict("0", "Z+X", 0).unwrap(), quarter);

        let restricted =
            Scenario::new(Mode::Exact, scenario.measurements().to_vec(), scenario.states().to_vec(), vec![]).unwrap();
        let report = model.validate(&restricted).unwrap();
        assert_eq!(report.born.len(), 36);
        assert!(report.quantum_compatible);
        assert!(report.mixture_differences.is_empty());

        let report = model.validate(&scenario).unwrap();
        assert!(report.quantum_compatible);
        assert!(!report.decompositions_equal);
        assert_eq!(report.mixture_differences.len(), 16);
        assert!(report.mixture_differences.iter().any(|d| !d.difference.is_zero()));
    }

    #[test]
    fn product_mixture_has_uniform_z_marginal() {
        let model = OntologicalModel::product_model(&canonical_scenario()).unwrap();
        let mix = model.mixture_measure("0", "1").unwrap();
        // Z is bit 0 of the cell index
        let z0 = Scalar::sum(Mode::Exact, mix.weights().iter().step_by(2)).unwrap();
        assert_eq!(z0, q(1, 2));
    }

    #[test]
    fn empty_scenario_gives_empty_report() {
        let scenario = Scenario::new(Mode::Exact, vec![], vec![], vec![]).unwrap();
        let report = two_cell_model().validate(&scenario).unwrap();
        assert!(report.born.is_empty() && report.mixture_differences.is_empty() && report.missing.is_empty());
    }

    #[test]
    fn canonicalize_coin_model() {
        let space = OnticSpace::new(labels(&["only"])).unwrap();
        let responses =
            ResponseFunctions::new(labels(&["Z", "Z+X", "X"]), vec![vec![coin()], vec![coin()], vec![coin()]]).unwrap();
        let m =
            OntologicalModel::new(space, vec![("s".into(), EpistemicState::new(vec![q(1, 1)]))], responses).unwrap();
        let c = m.canonicalize_deterministic();
        assert_eq!(c.space().len(), 8);
        assert!(c.epistemic("s").unwrap().weights().iter().all(|w| *w == q(1, 8)));
        assert!(c.responses().is_deterministic());
    }

    #[test]
    fn canonicalize_deterministic_is_identity() {
        let m = two_cell_model();
        assert_eq!(m.canonicalize_deterministic(), m);
    }

    #[test]
    fn canonicalize_preserves_predictions() {
        // Z responses on the two halves tuned so that |π/4⟩ gets its Born statistics
        let space = OnticSpace::new(labels(&["lo", "hi"])).unwrap();
        let born0 = Scalar::Exact(crate::scalar::ExactScalar::new(
            crate::scalar::rational(1, 2),
            crate::scalar::rational(1, 4),
        ));
        let born1 = Scalar::one(Mode::Exact).sub(&born0).unwrap();
        let responses = ResponseFunctions::new(
            labels(&["Z+X", "Z"]),
            vec![
                vec![[q(1, 1), q(0, 1)], [q(0, 1), q(1, 1)]],
                vec![[born0.clone(), born1.clone()], [born1.clone(), born0.clone()]],
            ],
        )
        .unwrap();
        let epistemics = vec![
            ("pi/4".to_string(), EpistemicState::new(vec![q(1, 1), q(0, 1)])),
            ("5pi/4".to_string(), EpistemicState::new(vec![q(0, 1), q(1, 1)])),
            ("mixed".to_string(), EpistemicState::new(vec![q(1, 3), q(2, 3)])),
        ];
        let m = OntologicalModel::new(space, epistemics, responses).unwrap();
        let c = m.canonicalize_deterministic();
        assert_eq!(c.space().len(), 4);
        for state in m.states() {
            for meas in ["Z+X", "Z"] {
                for o in 0..2 {
                    assert_eq!(m.predict(state, meas, o).unwrap(), c.predict(state, meas, o).unwrap());
                }
            }
        }
        assert_eq!(m.predict("pi/4", "Z", 0).unwrap(), born0);
        let mix_before = m.mixture_measure("pi/4", "5pi/4").unwrap();
        let mix_after = c.mixture_measure("pi/4", "5pi/4").unwrap();
        let total = |e: &EpistemicState| Scalar::sum(Mode::Exact, e.weights()).unwrap();
        assert_eq!(total(&mix_before), total(&mix_after));
        // quotient merges nothing here: all four refined cells respond differently
        assert_eq!(c.quotient_by_responses().space().len(), 4);
    }

    #[test]
    fn quotient_merges_identical_cells() {
        let space = OnticSpace::new(labels(&["a", "b", "c"])).unwrap();
        let responses =
            ResponseFunctions::deterministic(Mode::Exact, labels(&["Z"]), 3, |_, c| (c == 2) as u8).unwrap();
        let m = OntologicalModel::new(
            space,
            vec![("s".into(), EpistemicState::new(vec![q(1, 4), q(1, 4), q(1, 2)]))],
            responses,
        )
        .unwrap();
        let quotient = m.quotient_by_responses();
        assert_eq!(quotient.space().cells(), &["0".to_string(), "1".to_string()]);
        assert_eq!(quotient.epistemic("s").unwrap().weights(), &[q(1, 2), q(1, 2)]);
    }

    #[test]
    fn model_json_roundtrip() {
        let model = OntologicalModel::product_model(&canonical_scenario()).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let back: OntologicalModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, model);
        let text = r#"{"cells":["lo","hi"],"epistemics":{"s":{"lo":"1/2","hi":"1/2"}},"responses":{"Z":{"lo":["1","0"],"hi":["0","1"]}}}"#;
        let m: OntologicalModel = serde_json::from_str(text).unwrap();
        assert_eq!(m.predict("s", "Z", 0).unwrap(), q(1, 2));
        let missing = r#"{"cells":["lo","hi"],"epistemics":{"s":{"lo":"1"}},"responses":{"Z":{"lo":["1","0"]}}}"#;
        assert!(serde_json::from_str::<OntologicalModel>(missing).is_err());
    }

    fn settings() -> Vec<String> {
        labels(&["Z", "Z+X", "X"])
    }

    #[test]
    fn strategy_keys() {
        let s = Strategy { alice: 0b001, bob: 0b110 };
        assert_eq!(s.key(3), "100|011");
        assert_eq!(Strategy::parse_key("100|011", 3).unwrap(), s);
        assert_eq!(Strategy::from_index(s.index(3), 3), s);
        assert!(Strategy::parse_key("10|011", 3).is_err());
        assert!(Strategy::parse_key("102|011", 3).is_err());
    }

    #[test]
    fn point_mass_and_uniform_lhv() {
        let point =
            LocalHVModel::from_weight_map(settings(), Mode::Exact, [(Strategy { alice: 0, bob: 0 }, q(1, 1))]).unwrap();
        assert_eq!(point.predict_lhv("Z", "Z", 0, 0).unwrap(), q(1, 1));
        let uniform = LocalHVModel::uniform(settings(), Mode::Exact).unwrap();
        assert_eq!(uniform.weights().len(), 64);
        for a in settings() {
            for b in settings() {
                for x in 0..2 {
                    for y in 0..2 {
                        assert_eq!(uniform.predict_lhv(&a, &b, x, y).unwrap(), q(1, 4));
                    }
                }
            }
        }
        assert!(matches!(uniform.predict_lhv("Y", "Z", 0, 0), Err(ModelError::UnknownSetting(_))));
    }

    #[test]
    fn lhv_validation() {
        assert!(matches!(LocalHVModel::new(settings(), vec![q(1, 128); 64]), Err(ModelError::NotNormalized { .. })));
        assert!(matches!(LocalHVModel::new(settings(), vec![q(1, 64); 63]), Err(ModelError::Length { .. })));
        assert!(matches!(
            LocalHVModel::new((0..9).map(|i| i.to_string()).collect(), vec![]),
            Err(ModelError::TooManySettings(9))
        ));
    }

    #[test]
    fn lhv_no_signalling() {
        let weights: Vec<Scalar> = (0..64).map(|i| q(2 * (i % 5) + 1, 1)).collect();
        let total = Scalar::sum(Mode::Exact, &weights).unwrap();
        let weights = weights.iter().map(|w| w.div(&total).unwrap()).collect();
        let lhv = LocalHVModel::new(settings(), weights).unwrap();
        for ma in settings() {
            for a in 0..2 {
                let direct = lhv.marginal(Side::A, &ma, a).unwrap();
                for mb in settings() {
                    let summed = lhv
                        .predict_lhv(&ma, &mb, a, 0)
                        .unwrap()
                        .add(&lhv.predict_lhv(&ma, &mb, a, 1).unwrap())
                        .unwrap();
                    assert_eq!(summed, direct);
                }
            }
        }
    }

    #[test]
    fn lhv_json_roundtrip() {
        let lhv = LocalHVModel::from_weight_map(
            settings(),
            Mode::Exact,
            [(Strategy { alice: 1, bob: 1 }, q(1, 2)), (Strategy { alice: 6, bob: 6 }, q(1, 2))],
        )
        .unwrap();
        let json = serde_json::to_value(&lhv).unwrap();
        assert_eq!(json["weights"].as_object().unwrap().len(), 2);
        assert!(json["weights"].get("100|100").is_some());
        let back: LocalHVModel = serde_json::from_value(json).unwrap();
        assert_eq!(back, lhv);
    }
}
