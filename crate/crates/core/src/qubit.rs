//! Planar-qubit kernel: states and binary measurements in the x–z Bloch plane.
//!
//! A pure state at Bloch angle θ is `cos(θ/2)|0⟩ + sin(θ/2)|1⟩`. A measurement
//! at angle θ projects outcome 0 onto `|θ⟩` and outcome 1 onto `|θ+π⟩`. In exact
//! mode angles are integer multiples of π/4, which keeps every probability in
//! ℚ(√2).

use std::collections::HashSet;
use std::f64::consts::{PI, TAU};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{ExactScalar, Mode, Scalar, ScalarError, FLOAT_TOLERANCE};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QubitError {
    #[error(transparent)]
    Scalar(#[from] ScalarError),
    #[error("outcome must be 0 or 1, got {0}")]
    InvalidOutcome(u8),
    #[error("need at least {needed} measurements, scenario has {got}")]
    TooFewMeasurements { needed: usize, got: usize },
    #[error("decomposition ({0}, {1}) is not an antipodal pair")]
    NotAntipodal(String, String),
    #[error("state index {0} out of range")]
    StateIndexOutOfRange(usize),
    #[error("duplicate label {0:?}")]
    DuplicateLabel(String),
    #[error("angle {0} is not valid in {1} mode")]
    InvalidAngle(String, Mode),
}

/// Bloch angle: `k·π/4` in exact mode, radians in float mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlanarAngle {
    /// Multiple of π/4, reduced mod 8.
    Exact(u8),
    /// Radians in `[0, 2π)`.
    Float(f64),
}

impl PlanarAngle {
    pub fn quarter_pi(k: i64) -> Self {
        PlanarAngle::Exact(k.rem_euclid(8) as u8)
    }

    pub fn radians(theta: f64) -> Self {
        let r = theta.rem_euclid(TAU);
        // rem_euclid can round up to exactly 2π
        PlanarAngle::Float(if r >= TAU { 0.0 } else { r })
    }

    pub fn mode(&self) -> Mode {
        match self {
            PlanarAngle::Exact(_) => Mode::Exact,
            PlanarAngle::Float(_) => Mode::Float,
        }
    }

    pub fn to_radians(&self) -> f64 {
        match *self {
            PlanarAngle::Exact(k) => k as f64 * PI / 4.0,
            PlanarAngle::Float(r) => r,
        }
    }

    /// The angle shifted by π (the orthogonal state / opposite outcome).
    pub fn antipode(&self) -> Self {
        match *self {
            PlanarAngle::Exact(k) => PlanarAngle::quarter_pi(k as i64 + 4),
            PlanarAngle::Float(r) => PlanarAngle::radians(r + PI),
        }
    }

    pub fn is_antipodal_to(&self, other: &PlanarAngle) -> Result<bool, QubitError> {
        match (self.antipode(), other) {
            (PlanarAngle::Exact(k), PlanarAngle::Exact(j)) => Ok(k == *j),
            (PlanarAngle::Float(x), PlanarAngle::Float(y)) => {
                let d = (x - y).rem_euclid(TAU);
                Ok(d.min(TAU - d) <= FLOAT_TOLERANCE)
            }
            _ => Err(ScalarError::MixedBackend.into()),
        }
    }

    /// `cos(self − other)`, exact for multiples of π/4.
    pub fn cos_difference(&self, other: &PlanarAngle) -> Result<Scalar, QubitError> {
        match (self, other) {
            (PlanarAngle::Exact(k), PlanarAngle::Exact(j)) => {
                let d = (*k as i64 - *j as i64).rem_euclid(8);
                let half = crate::scalar::rational(1, 2);
                let zero = crate::scalar::rational(0, 1);
                let value = match d {
                    0 => ExactScalar::from_int(1),
                    1 | 7 => ExactScalar::new(zero, half),
                    2 | 6 => ExactScalar::from_int(0),
                    3 | 5 => ExactScalar::new(zero, -half),
                    _ => ExactScalar::from_int(-1),
                };
                Ok(Scalar::Exact(value))
            }
            (PlanarAngle::Float(x), PlanarAngle::Float(y)) => Ok(Scalar::Float((x - y).cos())),
            _ => Err(ScalarError::MixedBackend.into()),
        }
    }
}

impl fmt::Display for PlanarAngle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanarAngle::Exact(k) => write!(f, "{k}π/4"),
            PlanarAngle::Float(r) => write!(f, "{r}"),
        }
    }
}

/// Conventional name of a state at an exact angle (`0`, `1`, `+`, `-`, `pi/4`, ...).
pub fn state_name(angle: &PlanarAngle) -> String {
    match angle {
        PlanarAngle::Exact(k) => match k {
            0 => "0".into(),
            4 => "1".into(),
            2 => "+".into(),
            6 => "-".into(),
            1 => "pi/4".into(),
            k => format!("{k}pi/4"),
        },
        PlanarAngle::Float(r) => format!("theta={r:.6}"),
    }
}

/// Conventional name of a measurement direction (`Z`, `Z+X`, `X`, ...).
pub fn measurement_name(angle: &PlanarAngle, index: usize) -> String {
    match angle {
        PlanarAngle::Exact(k) => ["Z", "Z+X", "X", "X-Z", "-Z", "-Z-X", "-X", "Z-X"][*k as usize].into(),
        PlanarAngle::Float(_) => format!("M{}", index + 1),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanarState {
    pub label: String,
    pub angle: PlanarAngle,
}

impl PlanarState {
    pub fn new(label: impl Into<String>, angle: PlanarAngle) -> Self {
        PlanarState { label: label.into(), angle }
    }

    pub fn at(angle: PlanarAngle) -> Self {
        PlanarState { label: state_name(&angle), angle }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanarMeasurement {
    pub label: String,
    pub angle: PlanarAngle,
}

impl PlanarMeasurement {
    pub fn new(label: impl Into<String>, angle: PlanarAngle) -> Self {
        PlanarMeasurement { label: label.into(), angle }
    }
}

fn unique_label(used: &mut HashSet<String>, base: String) -> String {
    let mut label = base.clone();
    let mut n = 2;
    while !used.insert(label.clone()) {
        label = format!("{base}#{n}");
        n += 1;
    }
    label
}

fn check_bit(bit: u8) -> Result<(), QubitError> {
    if bit > 1 {
        Err(QubitError::InvalidOutcome(bit))
    } else {
        Ok(())
    }
}

/// `(1 + sign·c) / denom` in the backend of `c`.
fn affine(c: &Scalar, sign: i64, denom: i64) -> Result<Scalar, QubitError> {
    let mode = c.mode();
    let signed = if sign < 0 { c.neg() } else { c.clone() };
    let one = Scalar::one(mode);
    Ok(one.add(&signed)?.div(&Scalar::from_ratio(mode, denom, 1))?)
}

/// Born probability of `outcome` when `meas` is applied to `state`:
/// `(1 ± cos(θ_meas − θ_state)) / 2`.
pub fn born_probability(state: &PlanarState, meas: &PlanarMeasurement, outcome: u8) -> Result<Scalar, QubitError> {
    check_bit(outcome)?;
    let c = meas.angle.cos_difference(&state.angle)?;
    affine(&c, if outcome == 0 { 1 } else { -1 }, 2)
}

/// Joint outcome probability for the Bell state `(|00⟩ + |11⟩)/√2` with Alice
/// measuring `meas_a` and Bob `meas_b`: `(1 + (−1)^(a⊕b) cos(θ_A − θ_B)) / 4`.
pub fn bell_joint(meas_a: &PlanarMeasurement, meas_b: &PlanarMeasurement, a: u8, b: u8) -> Result<Scalar, QubitError> {
    check_bit(a)?;
    check_bit(b)?;
    let c = meas_a.angle.cos_difference(&meas_b.angle)?;
    affine(&c, if a == b { 1 } else { -1 }, 4)
}

/// State of the other half of the Bell pair once `meas_b` gave outcome `b`.
/// Amplitudes are real, so no conjugation is involved.
pub fn steered_state(meas_b: &PlanarMeasurement, b: u8) -> Result<PlanarState, QubitError> {
    check_bit(b)?;
    let angle = if b == 0 { meas_b.angle } else { meas_b.angle.antipode() };
    Ok(PlanarState::at(angle))
}

/// Which joint event the Wigner-type inequality counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WignerConvention {
    /// `P(a=0, b=1)`.
    Strict01,
    /// `P(a≠b)`.
    Differ,
}

/// A set of measurements, the pure states they are evaluated on, and the
/// pairs of states declared to be equal-weight decompositions of the
/// maximally mixed state.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    mode: Mode,
    measurements: Vec<PlanarMeasurement>,
    states: Vec<PlanarState>,
    decompositions: Vec<(usize, usize)>,
}

impl Scenario {
    pub fn new(
        mode: Mode,
        measurements: Vec<PlanarMeasurement>,
        states: Vec<PlanarState>,
        decompositions: Vec<(usize, usize)>,
    ) -> Result<Self, QubitError> {
        let angles = measurements.iter().map(|m| &m.angle).chain(states.iter().map(|s| &s.angle));
        for angle in angles {
            if angle.mode() != mode {
                return Err(ScalarError::MixedBackend.into());
            }
        }
        let mut seen = HashSet::new();
        for label in measurements.iter().map(|m| &m.label) {
            if !seen.insert(label) {
                return Err(QubitError::DuplicateLabel(label.clone()));
            }
        }
        let mut seen = HashSet::new();
        for label in states.iter().map(|s| &s.label) {
            if !seen.insert(label) {
                return Err(QubitError::DuplicateLabel(label.clone()));
            }
        }
        for &(i, j) in &decompositions {
            let si = states.get(i).ok_or(QubitError::StateIndexOutOfRange(i))?;
            let sj = states.get(j).ok_or(QubitError::StateIndexOutOfRange(j))?;
            if !si.angle.is_antipodal_to(&sj.angle)? {
                return Err(QubitError::NotAntipodal(si.label.clone(), sj.label.clone()));
            }
        }
        Ok(Scenario { mode, measurements, states, decompositions })
    }

    /// Measurements at the given angles, both eigenstates of each, and one
    /// decomposition per measurement. Repeated labels get a `#n` suffix.
    pub fn from_measurement_angles(angles: &[PlanarAngle]) -> Result<Self, QubitError> {
        let mode = angles.first().map(|a| a.mode()).unwrap_or(Mode::Exact);
        let mut measurements = Vec::new();
        let mut states = Vec::new();
        let mut decompositions = Vec::new();
        let mut meas_labels = HashSet::new();
        let mut state_labels = HashSet::new();
        for (i, angle) in angles.iter().enumerate() {
            let label = unique_label(&mut meas_labels, measurement_name(angle, i));
            measurements.push(PlanarMeasurement::new(label, *angle));
            let idx = states.len();
            for a in [*angle, angle.antipode()] {
                states.push(PlanarState::new(unique_label(&mut state_labels, state_name(&a)), a));
            }
            decompositions.push((idx, idx + 1));
        }
        Scenario::new(mode, measurements, states, decompositions)
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn measurements(&self) -> &[PlanarMeasurement] {
        &self.measurements
    }

    pub fn states(&self) -> &[PlanarState] {
        &self.states
    }

    pub fn decompositions(&self) -> &[(usize, usize)] {
        &self.decompositions
    }

    pub fn measurement(&self, label: &str) -> Option<&PlanarMeasurement> {
        self.measurements.iter().find(|m| m.label == label)
    }

    pub fn state(&self, label: &str) -> Option<&PlanarState> {
        self.states.iter().find(|s| s.label == label)
    }

    pub fn state_index(&self, label: &str) -> Option<usize> {
        self.states.iter().position(|s| s.label == label)
    }

    /// Decomposition pairs as state labels.
    pub fn decomposition_labels(&self) -> Vec<(String, String)> {
        self.decompositions.iter().map(|&(i, j)| (self.states[i].label.clone(), self.states[j].label.clone())).collect()
    }

    /// Keeps only the listed measurements (by label), their eigenstates and
    /// the decompositions made of those states.
    pub fn restricted_to(&self, labels: &[&str]) -> Result<Scenario, QubitError> {
        let measurements: Vec<_> =
            self.measurements.iter().filter(|m| labels.contains(&m.label.as_str())).cloned().collect();
        let keep: Vec<bool> = self
            .states
            .iter()
            .map(|s| measurements.iter().any(|m| m.angle == s.angle || m.angle.antipode() == s.angle))
            .collect();
        let mut remap = vec![None; self.states.len()];
        let mut states = Vec::new();
        for (i, s) in self.states.iter().enumerate() {
            if keep[i] {
                remap[i] = Some(states.len());
                states.push(s.clone());
            }
        }
        let decompositions = self.decompositions.iter().filter_map(|&(i, j)| Some((remap[i]?, remap[j]?))).collect();
        Scenario::new(self.mode, measurements, states, decompositions)
    }
}

/// Z, Z+X and X measurements, their six eigenstates and the three antipodal
/// decompositions of the maximally mixed state.
pub fn canonical_scenario() -> Scenario {
    let angles: Vec<_> = [0, 1, 2].into_iter().map(PlanarAngle::quarter_pi).collect();
    Scenario::from_measurement_angles(&angles).expect("canonical scenario is well formed")
}

/// The canonical scenario with float angles.
pub fn canonical_scenario_float() -> Scenario {
    let angles: Vec<_> = [0.0, PI / 4.0, PI / 2.0].into_iter().map(PlanarAngle::radians).collect();
    let mut s = Scenario::from_measurement_angles(&angles).expect("canonical scenario is well formed");
    let canonical = canonical_scenario();
    for (m, c) in s.measurements.iter_mut().zip(canonical.measurements()) {
        m.label = c.label.clone();
    }
    for (st, c) in s.states.iter_mut().zip(canonical.states()) {
        st.label = c.label.clone();
    }
    s
}

/// `P(M₁,M₂) + P(M₂,M₃) − P(M₁,M₃)` on the Bell-state table, using the first
/// three measurements of `scenario`. Negative means the quantum prediction
/// violates the inequality.
pub fn wigner_inequality_value(scenario: &Scenario, convention: WignerConvention) -> Result<Scalar, QubitError> {
    let ms = scenario.measurements();
    if ms.len() < 3 {
        return Err(QubitError::TooFewMeasurements { needed: 3, got: ms.len() });
    }
    let event = |x: &PlanarMeasurement, y: &PlanarMeasurement| -> Result<Scalar, QubitError> {
        let p01 = bell_joint(x, y, 0, 1)?;
        match convention {
            WignerConvention::Strict01 => Ok(p01),
            WignerConvention::Differ => Ok(p01.add(&bell_joint(x, y, 1, 0)?)?),
        }
    };
    let lhs = event(&ms[0], &ms[1])?.add(&event(&ms[1], &ms[2])?)?;
    Ok(lhs.sub(&event(&ms[0], &ms[2])?)?)
}

// ---------------------------------------------------------------------------
// JSON

#[derive(Serialize, Deserialize)]
struct LabeledAngleJson {
    label: String,
    angle: serde_json::Number,
}

#[derive(Serialize, Deserialize)]
struct ScenarioJson {
    mode: Mode,
    measurements: Vec<LabeledAngleJson>,
    states: Vec<LabeledAngleJson>,
    decompositions: Vec<[usize; 2]>,
}

fn angle_to_json(angle: &PlanarAngle) -> serde_json::Number {
    match angle {
        PlanarAngle::Exact(k) => serde_json::Number::from(*k),
        PlanarAngle::Float(r) => serde_json::Number::from_f64(*r).unwrap_or_else(|| 0.into()),
    }
}

fn angle_from_json(mode: Mode, n: &serde_json::Number) -> Result<PlanarAngle, QubitError> {
    match mode {
        Mode::Exact => {
            n.as_i64().map(PlanarAngle::quarter_pi).ok_or_else(|| QubitError::InvalidAngle(n.to_string(), mode))
        }
        Mode::Float => n
            .as_f64()
            .filter(|x| x.is_finite())
            .map(PlanarAngle::radians)
            .ok_or_else(|| QubitError::InvalidAngle(n.to_string(), mode)),
    }
}

impl Serialize for Scenario {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let labeled = |label: &str, angle: &PlanarAngle| LabeledAngleJson {
            label: label.to_string(),
            angle: angle_to_json(angle),
        };
        ScenarioJson {
            mode: self.mode,
            measurements: self.measurements.iter().map(|m| labeled(&m.label, &m.angle)).collect(),
            states: self.states.iter().map(|s| labeled(&s.label, &s.angle)).collect(),
            decompositions: self.decompositions.iter().map(|&(i, j)| [i, j]).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Scenario {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let raw = ScenarioJson::deserialize(deserializer)?;
        let mode = raw.mode;
        let measurements = raw
            .measurements
            .iter()
            .map(|m| Ok(PlanarMeasurement::new(m.label.clone(), angle_from_json(mode, &m.angle)?)))
            .collect::<Result<Vec<_>, QubitError>>()
            .map_err(D::Error::custom)?;
        let states = raw
            .states
            .iter()
            .map(|s| Ok(PlanarState::new(s.label.clone(), angle_from_json(mode, &s.angle)?)))
            .collect::<Result<Vec<_>, QubitError>>()
            .map_err(D::Error::custom)?;
        let decompositions = raw.decompositions.iter().map(|&[i, j]| (i, j)).collect();
        Scenario::new(mode, measurements, states, decompositions).map_err(D::Error::custom)
    }
}
