//! Hidden-variable questions as LP feasibility problems.
//!
//! Both questions reduce to "is there `x ≥ 0` with `Ax = b`":
//!
//! * single system: one measure per state over deterministic cells, matching
//!   every Born probability, optionally with equal mixture measures for all
//!   declared decompositions ([`build_prop1`]);
//! * Bell pair: one weight per pair of local deterministic strategies,
//!   matching every joint probability of the Bell state ([`build_prop2`]).
//!
//! Every row carries a [`RowLabel`] so certificates can be read back as
//! statements about probabilities, in particular as Bell-type inequalities
//! ([`extract_inequality`]).

use std::cmp::Ordering;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::ontology::{bits_label, ModelError, Side, Strategy};
use crate::qubit::{bell_joint, born_probability, QubitError, Scenario, WignerConvention};
use crate::scalar::{Mode, Scalar, ScalarError};
use crate::simplex::{self, FarkasCertificate, LpResult, SimplexError, VerificationError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeasibilityError {
    #[error(transparent)]
    Scalar(#[from] ScalarError),
    #[error(transparent)]
    Qubit(#[from] QubitError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Simplex(#[from] SimplexError),
    #[error("exact arithmetic requested for a float-mode scenario")]
    FloatModeWithExactRequest,
    #[error("certificate does not verify: {0}")]
    UnverifiedCertificate(VerificationError),
    #[error("certificate uses row {0} that is not a correlation or normalization row")]
    NotABellProblem(String),
    #[error("too many measurements for a strategy enumeration: {0}")]
    TooManySettings(usize),
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("internal invariant violated: {0}")]
    InvariantBreach(String),
}

/// What a constraint row asserts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RowLabel {
    /// Total mass 1 (of one state's measure, or of the strategy distribution).
    Normalization { state: Option<String> },
    /// Probability of `outcome` for `measurement` on `state` equals the Born value.
    Born { state: String, measurement: String, outcome: u8 },
    /// `P(a, b | setting_a, setting_b)` equals the Bell-state value.
    Correlation { setting_a: String, setting_b: String, a: u8, b: u8 },
    /// Mixture measure of `reference` equals that of `other` on `cell`.
    DecompositionEqual { reference: (String, String), other: (String, String), cell: String },
}

impl RowLabel {
    /// Rows whose right-hand side is a quantum prediction.
    pub fn is_soft(&self) -> bool {
        matches!(self, RowLabel::Born { .. } | RowLabel::Correlation { .. })
    }
}

impl fmt::Display for RowLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowLabel::Normalization { state: Some(s) } => write!(f, "normalization[{s}]"),
            RowLabel::Normalization { state: None } => write!(f, "normalization"),
            RowLabel::Born { state, measurement, outcome } => write!(f, "born[{state},{measurement},{outcome}]"),
            RowLabel::Correlation { setting_a, setting_b, a, b } => write!(f, "P({a}{b}|{setting_a},{setting_b})"),
            RowLabel::DecompositionEqual { reference, other, cell } => {
                write!(f, "decomp-equal[({},{})=({},{}),{cell}]", reference.0, reference.1, other.0, other.1)
            }
        }
    }
}

/// `Ax = b, x ≥ 0` with labelled rows and columns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpProblem {
    pub mode: Mode,
    pub columns: Vec<String>,
    pub rows: Vec<RowLabel>,
    pub a: Vec<Vec<Scalar>>,
    pub b: Vec<Scalar>,
}

impl LpProblem {
    fn new(mode: Mode, columns: Vec<String>) -> Self {
        LpProblem { mode, columns, rows: Vec::new(), a: Vec::new(), b: Vec::new() }
    }

    fn push_row(&mut self, label: RowLabel, coefficients: Vec<Scalar>, rhs: Scalar) {
        debug_assert_eq!(coefficients.len(), self.columns.len());
        self.rows.push(label);
        self.a.push(coefficients);
        self.b.push(rhs);
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn solve(&self) -> Result<LpResult, FeasibilityError> {
        Ok(simplex::solve_feasibility(&self.a, &self.b)?)
    }

    pub fn column_index(&self, label: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prop1Options {
    /// Impose equal mixture measures across all declared decompositions.
    pub include_decomposition_equality: bool,
    /// Use the `2^m` outcome-deterministic cells; otherwise use the `3^m`
    /// cells whose responses are 0, 1/2 or 1 per measurement.
    pub deterministic_cells: bool,
    /// Refuse float-mode scenarios.
    pub require_exact: bool,
}

impl Default for Prop1Options {
    fn default() -> Self {
        Prop1Options { include_decomposition_equality: true, deterministic_cells: true, require_exact: false }
    }
}

/// Response table for the cells used by [`build_prop1`]:
/// `responses[cell][meas]` is the probability of outcome 0.
fn prop1_cells(mode: Mode, measurements: usize, deterministic: bool) -> (Vec<String>, Vec<Vec<Scalar>>) {
    if deterministic {
        let cells = (0..1u32 << measurements).map(|b| bits_label(b, measurements)).collect();
        let responses = (0..1u32 << measurements)
            .map(|b| (0..measurements).map(|m| Scalar::from_ratio(mode, 1 - (b >> m & 1) as i64, 1)).collect())
            .collect();
        (cells, responses)
    } else {
        let count = 3usize.pow(measurements as u32);
        let mut cells = Vec::with_capacity(count);
        let mut responses = Vec::with_capacity(count);
        for index in 0..count {
            let mut digits = Vec::with_capacity(measurements);
            let mut rest = index;
            for _ in 0..measurements {
                digits.push(rest % 3);
                rest /= 3;
            }
            cells.push(digits.iter().map(|d| ['0', 'h', '1'][*d]).collect());
            // digit 0 → outcome 0 surely, 1 → fair coin, 2 → outcome 1 surely
            responses.push(digits.iter().map(|d| Scalar::from_ratio(mode, 2 - *d as i64, 2)).collect());
        }
        (cells, responses)
    }
}

/// Single-system question: measures `μ_ψ(λ) ≥ 0` per state and cell.
pub fn build_prop1(scenario: &Scenario, options: Prop1Options) -> Result<LpProblem, FeasibilityError> {
    let mode = scenario.mode();
    if options.require_exact && mode == Mode::Float {
        return Err(FeasibilityError::FloatModeWithExactRequest);
    }
    let ms = scenario.measurements();
    let states = scenario.states();
    let (cells, responses) = prop1_cells(mode, ms.len(), options.deterministic_cells);
    let k = cells.len();
    let column = |state: usize, cell: usize| state * k + cell;
    let columns = states.iter().flat_map(|s| cells.iter().map(move |c| format!("mu[{}]({c})", s.label))).collect();
    let mut lp = LpProblem::new(mode, columns);
    let n = states.len() * k;
    let zero = Scalar::zero(mode);
    let one = Scalar::one(mode);

    for (si, state) in states.iter().enumerate() {
        let mut row = vec![zero.clone(); n];
        for c in 0..k {
            row[column(si, c)] = one.clone();
        }
        lp.push_row(RowLabel::Normalization { state: Some(state.label.clone()) }, row, one.clone());
    }
    for (si, state) in states.iter().enumerate() {
        for (mi, meas) in ms.iter().enumerate() {
            for outcome in 0..2u8 {
                let mut row = vec![zero.clone(); n];
                for c in 0..k {
                    let p0 = &responses[c][mi];
                    row[column(si, c)] = if outcome == 0 { p0.clone() } else { one.sub(p0)? };
                }
                let label = RowLabel::Born { state: state.label.clone(), measurement: meas.label.clone(), outcome };
                lp.push_row(label, row, born_probability(state, meas, outcome)?);
            }
        }
    }
    if options.include_decomposition_equality {
        if let Some((&(r0, r1), rest)) = scenario.decompositions().split_first() {
            let name = |i: usize, j: usize| (states[i].label.clone(), states[j].label.clone());
            for &(o0, o1) in rest {
                for (c, cell) in cells.iter().enumerate() {
                    let mut row = vec![zero.clone(); n];
                    // (μ_r0 + μ_r1 − μ_o0 − μ_o1)(λ) = 0, accumulated in case states repeat
                    for (s, sign) in [(r0, 1), (r1, 1), (o0, -1), (o1, -1)] {
                        let delta = Scalar::from_ratio(mode, sign, 1);
                        row[column(s, c)] = row[column(s, c)].add(&delta)?;
                    }
                    let label = RowLabel::DecompositionEqual {
                        reference: name(r0, r1),
                        other: name(o0, o1),
                        cell: cell.clone(),
                    };
                    lp.push_row(label, row, zero.clone());
                }
            }
        }
    }
    Ok(lp)
}

/// Bell-pair question: weights `p(s) ≥ 0` over the `4^m` strategy pairs.
pub fn build_prop2(scenario: &Scenario) -> Result<LpProblem, FeasibilityError> {
    let mode = scenario.mode();
    let ms = scenario.measurements();
    let m = ms.len();
    if m > crate::ontology::MAX_SETTINGS {
        return Err(FeasibilityError::TooManySettings(m));
    }
    let n = 1usize << (2 * m);
    let strategies: Vec<Strategy> = (0..n).map(|i| Strategy::from_index(i, m)).collect();
    let mut lp = LpProblem::new(mode, strategies.iter().map(|s| s.key(m)).collect());
    let zero = Scalar::zero(mode);
    let one = Scalar::one(mode);
    lp.push_row(RowLabel::Normalization { state: None }, vec![one.clone(); n], one.clone());
    for (i, ma) in ms.iter().enumerate() {
        for (j, mb) in ms.iter().enumerate() {
            for a in 0..2u8 {
                for b in 0..2u8 {
                    let row =
                        strategies
                            .iter()
                            .map(|s| {
                                if s.bit(Side::A, i) == a && s.bit(Side::B, j) == b {
                                    one.clone()
                                } else {
                                    zero.clone()
                                }
                            })
                            .collect();
                    let label =
                        RowLabel::Correlation { setting_a: ma.label.clone(), setting_b: mb.label.clone(), a, b };
                    lp.push_row(label, row, bell_joint(ma, mb, a, b)?);
                }
            }
        }
    }
    Ok(lp)
}

/// A built problem together with its verified answer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub problem: LpProblem,
    pub result: LpResult,
}

impl Check {
    fn run(problem: LpProblem) -> Result<Check, FeasibilityError> {
        let result = problem.solve()?;
        Ok(Check { problem, result })
    }

    pub fn is_feasible(&self) -> bool {
        self.result.is_feasible()
    }

    /// `yᵀb` for an infeasible result.
    pub fn margin(&self) -> Option<Scalar> {
        self.result.certificate().and_then(|c| c.verify(&self.problem.a, &self.problem.b).ok())
    }
}

pub fn check_prop1(scenario: &Scenario, options: Prop1Options) -> Result<Check, FeasibilityError> {
    Check::run(build_prop1(scenario, options)?)
}

pub fn check_prop2(scenario: &Scenario) -> Result<Check, FeasibilityError> {
    Check::run(build_prop2(scenario)?)
}

/// Smallest uniform deviation from the quantum predictions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinSlack {
    pub epsilon: Scalar,
    /// Minimizer over the original columns.
    pub x: Vec<Scalar>,
}

/// Minimizes `ε ≥ 0` such that some `x ≥ 0` satisfies the normalization and
/// decomposition rows exactly and every Born/correlation row within `ε`.
pub fn min_slack(problem: &LpProblem) -> Result<MinSlack, FeasibilityError> {
    let mode = problem.mode;
    let n = problem.num_columns();
    let soft: Vec<usize> = (0..problem.num_rows()).filter(|&i| problem.rows[i].is_soft()).collect();
    let k = soft.len();
    // columns: x (n) | ε | s⁺ (k) | s⁻ (k)
    let width = n + 1 + 2 * k;
    let eps = n;
    let zero = Scalar::zero(mode);
    let one = Scalar::one(mode);
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut t = 0;
    for (i, label) in problem.rows.iter().enumerate() {
        let mut row = problem.a[i].clone();
        row.resize(width, zero.clone());
        if !label.is_soft() {
            a.push(row);
            b.push(problem.b[i].clone());
            continue;
        }
        // Ax − ε + s⁺ = b   and   Ax + ε − s⁻ = b
        let mut upper = row.clone();
        upper[eps] = one.neg();
        upper[n + 1 + t] = one.clone();
        let mut lower = row;
        lower[eps] = one.clone();
        lower[n + 1 + k + t] = one.neg();
        a.push(upper);
        b.push(problem.b[i].clone());
        a.push(lower);
        b.push(problem.b[i].clone());
        t += 1;
    }
    let mut c = vec![zero; width];
    c[eps] = one;
    let optimum = simplex::solve_min(&c, &a, &b)?;
    if optimum.value.is_negative() {
        return Err(FeasibilityError::InvariantBreach("negative slack".into()));
    }
    Ok(MinSlack { epsilon: optimum.value, x: optimum.x[..n].to_vec() })
}

/// One coefficient of a Bell-type inequality.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BellTerm {
    pub setting_a: String,
    pub setting_b: String,
    pub a: u8,
    pub b: u8,
    pub coefficient: Scalar,
}

/// `Σ coefficient · P(a, b | setting_a, setting_b) ≤ bound`, valid for every
/// local hidden-variable model over `settings`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BellInequality {
    pub settings: Vec<String>,
    pub terms: Vec<BellTerm>,
    pub bound: Scalar,
    /// Rows of the generating certificate that carry nonzero weight.
    pub provenance: Vec<String>,
}

impl BellInequality {
    fn mode(&self) -> Mode {
        self.bound.mode()
    }

    /// Left-hand side on an arbitrary probability table.
    pub fn evaluate<E>(&self, mut table: impl FnMut(&str, &str, u8, u8) -> Result<Scalar, E>) -> Result<Scalar, E>
    where
        E: From<ScalarError>,
    {
        let mut total = Scalar::zero(self.mode());
        for t in &self.terms {
            let p = table(&t.setting_a, &t.setting_b, t.a, t.b)?;
            total = total.add(&t.coefficient.mul(&p)?)?;
        }
        Ok(total)
    }

    /// Largest left-hand side over all deterministic strategy pairs, and one
    /// strategy attaining it.
    pub fn lhv_maximum(&self) -> Result<(Scalar, Strategy), FeasibilityError> {
        let m = self.settings.len();
        if m > crate::ontology::MAX_SETTINGS {
            return Err(FeasibilityError::TooManySettings(m));
        }
        let index = |label: &str| {
            self.settings
                .iter()
                .position(|s| s == label)
                .ok_or_else(|| FeasibilityError::UnknownLabel(label.to_string()))
        };
        let terms = self
            .terms
            .iter()
            .map(|t| Ok((index(&t.setting_a)?, index(&t.setting_b)?, t)))
            .collect::<Result<Vec<_>, FeasibilityError>>()?;
        let mut best: Option<(Scalar, Strategy)> = None;
        for i in 0..1usize << (2 * m) {
            let s = Strategy::from_index(i, m);
            let mut value = Scalar::zero(self.mode());
            for (ia, ib, t) in &terms {
                if s.bit(Side::A, *ia) == t.a && s.bit(Side::B, *ib) == t.b {
                    value = value.add(&t.coefficient)?;
                }
            }
            let better = match &best {
                None => true,
                Some((v, _)) => value.compare(v)? == Ordering::Greater,
            };
            if better {
                best = Some((value, s));
            }
        }
        Ok(best.expect("at least one strategy"))
    }

    /// True iff no deterministic strategy exceeds the bound.
    pub fn holds_for_all_strategies(&self) -> Result<bool, FeasibilityError> {
        let (max, _) = self.lhv_maximum()?;
        Ok(max.compare(&self.bound)? != Ordering::Greater)
    }

    /// `LHS(Bell state) − bound`; positive means the quantum table violates it.
    pub fn quantum_violation(&self, scenario: &Scenario) -> Result<Scalar, FeasibilityError> {
        let lhs = self.evaluate(|sa, sb, a, b| -> Result<Scalar, FeasibilityError> {
            let ma = scenario.measurement(sa).ok_or_else(|| FeasibilityError::UnknownLabel(sa.to_string()))?;
            let mb = scenario.measurement(sb).ok_or_else(|| FeasibilityError::UnknownLabel(sb.to_string()))?;
            Ok(bell_joint(ma, mb, a, b)?)
        })?;
        Ok(lhs.sub(&self.bound)?)
    }
}

impl fmt::Display for BellInequality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for t in &self.terms {
            let c = t.coefficient.to_f64();
            let sign = if c < 0.0 {
                "-"
            } else if first {
                ""
            } else {
                "+"
            };
            if !first {
                f.write_str(" ")?;
            }
            write!(f, "{sign}{} P({}{}|{},{})", c.abs(), t.a, t.b, t.setting_a, t.setting_b)?;
            first = false;
        }
        write!(f, " <= {}", self.bound.to_f64())
    }
}

/// Reads a verified Farkas certificate of a Bell-pair problem as a Bell-type
/// inequality: weights on correlation rows become coefficients and the
/// negated normalization weight becomes the bound.
pub fn extract_inequality(cert: &FarkasCertificate, problem: &LpProblem) -> Result<BellInequality, FeasibilityError> {
    cert.verify(&problem.a, &problem.b).map_err(FeasibilityError::UnverifiedCertificate)?;
    let mode = problem.mode;
    let mut settings: Vec<String> = Vec::new();
    let mut terms: Vec<BellTerm> = Vec::new();
    let mut bound = Scalar::zero(mode);
    let mut provenance = Vec::new();
    for (label, y) in problem.rows.iter().zip(&cert.y) {
        if let RowLabel::Correlation { setting_a, .. } = label {
            if !settings.contains(setting_a) {
                settings.push(setting_a.clone());
            }
        }
        if y.is_zero() {
            continue;
        }
        provenance.push(label.to_string());
        match label {
            RowLabel::Normalization { .. } => bound = bound.sub(y)?,
            RowLabel::Correlation { setting_a, setting_b, a, b } => {
                match terms
                    .iter_mut()
                    .find(|t| &t.setting_a == setting_a && &t.setting_b == setting_b && t.a == *a && t.b == *b)
                {
                    Some(t) => t.coefficient = t.coefficient.add(y)?,
                    None => terms.push(BellTerm {
                        setting_a: setting_a.clone(),
                        setting_b: setting_b.clone(),
                        a: *a,
                        b: *b,
                        coefficient: y.clone(),
                    }),
                }
            }
            other => return Err(FeasibilityError::NotABellProblem(other.to_string())),
        }
    }
    let inequality = BellInequality { settings, terms, bound, provenance };
    if !inequality.holds_for_all_strategies()? {
        return Err(FeasibilityError::InvariantBreach(
            "verified certificate produced an inequality some strategy violates".into(),
        ));
    }
    Ok(inequality)
}

/// Certificate for the Bell-pair problem encoding the three-setting
/// Wigner-type inequality `P(M₁,M₂) + P(M₂,M₃) ≥ P(M₁,M₃)` on the first
/// three settings.
///
/// Without `perfect_correlation_term` this is the three-term form, which
/// holds only for strategies with `a_M = b_M`; general local strategies
/// violate it, so it fails verification. With the term, the event
/// "Alice's M₂ differs from Bob's M₂" (`P(10|M₂,M₂)` under `strict01`,
/// `P(a≠b|M₂,M₂)` under `differ`) is added to the right-hand side, which
/// makes the inequality valid for every local model while leaving its value
/// on the Bell state unchanged.
pub fn wigner_certificate(
    problem: &LpProblem,
    convention: WignerConvention,
    perfect_correlation_term: bool,
) -> Result<FarkasCertificate, FeasibilityError> {
    let mut settings: Vec<&str> = Vec::new();
    for label in &problem.rows {
        if let RowLabel::Correlation { setting_a, .. } = label {
            if !settings.contains(&setting_a.as_str()) {
                settings.push(setting_a);
            }
        }
    }
    if settings.len() < 3 {
        return Err(QubitError::TooFewMeasurements { needed: 3, got: settings.len() }.into());
    }
    let (m1, m2, m3) = (settings[0], settings[1], settings[2]);
    let events: &[(u8, u8)] = match convention {
        WignerConvention::Strict01 => &[(0, 1)],
        WignerConvention::Differ => &[(0, 1), (1, 0)],
    };
    let mode = problem.mode;
    let mut weights: Vec<(&str, &str, u8, u8, i64)> = Vec::new();
    for &(a, b) in events {
        weights.push((m1, m3, a, b, 1));
        weights.push((m1, m2, a, b, -1));
        weights.push((m2, m3, a, b, -1));
    }
    if perfect_correlation_term {
        let mismatches: &[(u8, u8)] = match convention {
            WignerConvention::Strict01 => &[(1, 0)],
            WignerConvention::Differ => &[(0, 1), (1, 0)],
        };
        for &(a, b) in mismatches {
            weights.push((m2, m2, a, b, -1));
        }
    }
    let y = problem
        .rows
        .iter()
        .map(|label| {
            let mut total = 0;
            if let RowLabel::Correlation { setting_a, setting_b, a, b } = label {
                for &(sa, sb, wa, wb, w) in &weights {
                    if setting_a == sa && setting_b == sb && *a == wa && *b == wb {
                        total += w;
                    }
                }
            }
            Scalar::from_ratio(mode, total, 1)
        })
        .collect();
    Ok(FarkasCertificate { y })
}

/// Which states and measurements play the three roles in the overlap argument.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverlapRoles {
    /// Eigenstate of the first measurement and its antipode (`|0⟩`, `|1⟩`).
    pub first: (String, String),
    /// Eigenstate of the last measurement and its antipode (`|+⟩`, `|−⟩`).
    pub second: (String, String),
    /// Eigenstate of the middle measurement and its antipode (`|π/4⟩`, `|5π/4⟩`).
    pub middle: (String, String),
    pub first_measurement: String,
    pub middle_measurement: String,
    pub second_measurement: String,
}

impl OverlapRoles {
    pub fn canonical() -> Self {
        let s = |x: &str| x.to_string();
        OverlapRoles {
            first: (s("0"), s("1")),
            second: (s("+"), s("-")),
            middle: (s("pi/4"), s("5pi/4")),
            first_measurement: s("Z"),
            middle_measurement: s("Z+X"),
            second_measurement: s("X"),
        }
    }
}

/// One outer pair measured against the middle pair on a two-measurement
/// ontic space with the single decomposition equality imposed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapLeg {
    /// Mass of the outer state on cells where the middle measurement reads 0,
    /// in the returned witness.
    pub mass_in_middle: Scalar,
    /// Minimum and maximum of that mass over the whole relaxed polytope.
    pub mass_range: (Scalar, Scalar),
    /// `μ_outer ≤ μ_middle` on every middle-0 cell at every feasible point.
    pub dominated_by_middle: bool,
}

/// The chain "the first state lies mostly inside the middle state's
/// hidden variables, so does the second, hence they share mass".
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapArgument {
    pub first: OverlapLeg,
    pub second: OverlapLeg,
    /// `first mass + second mass − 1`.
    pub shared_mass_lower_bound: Scalar,
    /// Born probability of outcome 0 of the first measurement on the second state.
    pub second_state_first_outcome_probability: Scalar,
    /// The shared mass exceeds that Born probability.
    pub contradiction: bool,
    /// Margin of the verified certificate showing that the three-measurement
    /// problem is already infeasible with only the first pair's equality.
    pub single_pair_margin: Option<Scalar>,
}

fn overlap_leg(
    scenario: &Scenario,
    measurements: [&str; 2],
    outer: &(String, String),
    middle: &(String, String),
    middle_measurement: &str,
) -> Result<OverlapLeg, FeasibilityError> {
    let sub = scenario.restricted_to(&measurements)?;
    let idx = |l: &str| sub.state_index(l).ok_or_else(|| FeasibilityError::UnknownLabel(l.to_string()));
    let decompositions = vec![(idx(&outer.0)?, idx(&outer.1)?), (idx(&middle.0)?, idx(&middle.1)?)];
    let sub = Scenario::new(sub.mode(), sub.measurements().to_vec(), sub.states().to_vec(), decompositions)?;
    let mode = sub.mode();
    let m = sub.measurements().len();
    let middle_index = sub
        .measurements()
        .iter()
        .position(|x| x.label == middle_measurement)
        .ok_or_else(|| FeasibilityError::UnknownLabel(middle_measurement.to_string()))?;
    let check = Check::run(build_prop1(&sub, Prop1Options::default())?)?;
    let x = check
        .result
        .witness()
        .ok_or_else(|| FeasibilityError::InvariantBreach("relaxed two-measurement problem infeasible".into()))?;
    let problem = &check.problem;
    let col = |state: &str, cell: u32| -> Result<usize, FeasibilityError> {
        let label = format!("mu[{state}]({})", bits_label(cell, m));
        problem.column_index(&label).ok_or(FeasibilityError::UnknownLabel(label))
    };
    let middle_cells: Vec<u32> = (0..1u32 << m).filter(|c| c >> middle_index & 1 == 0).collect();

    let mut mass = Scalar::zero(mode);
    let mut objective = vec![Scalar::zero(mode); problem.num_columns()];
    for &cell in &middle_cells {
        let j = col(&outer.0, cell)?;
        mass = mass.add(&x[j])?;
        objective[j] = Scalar::one(mode);
    }
    let low = simplex::solve_min(&objective, &problem.a, &problem.b)?.value;
    let negated: Vec<Scalar> = objective.iter().map(Scalar::neg).collect();
    let high = simplex::solve_min(&negated, &problem.a, &problem.b)?.value.neg();

    let mut dominated = true;
    for &cell in &middle_cells {
        // min (μ_middle − μ_outer)(λ) ≥ 0
        let mut c = vec![Scalar::zero(mode); problem.num_columns()];
        c[col(&outer.0, cell)?] = Scalar::one(mode).neg();
        c[col(&middle.0, cell)?] = Scalar::one(mode);
        if simplex::solve_min(&c, &problem.a, &problem.b)?.value.is_negative() {
            dominated = false;
        }
    }
    Ok(OverlapLeg { mass_in_middle: mass, mass_range: (low, high), dominated_by_middle: dominated })
}

/// Runs the overlap argument with each outer pair tied to the middle pair
/// on the ontic space of the two measurements involved.
pub fn overlap_argument(scenario: &Scenario, roles: &OverlapRoles) -> Result<OverlapArgument, FeasibilityError> {
    let mode = scenario.mode();
    let first = overlap_leg(
        scenario,
        [&roles.first_measurement, &roles.middle_measurement],
        &roles.first,
        &roles.middle,
        &roles.middle_measurement,
    )?;
    let second = overlap_leg(
        scenario,
        [&roles.middle_measurement, &roles.second_measurement],
        &roles.second,
        &roles.middle,
        &roles.middle_measurement,
    )?;
    let shared = first.mass_in_middle.add(&second.mass_in_middle)?.sub(&Scalar::one(mode))?;
    let second_state =
        scenario.state(&roles.second.0).ok_or_else(|| FeasibilityError::UnknownLabel(roles.second.0.clone()))?;
    let first_meas = scenario
        .measurement(&roles.first_measurement)
        .ok_or_else(|| FeasibilityError::UnknownLabel(roles.first_measurement.clone()))?;
    let born = born_probability(second_state, first_meas, 0)?;
    let contradiction =
        first.dominated_by_middle && second.dominated_by_middle && shared.compare(&born)? == Ordering::Greater;

    let idx = |l: &str| scenario.state_index(l).ok_or_else(|| FeasibilityError::UnknownLabel(l.to_string()));
    let single = Scenario::new(
        mode,
        scenario.measurements().to_vec(),
        scenario.states().to_vec(),
        vec![(idx(&roles.first.0)?, idx(&roles.first.1)?), (idx(&roles.middle.0)?, idx(&roles.middle.1)?)],
    )?;
    let single_pair_margin = check_prop1(&single, Prop1Options::default())?.margin();
    Ok(OverlapArgument {
        first,
        second,
        shared_mass_lower_bound: shared,
        second_state_first_outcome_probability: born,
        contradiction,
        single_pair_margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qubit::{canonical_scenario, PlanarAngle};
    use crate::scalar::{rational, ExactScalar};

    fn q(n: i64, d: i64) -> Scalar {
        Scalar::from_ratio(Mode::Exact, n, d)
    }

    fn surd(a: (i64, i64), b: (i64, i64)) -> Scalar {
        Scalar::Exact(ExactScalar::new(rational(a.0, a.1), rational(b.0, b.1)))
    }

    #[test]
    fn prop1_dimensions() {
        let lp = build_prop1(&canonical_scenario(), Prop1Options::default()).unwrap();
        assert_eq!(lp.num_columns(), 48);
        let count = |f: fn(&RowLabel) -> bool| lp.rows.iter().filter(|r| f(r)).count();
        assert_eq!(count(|r| matches!(r, RowLabel::Normalization { .. })), 6);
        assert_eq!(count(|r| matches!(r, RowLabel::Born { .. })), 36);
        assert_eq!(count(|r| matches!(r, RowLabel::DecompositionEqual { .. })), 16);
    }

    #[test]
    fn prop1_single_state_single_measurement() {
        let z = crate::qubit::PlanarMeasurement::new("Z", PlanarAngle::quarter_pi(0));
        let s = crate::qubit::PlanarState::at(PlanarAngle::quarter_pi(0));
        let scenario = Scenario::new(Mode::Exact, vec![z], vec![s], vec![]).unwrap();
        let check = check_prop1(&scenario, Prop1Options::default()).unwrap();
        assert_eq!(check.problem.num_columns(), 2);
        assert!(check.is_feasible());
    }

    #[test]
    fn prop1_float_rejected_when_exact_required() {
        let options = Prop1Options { require_exact: true, ..Prop1Options::default() };
        assert_eq!(
            build_prop1(&crate::qubit::canonical_scenario_float(), options),
            Err(FeasibilityError::FloatModeWithExactRequest)
        );
    }

    #[test]
    fn prop2_dimensions() {
        let lp = build_prop2(&canonical_scenario()).unwrap();
        assert_eq!(lp.num_columns(), 64);
        assert_eq!(lp.num_rows(), 37);
        let z = Scenario::from_measurement_angles(&[PlanarAngle::quarter_pi(0)]).unwrap();
        let check = check_prop2(&z).unwrap();
        assert_eq!(check.problem.num_columns(), 4);
        assert!(check.is_feasible());
    }

    #[test]
    fn prop2_copies_of_z_feasible() {
        let s = Scenario::from_measurement_angles(&[PlanarAngle::quarter_pi(0); 3]).unwrap();
        assert!(check_prop2(&s).unwrap().is_feasible());
    }

    #[test]
    fn stochastic_cells_agree_with_deterministic() {
        let scenario = canonical_scenario();
        for equality in [false, true] {
            let det = Prop1Options { include_decomposition_equality: equality, ..Prop1Options::default() };
            let sto = Prop1Options { deterministic_cells: false, ..det };
            let a = check_prop1(&scenario, det).unwrap();
            let b = check_prop1(&scenario, sto).unwrap();
            assert_eq!(b.problem.num_columns(), 6 * 27);
            assert_eq!(a.is_feasible(), b.is_feasible());
            assert_eq!(a.is_feasible(), !equality);
        }
    }

    #[test]
    fn min_slack_zero_when_feasible() {
        let options = Prop1Options { include_decomposition_equality: false, ..Prop1Options::default() };
        let lp = build_prop1(&canonical_scenario(), options).unwrap();
        assert!(min_slack(&lp).unwrap().epsilon.is_zero());
    }

    #[test]
    fn min_slack_positive_when_infeasible() {
        let lp = build_prop2(&canonical_scenario()).unwrap();
        let slack = min_slack(&lp).unwrap();
        assert!(slack.epsilon.is_positive());
        let float = build_prop2(&crate::qubit::canonical_scenario_float()).unwrap();
        let fslack = min_slack(&float).unwrap();
        assert!((fslack.epsilon.to_f64() - slack.epsilon.to_f64()).abs() < 1e-9);
    }

    #[test]
    fn zero_certificate_rejected() {
        let lp = build_prop2(&canonical_scenario()).unwrap();
        let zero = FarkasCertificate { y: vec![q(0, 1); lp.num_rows()] };
        assert!(matches!(extract_inequality(&zero, &lp), Err(FeasibilityError::UnverifiedCertificate(_))));
    }

    #[test]
    fn three_term_wigner_form_is_not_a_local_bound() {
        let lp = build_prop2(&canonical_scenario()).unwrap();
        let cert = wigner_certificate(&lp, WignerConvention::Strict01, false).unwrap();
        assert!(matches!(
            extract_inequality(&cert, &lp),
            Err(FeasibilityError::UnverifiedCertificate(VerificationError::PositiveColumn(_)))
        ));
    }

    #[test]
    fn wigner_certificate_margins() {
        let scenario = canonical_scenario();
        let lp = build_prop2(&scenario).unwrap();
        let strict = wigner_certificate(&lp, WignerConvention::Strict01, true).unwrap();
        let ineq = extract_inequality(&strict, &lp).unwrap();
        assert_eq!(ineq.bound, q(0, 1));
        assert_eq!(ineq.quantum_violation(&scenario).unwrap(), surd((-1, 4), (1, 4)));
        assert_eq!(strict.verify(&lp.a, &lp.b).unwrap(), surd((-1, 4), (1, 4)));
        let differ = wigner_certificate(&lp, WignerConvention::Differ, true).unwrap();
        let ineq = extract_inequality(&differ, &lp).unwrap();
        assert_eq!(ineq.quantum_violation(&scenario).unwrap(), surd((-1, 2), (1, 2)));
    }

    #[test]
    fn non_bell_rows_rejected() {
        let lp = build_prop1(&canonical_scenario(), Prop1Options::default()).unwrap();
        let check = Check::run(lp).unwrap();
        let cert = check.result.certificate().unwrap();
        assert!(matches!(extract_inequality(cert, &check.problem), Err(FeasibilityError::NotABellProblem(_))));
    }

    #[test]
    fn row_labels_display() {
        let label = RowLabel::Correlation { setting_a: "Z".into(), setting_b: "X".into(), a: 0, b: 1 };
        assert_eq!(label.to_string(), "P(01|Z,X)");
        let json = serde_json::to_value(&label).unwrap();
        assert_eq!(json["kind"], "correlation");
    }

    #[test]
    fn overlap_argument_canonical() {
        let arg = overlap_argument(&canonical_scenario(), &OverlapRoles::canonical()).unwrap();
        let expected = surd((1, 2), (1, 4));
        for leg in [&arg.first, &arg.second] {
            assert_eq!(leg.mass_in_middle, expected);
            assert_eq!(leg.mass_range, (expected.clone(), expected.clone()));
            assert!(leg.dominated_by_middle);
        }
        assert_eq!(arg.shared_mass_lower_bound, surd((0, 1), (1, 2)));
        assert_eq!(arg.second_state_first_outcome_probability, q(1, 2));
        assert!(arg.contradiction);
        assert!(arg.single_pair_margin.unwrap().is_positive());
    }
}
