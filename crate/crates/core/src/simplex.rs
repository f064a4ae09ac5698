//! Dense tableau simplex over an ordered field.
//!
//! Phase I minimizes the sum of artificial variables for `Ax = b, x ≥ 0`. A
//! positive optimum yields a Farkas certificate read off the artificial
//! columns' reduced costs; a zero optimum yields a basic feasible point.
//! Phase II (used by [`solve_min`]) continues from that basis. Bland's rule
//! picks every pivot, so degenerate problems terminate.
//!
//! Results are re-verified in [`Scalar`] arithmetic, outside the tableau,
//! before they are returned.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{ExactScalar, Field, FloatScalar, Mode, Scalar, ScalarError};

/// Upper bound on pivots per phase. Bland's rule terminates long before this
/// on any problem this crate builds.
const MAX_PIVOTS: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimplexError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Scalar(#[from] ScalarError),
    #[error("pivot limit reached; cycling detected")]
    CyclingDetected,
    #[error("objective is unbounded below")]
    Unbounded,
    #[error("problem is infeasible")]
    Infeasible(FarkasCertificate),
    #[error("solver produced a result that failed verification: {0}")]
    Verification(#[from] VerificationError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerificationError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("mixed arithmetic backends")]
    MixedBackend,
    #[error("x[{0}] is negative")]
    NegativeEntry(usize),
    #[error("row {0}: Ax differs from b")]
    RowViolated(usize),
    #[error("column {0}: yᵀA is positive")]
    PositiveColumn(usize),
    #[error("yᵀb is not positive")]
    NonPositiveMargin,
}

impl From<ScalarError> for VerificationError {
    fn from(_: ScalarError) -> Self {
        VerificationError::MixedBackend
    }
}

/// Dual vector `y` proving `{x ≥ 0 : Ax = b}` empty: `yᵀA ≤ 0` and `yᵀb > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarkasCertificate {
    pub y: Vec<Scalar>,
}

impl FarkasCertificate {
    /// Checks the certificate against `(a, b)` and returns the margin `yᵀb`.
    pub fn verify(&self, a: &[Vec<Scalar>], b: &[Scalar]) -> Result<Scalar, VerificationError> {
        let (rows, cols) = shape(a, b).map_err(VerificationError::DimensionMismatch)?;
        if self.y.len() != rows {
            return Err(VerificationError::DimensionMismatch(format!(
                "certificate has {} entries, problem has {rows} rows",
                self.y.len()
            )));
        }
        let mode = self.y.first().map(Scalar::mode).or_else(|| b.first().map(Scalar::mode));
        let mode = mode.unwrap_or(Mode::Exact);
        for j in 0..cols {
            let mut acc = Scalar::zero(mode);
            for i in 0..rows {
                if !a[i][j].is_zero() && !self.y[i].is_zero() {
                    acc = acc.add(&self.y[i].mul(&a[i][j])?)?;
                }
            }
            if acc.is_positive() {
                return Err(VerificationError::PositiveColumn(j));
            }
        }
        let mut margin = Scalar::zero(mode);
        for i in 0..rows {
            margin = margin.add(&self.y[i].mul(&b[i])?)?;
        }
        if !margin.is_positive() {
            return Err(VerificationError::NonPositiveMargin);
        }
        Ok(margin)
    }
}

/// Outcome of a feasibility check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum LpResult {
    Feasible { x: Vec<Scalar> },
    Infeasible { certificate: FarkasCertificate },
}

impl LpResult {
    pub fn is_feasible(&self) -> bool {
        matches!(self, LpResult::Feasible { .. })
    }

    pub fn witness(&self) -> Option<&[Scalar]> {
        match self {
            LpResult::Feasible { x } => Some(x),
            LpResult::Infeasible { .. } => None,
        }
    }

    pub fn certificate(&self) -> Option<&FarkasCertificate> {
        match self {
            LpResult::Feasible { .. } => None,
            LpResult::Infeasible { certificate } => Some(certificate),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub value: Scalar,
    pub x: Vec<Scalar>,
}

/// Checks `x ≥ 0` and `Ax = b` (exactly, or within tolerance in float mode).
pub fn verify_witness(a: &[Vec<Scalar>], b: &[Scalar], x: &[Scalar]) -> Result<(), VerificationError> {
    let (rows, cols) = shape(a, b).map_err(VerificationError::DimensionMismatch)?;
    if x.len() != cols {
        return Err(VerificationError::DimensionMismatch(format!(
            "witness has {} entries, problem has {cols} columns",
            x.len()
        )));
    }
    if let Some(j) = x.iter().position(Scalar::is_negative) {
        return Err(VerificationError::NegativeEntry(j));
    }
    for i in 0..rows {
        let mut acc = Scalar::zero(b[i].mode());
        for j in 0..cols {
            if !a[i][j].is_zero() && !x[j].is_zero() {
                acc = acc.add(&a[i][j].mul(&x[j])?)?;
            }
        }
        if acc.compare(&b[i])? != Ordering::Equal {
            return Err(VerificationError::RowViolated(i));
        }
    }
    Ok(())
}

fn shape(a: &[Vec<Scalar>], b: &[Scalar]) -> Result<(usize, usize), String> {
    if a.len() != b.len() {
        return Err(format!("{} rows in A but {} entries in b", a.len(), b.len()));
    }
    let cols = a.first().map_or(0, Vec::len);
    if let Some(i) = a.iter().position(|r| r.len() != cols) {
        return Err(format!("row {i} has {} entries, expected {cols}", a[i].len()));
    }
    Ok((a.len(), cols))
}

fn detect_mode<'a>(items: impl IntoIterator<Item = &'a Scalar>) -> Result<Mode, ScalarError> {
    let mut mode = None;
    for s in items {
        match mode {
            None => mode = Some(s.mode()),
            Some(m) if m != s.mode() => return Err(ScalarError::MixedBackend),
            _ => {}
        }
    }
    Ok(mode.unwrap_or(Mode::Exact))
}

fn convert<F: Field>(v: &[Scalar]) -> Result<Vec<F>, ScalarError> {
    v.iter().map(F::from_scalar).collect()
}

fn back<F: Field>(v: Vec<F>) -> Vec<Scalar> {
    v.into_iter().map(F::into_scalar).collect()
}

/// Simplex tableau: `m` constraint rows over `n` original and `m` artificial
/// columns, with the right-hand side stored as the last entry of each row.
#[derive(Debug, Clone)]
pub struct Tableau<F> {
    rows: Vec<Vec<F>>,
    /// Reduced costs; last entry is the negated objective value.
    objective: Vec<F>,
    basis: Vec<usize>,
    originals: usize,
    /// Row sign flips applied so that every rhs is nonnegative.
    flipped: Vec<bool>,
    width: usize,
    pivots: usize,
}

impl<F: Field> Tableau<F> {
    /// Phase-I tableau with the artificial basis.
    pub fn phase_one(a: &[Vec<F>], b: &[F]) -> Self {
        let m = b.len();
        let n = a.first().map_or(0, Vec::len);
        let width = n + m + 1;
        let mut rows = Vec::with_capacity(m);
        let mut flipped = Vec::with_capacity(m);
        let mut objective = vec![F::zero(); width];
        for i in 0..m {
            let flip = b[i].is_negative();
            let mut row = Vec::with_capacity(width);
            for j in 0..n {
                row.push(if flip { a[i][j].negated() } else { a[i][j].clone() });
            }
            for k in 0..m {
                row.push(if k == i { F::one() } else { F::zero() });
            }
            row.push(if flip { b[i].negated() } else { b[i].clone() });
            for j in (0..n).chain(std::iter::once(width - 1)) {
                if !row[j].is_zero() {
                    objective[j] = objective[j].minus(&row[j]);
                }
            }
            rows.push(row);
            flipped.push(flip);
        }
        for k in 0..m {
            objective[n + k] = F::zero();
        }
        Tableau { rows, objective, basis: (n..n + m).collect(), originals: n, flipped, width, pivots: 0 }
    }

    fn rhs(&self) -> usize {
        self.width - 1
    }

    pub fn objective_value(&self) -> F {
        self.objective[self.rhs()].negated()
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let rhs = self.rhs();
        let p = self.rows[r][e].clone();
        let support: Vec<usize> = (0..=rhs).filter(|&j| !self.rows[r][j].is_zero()).collect();
        for &j in &support {
            self.rows[r][j] = self.rows[r][j].divided_by(&p);
        }
        let pivot_row = self.rows[r].clone();
        let eliminate = |row: &mut Vec<F>| {
            let factor = row[e].clone();
            if factor.is_zero() {
                return;
            }
            for &j in &support {
                let v = row[j].minus(&factor.times(&pivot_row[j]));
                // snap float noise so that Bland's rule sees clean signs
                row[j] = if v.is_zero() { F::zero() } else { v };
            }
            // exact zero in the pivot column even in float mode
            row[e] = F::zero();
        };
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                eliminate(row);
            }
        }
        eliminate(&mut self.objective);
        self.basis[r] = e;
        self.pivots += 1;
    }

    /// Runs Bland's rule over columns `< allowed` until optimal.
    fn optimize(&mut self, allowed: usize) -> Result<(), SimplexError> {
        let rhs = self.rhs();
        loop {
            if self.pivots > MAX_PIVOTS {
                return Err(SimplexError::CyclingDetected);
            }
            let Some(e) = (0..allowed).find(|&j| self.objective[j].is_negative()) else {
                return Ok(());
            };
            let mut leave: Option<(usize, F)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if !row[e].is_positive() {
                    continue;
                }
                let ratio = row[rhs].divided_by(&row[e]);
                let better = match &leave {
                    None => true,
                    Some((k, best)) => match ratio.cmp_field(best) {
                        Ordering::Less => true,
                        Ordering::Equal => self.basis[i] < self.basis[*k],
                        Ordering::Greater => false,
                    },
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, e),
                None => return Err(SimplexError::Unbounded),
            }
        }
    }

    /// Basic solution restricted to the original columns.
    fn solution(&self) -> Vec<F> {
        let rhs = self.rhs();
        let mut x = vec![F::zero(); self.originals];
        for (i, &col) in self.basis.iter().enumerate() {
            if col < self.originals {
                x[col] = self.rows[i][rhs].clone();
            }
        }
        x
    }

    /// Phase-I duals mapped back to the unflipped rows.
    fn farkas(&self) -> Vec<F> {
        (0..self.rows.len())
            .map(|i| {
                let y = F::one().minus(&self.objective[self.originals + i]);
                if self.flipped[i] {
                    y.negated()
                } else {
                    y
                }
            })
            .collect()
    }

    /// Pivots zero-level artificials out of the basis; rows where that is
    /// impossible are redundant and dropped.
    fn expel_artificials(&mut self) {
        let mut i = 0;
        while i < self.rows.len() {
            if self.basis[i] >= self.originals {
                match (0..self.originals).find(|&j| !self.rows[i][j].is_zero()) {
                    Some(j) => self.pivot(i, j),
                    None => {
                        // keep the column layout; the row simply stops constraining anything
                        self.rows.remove(i);
                        self.basis.remove(i);
                        self.flipped.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
    }

    fn install_costs(&mut self, c: &[F]) {
        let mut objective = vec![F::zero(); self.width];
        objective[..self.originals].clone_from_slice(c);
        for (i, &col) in self.basis.iter().enumerate() {
            let cost = objective[col].clone();
            if cost.is_zero() {
                continue;
            }
            for (o, v) in objective.iter_mut().zip(&self.rows[i]) {
                if !v.is_zero() {
                    *o = o.minus(&cost.times(v));
                }
            }
        }
        self.objective = objective;
    }
}

impl<F: Field> fmt::Display for Tableau<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |v: &F| format!("{:>10.4}", v.clone().into_scalar().to_f64());
        for (i, row) in self.rows.iter().enumerate() {
            write!(f, "x{:<4}|", self.basis[i])?;
            for v in row {
                write!(f, " {}", show(v))?;
            }
            writeln!(f)?;
        }
        write!(f, "obj  |")?;
        for v in &self.objective {
            write!(f, " {}", show(v))?;
        }
        writeln!(f)
    }
}

enum PhaseOne<F> {
    Feasible(Tableau<F>),
    Infeasible(Vec<F>),
}

fn phase_one<F: Field>(a: &[Vec<F>], b: &[F]) -> Result<PhaseOne<F>, SimplexError> {
    let mut t = Tableau::phase_one(a, b);
    let all = t.rhs();
    t.optimize(all)?;
    if t.objective_value().is_positive() {
        Ok(PhaseOne::Infeasible(t.farkas()))
    } else {
        Ok(PhaseOne::Feasible(t))
    }
}

fn feasibility_in<F: Field>(a: &[Vec<Scalar>], b: &[Scalar]) -> Result<LpResult, SimplexError> {
    let fa = a.iter().map(|r| convert::<F>(r)).collect::<Result<Vec<_>, _>>()?;
    let fb = convert::<F>(b)?;
    Ok(match phase_one(&fa, &fb)? {
        PhaseOne::Feasible(t) => LpResult::Feasible { x: back(t.solution()) },
        PhaseOne::Infeasible(y) => LpResult::Infeasible { certificate: FarkasCertificate { y: back(y) } },
    })
}

fn min_in<F: Field>(c: &[Scalar], a: &[Vec<Scalar>], b: &[Scalar]) -> Result<Optimum, SimplexError> {
    let fa = a.iter().map(|r| convert::<F>(r)).collect::<Result<Vec<_>, _>>()?;
    let fb = convert::<F>(b)?;
    let fc = convert::<F>(c)?;
    let mut t = match phase_one(&fa, &fb)? {
        PhaseOne::Feasible(t) => t,
        PhaseOne::Infeasible(y) => {
            return Err(SimplexError::Infeasible(FarkasCertificate { y: back(y) }));
        }
    };
    t.expel_artificials();
    t.install_costs(&fc);
    let originals = t.originals;
    t.optimize(originals)?;
    Ok(Optimum { value: t.objective_value().into_scalar(), x: back(t.solution()) })
}

/// Decides whether `{x ≥ 0 : Ax = b}` is nonempty. The returned witness or
/// certificate has already been verified.
pub fn solve_feasibility(a: &[Vec<Scalar>], b: &[Scalar]) -> Result<LpResult, SimplexError> {
    shape(a, b).map_err(SimplexError::DimensionMismatch)?;
    let mode = detect_mode(a.iter().flatten().chain(b))?;
    let result = match mode {
        Mode::Exact => feasibility_in::<ExactScalar>(a, b)?,
        Mode::Float => feasibility_in::<FloatScalar>(a, b)?,
    };
    match &result {
        LpResult::Feasible { x } => verify_witness(a, b, x)?,
        LpResult::Infeasible { certificate } => {
            certificate.verify(a, b)?;
        }
    }
    Ok(result)
}

/// Minimizes `cᵀx` over `{x ≥ 0 : Ax = b}`.
pub fn solve_min(c: &[Scalar], a: &[Vec<Scalar>], b: &[Scalar]) -> Result<Optimum, SimplexError> {
    let (_, cols) = shape(a, b).map_err(SimplexError::DimensionMismatch)?;
    if c.len() != cols {
        return Err(SimplexError::DimensionMismatch(format!(
            "cost vector has {} entries, problem has {cols} columns",
            c.len()
        )));
    }
    let mode = detect_mode(a.iter().flatten().chain(b).chain(c))?;
    let optimum = match mode {
        Mode::Exact => min_in::<ExactScalar>(c, a, b)?,
        Mode::Float => min_in::<FloatScalar>(c, a, b)?,
    };
    verify_witness(a, b, &optimum.x)?;
    Ok(optimum)
}

/// Phase-I tableau dump for debugging.
pub fn dump_phase_one(a: &[Vec<Scalar>], b: &[Scalar]) -> Result<String, SimplexError> {
    shape(a, b).map_err(SimplexError::DimensionMismatch)?;
    let fa = a
        .iter()
        .map(|r| convert::<FloatScalar>(&r.iter().map(|s| Scalar::Float(s.to_f64())).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>, _>>()?;
    let fb = convert::<FloatScalar>(&b.iter().map(|s| Scalar::Float(s.to_f64())).collect::<Vec<_>>())?;
    Ok(Tableau::phase_one(&fa, &fb).to_string())
}
