//! Test oracles shared by the integration targets.

#![allow(dead_code)]

use bellgate::scalar::{ExactScalar, Scalar};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use proptest::prelude::*;

pub type Q = BigRational;

pub fn q(n: i64, d: i64) -> Q {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn to_scalar(v: &Q) -> Scalar {
    Scalar::Exact(ExactScalar::from_rational(v.clone()))
}

/// Rational part of an exact scalar with no √2 component.
pub fn to_rational(s: &Scalar) -> Q {
    let e = s.as_exact().expect("exact scalar");
    assert!(e.b().is_zero(), "unexpected irrational entry");
    e.a().clone()
}

/// Solves `M z = rhs` for square or tall `M` with independent columns.
/// Returns `None` when the system is inconsistent.
fn solve_full_column_rank(m: &[Vec<Q>], rhs: &[Q]) -> Option<Vec<Q>> {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    let mut aug: Vec<Vec<Q>> = m
        .iter()
        .zip(rhs)
        .map(|(r, b)| {
            let mut r = r.clone();
            r.push(b.clone());
            r
        })
        .collect();
    let mut pivot_row = 0;
    for c in 0..cols {
        let p = (pivot_row..rows).find(|&r| !aug[r][c].is_zero())?;
        aug.swap(pivot_row, p);
        let inv = aug[pivot_row][c].recip();
        for v in aug[pivot_row].iter_mut() {
            *v = &*v * &inv;
        }
        for r in 0..rows {
            if r != pivot_row && !aug[r][c].is_zero() {
                let f = aug[r][c].clone();
                for k in 0..=cols {
                    let t = &f * &aug[pivot_row][k];
                    aug[r][k] = &aug[r][k] - t;
                }
            }
        }
        pivot_row += 1;
    }
    if aug[pivot_row..].iter().any(|r| !r[cols].is_zero()) {
        return None;
    }
    Some((0..cols).map(|c| aug[c][cols].clone()).collect())
}

fn rank(m: &[Vec<Q>], cols: &[usize]) -> usize {
    let mut a: Vec<Vec<Q>> = m.iter().map(|r| cols.iter().map(|&c| r[c].clone()).collect()).collect();
    let mut rank = 0;
    for c in 0..cols.len() {
        let Some(p) = (rank..a.len()).find(|&r| !a[r][c].is_zero()) else { continue };
        a.swap(rank, p);
        for r in 0..a.len() {
            if r != rank && !a[r][c].is_zero() {
                let f = &a[r][c] / &a[rank][c];
                for k in c..cols.len() {
                    let t = &f * &a[rank][k];
                    a[r][k] = &a[r][k] - t;
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Brute force over column subsets: `{x ≥ 0 : Ax = b}` is nonempty iff some
/// set of linearly independent columns yields a nonnegative solution.
pub fn brute_force_feasible(a: &[Vec<Q>], b: &[Q]) -> bool {
    let n = a.first().map_or(0, Vec::len);
    if b.iter().all(Zero::is_zero) {
        return true;
    }
    for mask in 1u32..1 << n {
        let cols: Vec<usize> = (0..n).filter(|&j| mask >> j & 1 == 1).collect();
        if rank(a, &cols) != cols.len() {
            continue;
        }
        let sub: Vec<Vec<Q>> = a.iter().map(|r| cols.iter().map(|&c| r[c].clone()).collect()).collect();
        if let Some(z) = solve_full_column_rank(&sub, b) {
            if z.iter().all(|v| !v.is_negative()) {
                return true;
            }
        }
    }
    false
}

pub fn check_witness(a: &[Vec<Q>], b: &[Q], x: &[Q]) -> bool {
    x.iter().all(|v| !v.is_negative())
        && a.iter().zip(b).all(|(row, bi)| row.iter().zip(x).map(|(p, q)| p * q).sum::<Q>() == *bi)
}

pub fn check_certificate(a: &[Vec<Q>], b: &[Q], y: &[Q]) -> bool {
    let n = a.first().map_or(0, Vec::len);
    let columns_ok = (0..n).all(|j| !a.iter().zip(y).map(|(row, yi)| &row[j] * yi).sum::<Q>().is_positive());
    let margin: Q = b.iter().zip(y).map(|(p, q)| p * q).sum();
    columns_ok && margin.is_positive()
}

fn small_rational() -> impl Strategy<Value = Q> {
    (-4i64..=4, prop_oneof![Just(1i64), Just(1), Just(2), Just(3)]).prop_map(|(n, d)| q(n, d))
}

/// Random `Ax = b` with at most 8 rows and columns; half of the cases have
/// `b = A x₀` for a random `x₀ ≥ 0` so both answers are well represented.
pub fn random_lp() -> impl Strategy<Value = (Vec<Vec<Q>>, Vec<Q>)> {
    (1usize..=8, 1usize..=8, any::<bool>()).prop_flat_map(|(m, n, planted)| {
        let a = proptest::collection::vec(proptest::collection::vec(small_rational(), n), m);
        let b = proptest::collection::vec(small_rational(), m);
        let x0 = proptest::collection::vec((0i64..=3, 1i64..=2).prop_map(|(p, d)| q(p, d)), n);
        (a, b, x0).prop_map(move |(a, b, x0)| {
            let b =
                if planted { a.iter().map(|row| row.iter().zip(&x0).map(|(p, q)| p * q).sum()).collect() } else { b };
            (a, b)
        })
    })
}

pub fn scalars(v: &[Q]) -> Vec<Scalar> {
    v.iter().map(to_scalar).collect()
}

/// Runs the solver on one rational LP and compares against the oracle;
/// every witness and certificate is re-checked in plain rationals.
pub fn solver_agrees(a: &[Vec<Q>], b: &[Q]) -> Result<(), String> {
    use bellgate::simplex::{solve_feasibility, LpResult};
    let sa: Vec<Vec<Scalar>> = a.iter().map(|r| scalars(r)).collect();
    let sb = scalars(b);
    let expected = brute_force_feasible(a, b);
    match solve_feasibility(&sa, &sb).map_err(|e| format!("solver error {e}"))? {
        LpResult::Feasible { x } => {
            let x: Vec<Q> = x.iter().map(to_rational).collect();
            if !check_witness(a, b, &x) {
                return Err("witness does not satisfy Ax = b, x >= 0".into());
            }
            if !expected {
                return Err("solver feasible, oracle infeasible".into());
            }
        }
        LpResult::Infeasible { certificate } => {
            let y: Vec<Q> = certificate.y.iter().map(to_rational).collect();
            if !check_certificate(a, b, &y) {
                return Err("certificate does not verify".into());
            }
            if expected {
                return Err("solver infeasible, oracle feasible".into());
            }
        }
    }
    Ok(())
}
