//! Ordered-field arithmetic for probabilities.
//!
//! Every probability that appears in the canonical scenario has the form
//! `p + q·√2` with `p, q` rational, so the exact backend is the quadratic
//! field ℚ(√2) over arbitrary-precision rationals. A double-precision backend
//! is available for angle scans; it compares with an absolute tolerance of
//! [`FLOAT_TOLERANCE`].
//!
//! Both backends implement [`Field`], which is what the simplex solver is
//! generic over. [`Scalar`] is the tagged value used at API boundaries and
//! in serialized reports; mixing backends in one operation is an error.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Absolute tolerance used by the float backend for every sign decision.
pub const FLOAT_TOLERANCE: f64 = 1e-9;

/// Arbitrary-precision rational, always in lowest terms with positive denominator.
pub type Rational = BigRational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScalarError {
    #[error("cannot combine an exact scalar with a float scalar")]
    MixedBackend,
    #[error("division by zero")]
    DivisionByZero,
    #[error("cannot parse scalar from {0:?}")]
    Parse(String),
}

/// Arithmetic backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Float,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Exact => f.write_str("exact"),
            Mode::Float => f.write_str("float"),
        }
    }
}

impl FromStr for Mode {
    type Err = ScalarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exact" => Ok(Mode::Exact),
            "float" => Ok(Mode::Float),
            other => Err(ScalarError::Parse(other.to_string())),
        }
    }
}

pub fn rational(numer: i64, denom: i64) -> Rational {
    BigRational::new(BigInt::from(numer), BigInt::from(denom))
}

/// Formats a rational as `p/q`, always with an explicit denominator.
pub fn format_rational(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Parses `p/q`, a bare integer, or a finite decimal such as `0.125`.
pub fn parse_rational(s: &str) -> Result<Rational, ScalarError> {
    let err = || ScalarError::Parse(s.to_string());
    let t = s.trim();
    if let Some((n, d)) = t.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| err())?;
        let d: BigInt = d.trim().parse().map_err(|_| err())?;
        if d.is_zero() {
            return Err(err());
        }
        return Ok(BigRational::new(n, d));
    }
    if let Some((int, frac)) = t.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|c| c.is_ascii_digit()) {
            return Err(err());
        }
        let negative = int.starts_with('-');
        let digits = format!("{}{}", int.trim_start_matches(['-', '+']), frac);
        let n: BigInt = digits.parse().map_err(|_| err())?;
        let d = num_traits::pow(BigInt::from(10), frac.len());
        let r = BigRational::new(n, d);
        return Ok(if negative { -r } else { r });
    }
    let n: BigInt = t.parse().map_err(|_| err())?;
    Ok(BigRational::from_integer(n))
}

/// An element `a + b·√2` of ℚ(√2).
///
/// The pair `(a, b)` is unique for each value because √2 is irrational, so
/// structural equality is value equality.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ExactScalar {
    a: Rational,
    b: Rational,
}

impl ExactScalar {
    pub fn new(a: Rational, b: Rational) -> Self {
        ExactScalar { a, b }
    }

    pub fn from_rational(a: Rational) -> Self {
        ExactScalar { a, b: Rational::zero() }
    }

    pub fn from_ratio(numer: i64, denom: i64) -> Self {
        Self::from_rational(rational(numer, denom))
    }

    pub fn from_int(n: i64) -> Self {
        Self::from_ratio(n, 1)
    }

    pub fn sqrt2() -> Self {
        ExactScalar { a: Rational::zero(), b: Rational::one() }
    }

    /// Rational part.
    pub fn a(&self) -> &Rational {
        &self.a
    }

    /// Coefficient of √2.
    pub fn b(&self) -> &Rational {
        &self.b
    }

    pub fn is_zero(&self) -> bool {
        self.a.is_zero() && self.b.is_zero()
    }

    pub fn conjugate(&self) -> Self {
        ExactScalar { a: self.a.clone(), b: -self.b.clone() }
    }

    /// Field norm `a² − 2b²`, nonzero for every nonzero element.
    pub fn norm(&self) -> Rational {
        &self.a * &self.a - Rational::from_integer(2.into()) * &self.b * &self.b
    }

    /// Sign of `a + b√2`, decided without any floating point.
    pub fn signum(&self) -> Ordering {
        let sa = self.a.cmp(&Rational::zero());
        let sb = self.b.cmp(&Rational::zero());
        match (sa, sb) {
            (Ordering::Equal, s) | (s, Ordering::Equal) => s,
            (Ordering::Greater, Ordering::Greater) => Ordering::Greater,
            (Ordering::Less, Ordering::Less) => Ordering::Less,
            // opposite signs: compare a² with 2b²
            (Ordering::Greater, Ordering::Less) => self.norm().cmp(&Rational::zero()),
            (Ordering::Less, Ordering::Greater) => Rational::zero().cmp(&self.norm()),
        }
    }

    pub fn abs(&self) -> Self {
        if self.signum() == Ordering::Less {
            -self
        } else {
            self.clone()
        }
    }

    pub fn checked_div(&self, other: &Self) -> Option<Self> {
        if other.is_zero() {
            return None;
        }
        // x / y = x·ȳ / N(y)
        let n = other.norm();
        let num = self * &other.conjugate();
        Some(ExactScalar { a: num.a / &n, b: num.b / &n })
    }

    pub fn recip(&self) -> Option<Self> {
        ExactScalar::from_int(1).checked_div(self)
    }

    /// Nearest double to the exact value.
    ///
    /// √2 is replaced by a rational approximation accurate far beyond the
    /// resolution of `f64` relative to this value, then a single correctly
    /// rounded rational-to-double conversion is performed.
    pub fn to_f64(&self) -> f64 {
        if self.b.is_zero() {
            return self.a.to_f64().unwrap_or(f64::NAN);
        }
        let size = |r: &Rational| r.numer().bits() + r.denom().bits();
        let k = 160 + 2 * (size(&self.a) + size(&self.b));
        let scale = BigInt::one() << k;
        let root = (BigInt::from(2) << (2 * k)).sqrt();
        let sqrt2 = BigRational::new(root, scale);
        (&self.a + &self.b * sqrt2).to_f64().unwrap_or(f64::NAN)
    }
}

impl Ord for ExactScalar {
    fn cmp(&self, other: &Self) -> Ordering {
        (self - other).signum()
    }
}

impl PartialOrd for ExactScalar {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for ExactScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.a.is_zero(), self.b.is_zero()) {
            (_, true) => write!(f, "{}", self.a),
            (true, false) => write!(f, "{}·√2", self.b),
            (false, false) => {
                if self.b.is_negative() {
                    write!(f, "{} - {}·√2", self.a, -self.b.clone())
                } else {
                    write!(f, "{} + {}·√2", self.a, self.b)
                }
            }
        }
    }
}

impl<'a> Add<&'a ExactScalar> for &'a ExactScalar {
    type Output = ExactScalar;
    fn add(self, rhs: &ExactScalar) -> ExactScalar {
        ExactScalar { a: &self.a + &rhs.a, b: &self.b + &rhs.b }
    }
}

impl<'a> Sub<&'a ExactScalar> for &'a ExactScalar {
    type Output = ExactScalar;
    fn sub(self, rhs: &ExactScalar) -> ExactScalar {
        ExactScalar { a: &self.a - &rhs.a, b: &self.b - &rhs.b }
    }
}

impl<'a> Mul<&'a ExactScalar> for &'a ExactScalar {
    type Output = ExactScalar;
    fn mul(self, rhs: &ExactScalar) -> ExactScalar {
        let two = Rational::from_integer(2.into());
        ExactScalar { a: &self.a * &rhs.a + two * &self.b * &rhs.b, b: &self.a * &rhs.b + &rhs.a * &self.b }
    }
}

impl Neg for &ExactScalar {
    type Output = ExactScalar;
    fn neg(self) -> ExactScalar {
        ExactScalar { a: -self.a.clone(), b: -self.b.clone() }
    }
}

impl Neg for ExactScalar {
    type Output = ExactScalar;
    fn neg(self) -> ExactScalar {
        ExactScalar { a: -self.a, b: -self.b }
    }
}

macro_rules! forward_owned_binop {
    ($tr:ident, $method:ident) => {
        impl $tr<ExactScalar> for ExactScalar {
            type Output = ExactScalar;
            fn $method(self, rhs: ExactScalar) -> ExactScalar {
                $tr::$method(&self, &rhs)
            }
        }
        impl<'a> $tr<&'a ExactScalar> for ExactScalar {
            type Output = ExactScalar;
            fn $method(self, rhs: &ExactScalar) -> ExactScalar {
                $tr::$method(&self, rhs)
            }
        }
    };
}

forward_owned_binop!(Add, add);
forward_owned_binop!(Sub, sub);
forward_owned_binop!(Mul, mul);

/// Float backend value with tolerance-aware sign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloatScalar(pub f64);

impl FloatScalar {
    pub fn signum(self) -> Ordering {
        if self.0 > FLOAT_TOLERANCE {
            Ordering::Greater
        } else if self.0 < -FLOAT_TOLERANCE {
            Ordering::Less
        } else {
            Ordering::Equal
        }
    }
}

/// The operations the simplex solver needs from its number type.
pub trait Field: Clone + fmt::Debug + Send + Sync {
    const MODE: Mode;
    fn zero() -> Self;
    fn one() -> Self;
    fn plus(&self, other: &Self) -> Self;
    fn minus(&self, other: &Self) -> Self;
    fn times(&self, other: &Self) -> Self;
    /// Caller guarantees `other` is nonzero under [`Field::signum`].
    fn divided_by(&self, other: &Self) -> Self;
    fn negated(&self) -> Self;
    fn signum(&self) -> Ordering;
    fn into_scalar(self) -> Scalar;
    fn from_scalar(s: &Scalar) -> Result<Self, ScalarError>;

    fn is_zero(&self) -> bool {
        self.signum() == Ordering::Equal
    }
    fn is_positive(&self) -> bool {
        self.signum() == Ordering::Greater
    }
    fn is_negative(&self) -> bool {
        self.signum() == Ordering::Less
    }
    fn cmp_field(&self, other: &Self) -> Ordering {
        self.minus(other).signum()
    }
}

impl Field for ExactScalar {
    const MODE: Mode = Mode::Exact;
    fn zero() -> Self {
        ExactScalar::from_int(0)
    }
    fn one() -> Self {
        ExactScalar::from_int(1)
    }
    fn plus(&self, other: &Self) -> Self {
        self + other
    }
    fn minus(&self, other: &Self) -> Self {
        self - other
    }
    fn times(&self, other: &Self) -> Self {
        self * other
    }
    fn divided_by(&self, other: &Self) -> Self {
        self.checked_div(other).expect("exact division by zero")
    }
    fn negated(&self) -> Self {
        -self
    }
    fn signum(&self) -> Ordering {
        ExactScalar::signum(self)
    }
    fn is_zero(&self) -> bool {
        ExactScalar::is_zero(self)
    }
    fn into_scalar(self) -> Scalar {
        Scalar::Exact(self)
    }
    fn from_scalar(s: &Scalar) -> Result<Self, ScalarError> {
        match s {
            Scalar::Exact(x) => Ok(x.clone()),
            Scalar::Float(_) => Err(ScalarError::MixedBackend),
        }
    }
}

impl Field for FloatScalar {
    const MODE: Mode = Mode::Float;
    fn zero() -> Self {
        FloatScalar(0.0)
    }
    fn one() -> Self {
        FloatScalar(1.0)
    }
    fn plus(&self, other: &Self) -> Self {
        FloatScalar(self.0 + other.0)
    }
    fn minus(&self, other: &Self) -> Self {
        FloatScalar(self.0 - other.0)
    }
    fn times(&self, other: &Self) -> Self {
        FloatScalar(self.0 * other.0)
    }
    fn divided_by(&self, other: &Self) -> Self {
        FloatScalar(self.0 / other.0)
    }
    fn negated(&self) -> Self {
        FloatScalar(-self.0)
    }
    fn signum(&self) -> Ordering {
        FloatScalar::signum(*self)
    }
    fn into_scalar(self) -> Scalar {
        Scalar::Float(self.0)
    }
    fn from_scalar(s: &Scalar) -> Result<Self, ScalarError> {
        match s {
            Scalar::Float(x) => Ok(FloatScalar(*x)),
            Scalar::Exact(_) => Err(ScalarError::MixedBackend),
        }
    }
}

/// A probability-valued number in one of the two backends.
#[derive(Debug, Clone, PartialEq)]
pub enum Scalar {
    Exact(ExactScalar),
    Float(f64),
}

impl From<ExactScalar> for Scalar {
    fn from(x: ExactScalar) -> Self {
        Scalar::Exact(x)
    }
}

impl Scalar {
    pub fn zero(mode: Mode) -> Self {
        Self::from_ratio(mode, 0, 1)
    }

    pub fn one(mode: Mode) -> Self {
        Self::from_ratio(mode, 1, 1)
    }

    pub fn from_ratio(mode: Mode, numer: i64, denom: i64) -> Self {
        match mode {
            Mode::Exact => Scalar::Exact(ExactScalar::from_ratio(numer, denom)),
            Mode::Float => Scalar::Float(numer as f64 / denom as f64),
        }
    }

    pub fn mode(&self) -> Mode {
        match self {
            Scalar::Exact(_) => Mode::Exact,
            Scalar::Float(_) => Mode::Float,
        }
    }

    pub fn as_exact(&self) -> Option<&ExactScalar> {
        match self {
            Scalar::Exact(x) => Some(x),
            Scalar::Float(_) => None,
        }
    }

    fn binop(
        &self,
        other: &Scalar,
        exact: impl FnOnce(&ExactScalar, &ExactScalar) -> ExactScalar,
        float: impl FnOnce(f64, f64) -> f64,
    ) -> Result<Scalar, ScalarError> {
        match (self, other) {
            (Scalar::Exact(x), Scalar::Exact(y)) => Ok(Scalar::Exact(exact(x, y))),
            (Scalar::Float(x), Scalar::Float(y)) => Ok(Scalar::Float(float(*x, *y))),
            _ => Err(ScalarError::MixedBackend),
        }
    }

    pub fn add(&self, other: &Scalar) -> Result<Scalar, ScalarError> {
        self.binop(other, |x, y| x + y, |x, y| x + y)
    }

    pub fn sub(&self, other: &Scalar) -> Result<Scalar, ScalarError> {
        self.binop(other, |x, y| x - y, |x, y| x - y)
    }

    pub fn mul(&self, other: &Scalar) -> Result<Scalar, ScalarError> {
        self.binop(other, |x, y| x * y, |x, y| x * y)
    }

    pub fn div(&self, other: &Scalar) -> Result<Scalar, ScalarError> {
        match (self, other) {
            (Scalar::Exact(x), Scalar::Exact(y)) => {
                x.checked_div(y).map(Scalar::Exact).ok_or(ScalarError::DivisionByZero)
            }
            (Scalar::Float(x), Scalar::Float(y)) => {
                if *y == 0.0 {
                    Err(ScalarError::DivisionByZero)
                } else {
                    Ok(Scalar::Float(x / y))
                }
            }
            _ => Err(ScalarError::MixedBackend),
        }
    }

    pub fn neg(&self) -> Scalar {
        match self {
            Scalar::Exact(x) => Scalar::Exact(-x),
            Scalar::Float(x) => Scalar::Float(-x),
        }
    }

    /// Ordering of the real values. The float backend treats values within
    /// [`FLOAT_TOLERANCE`] as equal.
    pub fn compare(&self, other: &Scalar) -> Result<Ordering, ScalarError> {
        match (self, other) {
            (Scalar::Exact(x), Scalar::Exact(y)) => Ok(x.cmp(y)),
            (Scalar::Float(x), Scalar::Float(y)) => Ok(FloatScalar(x - y).signum()),
            _ => Err(ScalarError::MixedBackend),
        }
    }

    pub fn signum(&self) -> Ordering {
        match self {
            Scalar::Exact(x) => x.signum(),
            Scalar::Float(x) => FloatScalar(*x).signum(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.signum() == Ordering::Equal
    }

    pub fn is_negative(&self) -> bool {
        self.signum() == Ordering::Less
    }

    pub fn is_positive(&self) -> bool {
        self.signum() == Ordering::Greater
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Scalar::Exact(x) => x.to_f64(),
            Scalar::Float(x) => *x,
        }
    }

    /// Sums an iterator of scalars that all share `mode`.
    pub fn sum<'a>(mode: Mode, items: impl IntoIterator<Item = &'a Scalar>) -> Result<Scalar, ScalarError> {
        items.into_iter().try_fold(Scalar::zero(mode), |acc, x| acc.add(x))
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Exact(x) => write!(f, "{x}"),
            Scalar::Float(x) => write!(f, "{x}"),
        }
    }
}

#[derive(Serialize)]
struct ExactRepr {
    a: String,
    b: String,
    approx: f64,
}

impl Serialize for ExactScalar {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        ExactRepr { a: format_rational(&self.a), b: format_rational(&self.b), approx: self.to_f64() }
            .serialize(serializer)
    }
}

impl Serialize for Scalar {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Scalar::Exact(x) => x.serialize(serializer),
            Scalar::Float(x) => serializer.serialize_f64(*x),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScalarRepr {
    Number(f64),
    Text(String),
    Pair {
        a: String,
        b: String,
        #[allow(dead_code)]
        #[serde(default)]
        approx: Option<f64>,
    },
}

impl<'de> Deserialize<'de> for Scalar {
    /// JSON numbers are float scalars; strings (`"p/q"`, `"3"`, `"0.25"`)
    /// and `{"a": .., "b": ..}` objects are exact.
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        match ScalarRepr::deserialize(deserializer)? {
            ScalarRepr::Number(x) => Ok(Scalar::Float(x)),
            ScalarRepr::Text(s) => {
                parse_rational(&s).map(|r| Scalar::Exact(ExactScalar::from_rational(r))).map_err(D::Error::custom)
            }
            ScalarRepr::Pair { a, b, .. } => {
                let a = parse_rational(&a).map_err(D::Error::custom)?;
                let b = parse_rational(&b).map_err(D::Error::custom)?;
                Ok(Scalar::Exact(ExactScalar::new(a, b)))
            }
        }
    }
}
