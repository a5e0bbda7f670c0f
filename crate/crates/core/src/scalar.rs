//! Numeric contract shared by every time and distance quantity.
//!
//! Two implementations exist: [`Exact`] (arbitrary-precision rationals, all
//! comparisons exact) and [`Float`] (binary64, equality relaxed to
//! [`FLOAT_TIGHT_EPS`]).

use std::fmt::{Debug, Display};
use std::ops::{Add, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde_json::Value;
use thiserror::Error;

/// Exact rational scalar.
pub type Exact = BigRational;
/// Binary64 scalar.
pub type Float = f64;

/// Tolerance for tightness and feasibility comparisons in float mode.
pub const FLOAT_TIGHT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NumericMode {
    Exact,
    Float,
}

impl NumericMode {
    pub fn as_str(self) -> &'static str {
        match self {
            NumericMode::Exact => "exact",
            NumericMode::Float => "float",
        }
    }
}

impl FromStr for NumericMode {
    type Err = ScalarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exact" => Ok(NumericMode::Exact),
            "float" => Ok(NumericMode::Float),
            other => Err(ScalarError::UnknownMode(other.to_string())),
        }
    }
}

impl Display for NumericMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScalarError {
    #[error("cannot read {0} as an exact rational (use an integer or a \"p/q\" string)")]
    NotRational(String),
    #[error("cannot read {0} as a number")]
    NotNumber(String),
    #[error("zero denominator in {0}")]
    ZeroDenominator(String),
    #[error("unknown numeric mode `{0}` (expected `exact` or `float`)")]
    UnknownMode(String),
}

/// An ordered field used for every time and distance value.
pub trait Scalar:
    Signed
    + PartialOrd
    + Clone
    + Debug
    + Display
    + Send
    + Sync
    + 'static
    + for<'a> Add<&'a Self, Output = Self>
    + for<'a> Sub<&'a Self, Output = Self>
{
    const MODE: NumericMode;

    fn from_ratio(numer: i64, denom: i64) -> Self;

    fn from_int(value: i64) -> Self {
        Self::from_ratio(value, 1)
    }

    /// Zero in exact mode, [`FLOAT_TIGHT_EPS`] in float mode.
    fn tolerance() -> Self;

    /// Square root, available only where the result is representable.
    fn sqrt(&self) -> Option<Self>;

    fn floor(&self) -> Self;

    fn to_f64(&self) -> f64;

    fn to_json(&self) -> Value;

    fn from_json(value: &Value) -> Result<Self, ScalarError>;

    /// `a == b`, within [`Scalar::tolerance`].
    fn approx_eq(a: &Self, b: &Self) -> bool {
        (a.clone() - b.clone()).abs() <= Self::tolerance()
    }

    /// `a <= b`, within [`Scalar::tolerance`].
    fn approx_le(a: &Self, b: &Self) -> bool {
        a.clone() <= b.clone() + Self::tolerance()
    }

    fn max_of(a: Self, b: Self) -> Self {
        if a >= b {
            a
        } else {
            b
        }
    }

    fn min_of(a: Self, b: Self) -> Self {
        if a <= b {
            a
        } else {
            b
        }
    }
}

/// Parses `"p"`, `"p/q"` (optionally signed) into an exact rational.
pub fn parse_rational(text: &str) -> Result<Exact, ScalarError> {
    let t = text.trim();
    let (n, d) = match t.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (t, "1"),
    };
    let numer = BigInt::from_str(n).map_err(|_| ScalarError::NotRational(text.to_string()))?;
    let denom = BigInt::from_str(d).map_err(|_| ScalarError::NotRational(text.to_string()))?;
    if denom.is_zero() {
        return Err(ScalarError::ZeroDenominator(text.to_string()));
    }
    Ok(BigRational::new(numer, denom))
}

impl Scalar for Exact {
    const MODE: NumericMode = NumericMode::Exact;

    fn from_ratio(numer: i64, denom: i64) -> Self {
        BigRational::new(BigInt::from(numer), BigInt::from(denom))
    }

    fn tolerance() -> Self {
        Self::zero()
    }

    fn sqrt(&self) -> Option<Self> {
        if self.is_negative() {
            return None;
        }
        let n = self.numer().sqrt();
        let d = self.denom().sqrt();
        if &(&n * &n) == self.numer() && &(&d * &d) == self.denom() {
            Some(BigRational::new(n, d))
        } else {
            None
        }
    }

    fn floor(&self) -> Self {
        BigRational::floor(self)
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn to_json(&self) -> Value {
        Value::String(self.to_string())
    }

    fn from_json(value: &Value) -> Result<Self, ScalarError> {
        match value {
            Value::String(s) => parse_rational(s),
            Value::Number(n) => {
                if let Some(i) = n.as_i64() {
                    Ok(Self::from_int(i))
                } else if let Some(u) = n.as_u64() {
                    Ok(BigRational::from_integer(BigInt::from(u)))
                } else {
                    Err(ScalarError::NotRational(n.to_string()))
                }
            }
            other => Err(ScalarError::NotRational(other.to_string())),
        }
    }

    fn approx_eq(a: &Self, b: &Self) -> bool {
        a == b
    }

    fn approx_le(a: &Self, b: &Self) -> bool {
        a <= b
    }
}

impl Scalar for Float {
    const MODE: NumericMode = NumericMode::Float;

    fn from_ratio(numer: i64, denom: i64) -> Self {
        numer as f64 / denom as f64
    }

    fn tolerance() -> Self {
        FLOAT_TIGHT_EPS
    }

    fn sqrt(&self) -> Option<Self> {
        (*self >= 0.0).then(|| f64::sqrt(*self))
    }

    fn floor(&self) -> Self {
        f64::floor(*self)
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn to_json(&self) -> Value {
        serde_json::Number::from_f64(*self)
            .map(Value::Number)
            .unwrap_or(Value::Null)
    }

    fn from_json(value: &Value) -> Result<Self, ScalarError> {
        match value {
            Value::Number(n) => n
                .as_f64()
                .ok_or_else(|| ScalarError::NotNumber(n.to_string())),
            Value::String(s) => parse_rational(s).map(|r| Scalar::to_f64(&r)),
            other => Err(ScalarError::NotNumber(other.to_string())),
        }
    }
}

/// `numer / denom`, or `None` when `denom` is zero.
pub fn checked_ratio<S: Scalar>(numer: &S, denom: &S) -> Option<S> {
    if denom.is_zero() {
        None
    } else {
        Some(numer.clone() / denom.clone())
    }
}

/// Sum of an iterator of scalars.
pub fn sum<'a, S: Scalar, I: IntoIterator<Item = &'a S>>(items: I) -> S {
    items
        .into_iter()
        .fold(S::zero(), |acc, x| acc + x)
}

/// Multiplies by a small non-negative integer.
pub fn scale<S: Scalar>(value: &S, factor: usize) -> S {
    value.clone() * S::from_int(factor as i64)
}
