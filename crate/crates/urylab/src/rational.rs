//! Exact rationals and the unit-interval value type used for distances,
//! predicate values and grey-subset values.

use std::fmt;
use std::str::FromStr;

use num::rational::Ratio;
use num::{Integer, One, Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub type Rat = Ratio<i64>;

/// Shorthand constructor; reduces to lowest terms.
pub fn rat(n: i64, d: i64) -> Rat {
    Ratio::new(n, d)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RationalError {
    #[error("malformed rational {0:?}")]
    Malformed(String),
    #[error("non-canonical rational {0:?} (expected lowest terms, positive denominator)")]
    NonCanonical(String),
    #[error("rational {0} outside [0,1]")]
    OutOfRange(String),
}

/// Formats as `p/q`, or `p` when the denominator is 1.
pub fn format_rat(r: &Rat) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

fn parse_digits(s: &str, whole: &str) -> Result<i64, RationalError> {
    let bad = || RationalError::Malformed(whole.to_string());
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    if s.len() > 1 && s.starts_with('0') {
        return Err(RationalError::NonCanonical(whole.to_string()));
    }
    s.parse::<i64>().map_err(|_| bad())
}

/// Parses `p/q` or `p` in canonical form. `2/4`, `1/-2`, `01/2` are rejected.
pub fn parse_rat(s: &str) -> Result<Rat, RationalError> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (n, d) = match body.split_once('/') {
        Some((n, d)) => (parse_digits(n, s)?, parse_digits(d, s)?),
        None => (parse_digits(body, s)?, 1),
    };
    if d == 0 {
        return Err(RationalError::Malformed(s.to_string()));
    }
    if n.gcd(&d) != 1 && !(n == 0 && d == 1) {
        return Err(RationalError::NonCanonical(s.to_string()));
    }
    if neg && n == 0 {
        return Err(RationalError::NonCanonical(s.to_string()));
    }
    Ok(Ratio::new_raw(if neg { -n } else { n }, d))
}

/// A rational in `[0,1]`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Q01(Rat);

impl Q01 {
    pub const ZERO: Q01 = Q01(Ratio::new_raw(0, 1));
    pub const ONE: Q01 = Q01(Ratio::new_raw(1, 1));

    pub fn new(r: Rat) -> Result<Q01, RationalError> {
        if r < Rat::zero() || r > Rat::one() {
            Err(RationalError::OutOfRange(format_rat(&r)))
        } else {
            Ok(Q01(r))
        }
    }

    /// `n/d`, panicking outside `[0,1]`. For literals in constructions and tests.
    pub fn frac(n: i64, d: i64) -> Q01 {
        Q01::new(rat(n, d)).expect("literal outside [0,1]")
    }

    /// Clamps an arbitrary rational into `[0,1]`.
    pub fn clamp(r: Rat) -> Q01 {
        if r < Rat::zero() {
            Q01::ZERO
        } else if r > Rat::one() {
            Q01::ONE
        } else {
            Q01(r)
        }
    }

    pub fn value(self) -> Rat {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0.is_zero()
    }

    /// Truncated sum `min(1, a + b)`.
    pub fn tadd(self, other: Q01) -> Q01 {
        Q01::clamp(self.0 + other.0)
    }

    /// Truncated subtraction `max(0, a - b)`.
    pub fn tsub(self, other: Q01) -> Q01 {
        Q01::clamp(self.0 - other.0)
    }

    /// `1 - a`.
    pub fn complement(self) -> Q01 {
        Q01(Rat::one() - self.0)
    }

    /// Truncated scaling `min(1, q * a)` for `q >= 0`.
    pub fn scale(self, q: Rat) -> Q01 {
        Q01::clamp(q * self.0)
    }

    pub fn abs_diff(self, other: Q01) -> Q01 {
        Q01((self.0 - other.0).abs())
    }

    /// True when the value is an integer multiple of `1/denominator`.
    pub fn on_grid(self, denominator: i64) -> bool {
        (self.0 * Rat::from_integer(denominator)).is_integer()
    }

    /// All multiples of `1/denominator` in `[0,1]`, ascending.
    pub fn grid(denominator: i64) -> Vec<Q01> {
        (0..=denominator).map(|k| Q01::frac(k, denominator)).collect()
    }
}

impl fmt::Display for Q01 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_rat(&self.0))
    }
}

impl fmt::Debug for Q01 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl FromStr for Q01 {
    type Err = RationalError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Q01::new(parse_rat(s)?)
    }
}

impl Serialize for Q01 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Q01 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Serde adapter for plain rationals as canonical strings.
pub mod rat_string {
    use super::*;

    pub fn serialize<S: Serializer>(r: &Rat, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_rat(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rat, D::Error> {
        let s = String::deserialize(d)?;
        parse_rat(&s).map_err(serde::de::Error::custom)
    }
}
