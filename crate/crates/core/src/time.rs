//! Exact simulated time.
//!
//! All clocks, sizes and cost formulas use `SimTime`, a rational number over
//! `i64`. Closed-form costs and simulated makespans can then be compared with
//! `==` instead of a tolerance.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, Sub};
use std::str::FromStr;

use num_rational::Rational64;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A non-negative exact quantity of time or size units.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(Rational64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(Rational64::new_raw(0, 1));

    pub fn new(numer: i64, denom: i64) -> Self {
        SimTime(Rational64::new(numer, denom))
    }

    pub fn from_integer(v: i64) -> Self {
        SimTime(Rational64::from_integer(v))
    }

    /// Best rational approximation of a float (exact for dyadic values such as 0.25).
    pub fn from_f64(v: f64) -> Result<Self> {
        if !v.is_finite() {
            return Err(Error::invalid(format!("non-finite value {v}")));
        }
        if v.fract() == 0.0 && v.abs() < 1e15 {
            return Ok(Self::from_integer(v as i64));
        }
        Rational64::approximate_float(v)
            .map(SimTime)
            .ok_or_else(|| Error::invalid(format!("cannot represent {v} as a rational")))
    }

    pub fn as_ratio(self) -> Rational64 {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    pub fn is_zero(self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(self) -> bool {
        self.0 < Rational64::zero()
    }

    pub fn max(self, other: Self) -> Self {
        if self >= other {
            self
        } else {
            other
        }
    }

    /// Exact `numer/denom` rendering, e.g. `"3/2"` or `"14"`.
    pub fn exact_string(self) -> String {
        if *self.0.denom() == 1 {
            self.0.numer().to_string()
        } else {
            format!("{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

impl FromStr for SimTime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let n: i64 = n
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad rational numerator in {s:?}")))?;
            let d: i64 = d
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad rational denominator in {s:?}")))?;
            if d == 0 {
                return Err(Error::invalid(format!("zero denominator in {s:?}")));
            }
            return Ok(SimTime::new(n, d));
        }
        if let Ok(i) = s.parse::<i64>() {
            return Ok(SimTime::from_integer(i));
        }
        let v: f64 = s
            .parse()
            .map_err(|_| Error::invalid(format!("not a number: {s:?}")))?;
        SimTime::from_f64(v)
    }
}

impl From<i64> for SimTime {
    fn from(v: i64) -> Self {
        SimTime::from_integer(v)
    }
}

impl From<Rational64> for SimTime {
    fn from(v: Rational64) -> Self {
        SimTime(v)
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl Mul for SimTime {
    type Output = SimTime;
    fn mul(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 * rhs.0)
    }
}

impl Mul<i64> for SimTime {
    type Output = SimTime;
    fn mul(self, rhs: i64) -> SimTime {
        SimTime(self.0 * rhs)
    }
}

impl Div<i64> for SimTime {
    type Output = SimTime;
    fn div(self, rhs: i64) -> SimTime {
        SimTime(self.0 / rhs)
    }
}

impl Div for SimTime {
    type Output = SimTime;
    fn div(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 / rhs.0)
    }
}

impl Sum for SimTime {
    fn sum<I: Iterator<Item = SimTime>>(iter: I) -> SimTime {
        iter.fold(SimTime::ZERO, |a, b| a + b)
    }
}

impl Serialize for SimTime {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.exact_string())
    }
}

impl<'de> Deserialize<'de> for SimTime {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Int(i64),
            Float(f64),
            Text(String),
        }
        let parsed = match Repr::deserialize(d)? {
            Repr::Int(i) => Ok(SimTime::from_integer(i)),
            Repr::Float(f) => SimTime::from_f64(f),
            Repr::Text(s) => s.parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}
