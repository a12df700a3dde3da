//! Runtime values and intervals.

use std::cmp::Ordering;
use std::fmt;

/// Index of a storage cell in a [`Store`](crate::store::Store).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Loc(pub usize);

/// Opaque object identity; allocated in increasing order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObjId(pub usize);

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ℓ{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Null,
    Real(f64),
    Integer(i64),
    Boolean(bool),
    Inf,
    NegInf,
    Reference(ObjId),
    Array(Vec<Loc>),
}

impl Value {
    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    /// Finite numeric value as `f64`.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Real(x) => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Boolean(b) => Some(*b),
            _ => None,
        }
    }

    /// Numbers including the two infinities.
    pub fn is_number(&self) -> bool {
        matches!(self, Value::Real(_) | Value::Integer(_) | Value::Inf | Value::NegInf)
    }

    /// Total order over numbers: `-Inf` below every finite number, `Inf` above,
    /// each infinity equal to itself. `None` for non-numbers and NaN.
    pub fn compare_numbers(&self, other: &Value) -> Option<Ordering> {
        use Value::*;
        match (self, other) {
            (Inf, Inf) | (NegInf, NegInf) => Some(Ordering::Equal),
            (Inf, b) if b.is_number() => Some(Ordering::Greater),
            (a, Inf) if a.is_number() => Some(Ordering::Less),
            (NegInf, b) if b.is_number() => Some(Ordering::Less),
            (a, NegInf) if a.is_number() => Some(Ordering::Greater),
            (Integer(a), Integer(b)) => Some(a.cmp(b)),
            (a, b) => a.as_f64()?.partial_cmp(&b.as_f64()?),
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Null => "null",
            Value::Real(_) => "Real",
            Value::Integer(_) => "Integer",
            Value::Boolean(_) => "Boolean",
            Value::Inf => "Inf",
            Value::NegInf => "-Inf",
            Value::Reference(_) => "reference",
            Value::Array(_) => "array",
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("null"),
            Value::Real(x) => write!(f, "{x}"),
            Value::Integer(i) => write!(f, "{i}"),
            Value::Boolean(true) => f.write_str("True"),
            Value::Boolean(false) => f.write_str("False"),
            Value::Inf => f.write_str("Inf"),
            Value::NegInf => f.write_str("-Inf"),
            Value::Reference(o) => write!(f, "#{}", o.0),
            Value::Array(locs) => write!(f, "array[{}]", locs.len()),
        }
    }
}

/// Why an interval is rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntervalError {
    /// An open bracket used with a finite bound.
    FiniteOpenBound,
    /// An infinite bound enclosed by a closed bracket.
    ClosedInfiniteBound,
    /// `lo > hi`, or a wrong-signed infinity.
    Empty,
    /// A bound that is not a number.
    NotNumeric,
}

impl fmt::Display for IntervalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IntervalError::FiniteOpenBound => "finite open bound: only -Inf/Inf may use an open bracket",
            IntervalError::ClosedInfiniteBound => "infinite bound must use an open bracket",
            IntervalError::Empty => "lower bound exceeds upper bound",
            IntervalError::NotNumeric => "interval bounds must be numbers",
        })
    }
}

/// A validated interval. An open side always carries the matching infinity.
#[derive(Debug, Clone, PartialEq)]
pub struct Interval {
    pub lo: Value,
    pub hi: Value,
    pub lo_open: bool,
    pub hi_open: bool,
}

impl Interval {
    pub fn new(lo: Value, hi: Value, lo_open: bool, hi_open: bool) -> Result<Self, IntervalError> {
        Self::validate(&lo, &hi, lo_open, hi_open)?;
        Ok(Interval { lo, hi, lo_open, hi_open })
    }

    pub fn closed(lo: f64, hi: f64) -> Result<Self, IntervalError> {
        Self::new(Value::Real(lo), Value::Real(hi), false, false)
    }

    /// Decides validity from the four fields alone.
    pub fn validate(lo: &Value, hi: &Value, lo_open: bool, hi_open: bool) -> Result<(), IntervalError> {
        if !lo.is_number() || !hi.is_number() {
            return Err(IntervalError::NotNumeric);
        }
        if matches!(lo, Value::Inf) || matches!(hi, Value::NegInf) {
            return Err(IntervalError::Empty);
        }
        let lo_inf = matches!(lo, Value::NegInf);
        let hi_inf = matches!(hi, Value::Inf);
        if (lo_open && !lo_inf) || (hi_open && !hi_inf) {
            return Err(IntervalError::FiniteOpenBound);
        }
        if (lo_inf && !lo_open) || (hi_inf && !hi_open) {
            return Err(IntervalError::ClosedInfiniteBound);
        }
        if lo.compare_numbers(hi) == Some(Ordering::Greater) {
            return Err(IntervalError::Empty);
        }
        Ok(())
    }

    /// Membership honoring openness; `v` must be a number.
    pub fn contains(&self, v: &Value) -> Option<bool> {
        let lo = v.compare_numbers(&self.lo)?;
        let hi = v.compare_numbers(&self.hi)?;
        let above = if self.lo_open { lo == Ordering::Greater } else { lo != Ordering::Less };
        let below = if self.hi_open { hi == Ordering::Less } else { hi != Ordering::Greater };
        Some(above && below)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{}, {}{}",
            if self.lo_open { '(' } else { '[' },
            self.lo,
            self.hi,
            if self.hi_open { ')' } else { ']' }
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn inf_comparison_laws() {
        assert_eq!(Value::Inf.compare_numbers(&Value::Inf), Some(Ordering::Equal));
        assert_eq!(Value::NegInf.compare_numbers(&Value::NegInf), Some(Ordering::Equal));
        assert_eq!(Value::NegInf.compare_numbers(&Value::Inf), Some(Ordering::Less));
        assert_eq!(Value::Real(1e308).compare_numbers(&Value::Inf), Some(Ordering::Less));
        assert_eq!(Value::Null.compare_numbers(&Value::Real(0.0)), None);
    }

    #[test]
    fn the_four_invalid_forms() {
        use Value::*;
        assert_eq!(Interval::validate(&Real(1.0), &Real(2.0), true, true), Err(IntervalError::FiniteOpenBound));
        assert!(Interval::validate(&NegInf, &Inf, true, false).is_err());
        assert!(Interval::validate(&NegInf, &Inf, false, true).is_err());
        assert!(Interval::validate(&NegInf, &Inf, false, false).is_err());
        assert!(Interval::validate(&NegInf, &Inf, true, true).is_ok());
        assert!(Interval::validate(&Real(0.0), &Inf, false, true).is_ok());
        assert!(Interval::validate(&Real(0.0), &Real(15.0), false, false).is_ok());
        assert!(Interval::validate(&Real(0.0), &Inf, false, false).is_err());
    }

    #[test]
    fn membership_examples() {
        let i = Interval::closed(0.0, 15.0).unwrap();
        assert_eq!(i.contains(&Value::Real(0.0)), Some(true));
        let half = Interval::new(Value::Integer(0), Value::Inf, false, true).unwrap();
        assert_eq!(half.contains(&Value::Real(0.0)), Some(true));
        assert_eq!(half.contains(&Value::Inf), Some(false));
        let v = Interval::closed(-60.0, 60.0).unwrap();
        assert_eq!(v.contains(&Value::Real(-60.0001)), Some(false));
    }

    proptest! {
        #[test]
        fn finite_numbers_between_infinities(x in -1e300f64..1e300) {
            let v = Value::Real(x);
            prop_assert_eq!(Value::NegInf.compare_numbers(&v), Some(Ordering::Less));
            prop_assert_eq!(v.compare_numbers(&Value::Inf), Some(Ordering::Less));
        }
    }
}
