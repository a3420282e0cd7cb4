//! Closed real intervals, the carrier for input, slack, and neuron bounds.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntervalError {
    #[error("interval endpoints must be finite, got [{lo}, {hi}]")]
    NonFinite { lo: f64, hi: f64 },
    #[error("interval lower bound {lo} exceeds upper bound {hi}")]
    Inverted { lo: f64, hi: f64 },
}

/// A closed interval `[lo, hi]` with finite endpoints.
///
/// Serialized as a two-element array `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self, IntervalError> {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(IntervalError::NonFinite { lo, hi });
        }
        if lo > hi {
            return Err(IntervalError::Inverted { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    /// The degenerate interval `[v, v]`.
    pub fn point(v: f64) -> Self {
        assert!(v.is_finite(), "degenerate interval needs a finite value");
        Self { lo: v, hi: v }
    }

    pub const ZERO: Interval = Interval { lo: 0.0, hi: 0.0 };

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        self.lo + 0.5 * (self.hi - self.lo)
    }

    pub fn is_degenerate(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    /// Membership with an absolute slack on both ends.
    pub fn contains_within(&self, v: f64, tol: f64) -> bool {
        self.lo - tol <= v && v <= self.hi + tol
    }

    /// `self ⊆ other`.
    pub fn is_subset_of(&self, other: &Interval) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }

    /// Splits at the midpoint into `[lo, mid]` and `[mid, hi]`.
    pub fn bisect(&self) -> (Interval, Interval) {
        let m = self.mid();
        (Interval { lo: self.lo, hi: m }, Interval { lo: m, hi: self.hi })
    }
}

impl TryFrom<[f64; 2]> for Interval {
    type Error = IntervalError;

    fn try_from(v: [f64; 2]) -> Result<Self, Self::Error> {
        Interval::new(v[0], v[1])
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.lo, i.hi]
    }
}

impl std::fmt::Display for Interval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inverted_and_non_finite() {
        assert!(matches!(Interval::new(1.0, 0.0), Err(IntervalError::Inverted { .. })));
        assert!(matches!(
            Interval::new(f64::NAN, 0.0),
            Err(IntervalError::NonFinite { .. })
        ));
        assert!(Interval::new(0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn bisect_tiles_parent() {
        let i = Interval::new(-1.0, 3.0).unwrap();
        let (a, b) = i.bisect();
        assert_eq!(a.lo(), -1.0);
        assert_eq!(a.hi(), 1.0);
        assert_eq!(b.lo(), 1.0);
        assert_eq!(b.hi(), 3.0);
    }

    #[test]
    fn serializes_as_pair() {
        let i = Interval::new(0.25, 0.5).unwrap();
        assert_eq!(serde_json::to_string(&i).unwrap(), "[0.25,0.5]");
        let back: Interval = serde_json::from_str("[0.25,0.5]").unwrap();
        assert_eq!(back, i);
        assert!(serde_json::from_str::<Interval>("[1.0,0.0]").is_err());
    }
}
