use std::fmt;

/// Extended-real cost with an absorbing `+∞`.
///
/// Implemented for `f64` (IEEE infinity) and for [`ExactCost`], an integer
/// mode used when results have to compare exactly.
pub trait Cost: Copy + PartialOrd + fmt::Debug + Send + Sync + 'static {
    const ZERO: Self;
    const INFINITY: Self;

    /// Addition where `∞ + x = ∞` for every `x`.
    fn plus(self, other: Self) -> Self;

    fn is_infinite(self) -> bool;

    fn is_finite(self) -> bool {
        !self.is_infinite()
    }

    fn min_cost(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }
}

impl Cost for f64 {
    const ZERO: Self = 0.0;
    const INFINITY: Self = f64::INFINITY;

    fn plus(self, other: Self) -> Self {
        if self == f64::INFINITY || other == f64::INFINITY {
            f64::INFINITY
        } else {
            self + other
        }
    }

    fn is_infinite(self) -> bool {
        self == f64::INFINITY
    }
}

/// Integer cost with `i64::MAX` as the `+∞` sentinel and saturating addition.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ExactCost(pub i64);

impl ExactCost {
    pub const INF: ExactCost = ExactCost(i64::MAX);

    /// Converts an `f64` that is integral or `+∞`.
    pub fn from_f64(x: f64) -> Option<ExactCost> {
        if x == f64::INFINITY {
            Some(ExactCost::INF)
        } else if x.is_finite() && x.fract() == 0.0 && x.abs() < 9.0e15 {
            Some(ExactCost(x as i64))
        } else {
            None
        }
    }

    pub fn to_f64(self) -> f64 {
        if self == ExactCost::INF {
            f64::INFINITY
        } else {
            self.0 as f64
        }
    }
}

impl fmt::Debug for ExactCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == ExactCost::INF {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl Cost for ExactCost {
    const ZERO: Self = ExactCost(0);
    const INFINITY: Self = ExactCost::INF;

    fn plus(self, other: Self) -> Self {
        if self == ExactCost::INF || other == ExactCost::INF {
            ExactCost::INF
        } else {
            // Saturation must never produce the sentinel from finite operands.
            ExactCost(self.0.saturating_add(other.0).min(i64::MAX - 1))
        }
    }

    fn is_infinite(self) -> bool {
        self == ExactCost::INF
    }
}
