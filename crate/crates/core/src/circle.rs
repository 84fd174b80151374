//! Points and arcs on S¹ = [0,1).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Fractional part in [0,1).
pub fn wrap<R: Real>(x: R) -> R {
    let y = x - x.floor();
    if y.to_f64() >= 1.0 {
        R::zero()
    } else {
        y
    }
}

/// Counter-clockwise distance from `from` to `to`, in [0,1).
pub fn ccw_distance<R: Real>(from: R, to: R) -> R {
    wrap(to - from)
}

/// Representative of `to - from` in (-1/2, 1/2].
pub fn signed_offset<R: Real>(from: R, to: R) -> R {
    let d = ccw_distance(from, to);
    if d.to_f64() > 0.5 {
        d - R::one()
    } else {
        d
    }
}

/// Point of the circle, stored as the fractional part of a lift.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct CirclePoint(f64);

impl CirclePoint {
    pub fn new(x: f64) -> Self {
        CirclePoint(wrap(x))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn distance_to(self, other: CirclePoint) -> f64 {
        ccw_distance(self.0, other.0)
    }
}

impl From<f64> for CirclePoint {
    fn from(x: f64) -> Self {
        CirclePoint::new(x)
    }
}

/// Half-open counter-clockwise arc [left, left + length).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArcInterval {
    pub left: CirclePoint,
    pub right: CirclePoint,
    pub length: f64,
}

impl ArcInterval {
    pub fn new(left: CirclePoint, right: CirclePoint) -> Result<Self> {
        let length = left.distance_to(right);
        if length <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "degenerate arc at {}",
                left.value()
            )));
        }
        Ok(ArcInterval { left, right, length })
    }

    pub fn contains(&self, x: CirclePoint) -> bool {
        self.left.distance_to(x) < self.length
    }

    /// Relative position of `x` measured from `left`, in [0,1) when contained.
    pub fn barycentric(&self, x: CirclePoint) -> f64 {
        self.left.distance_to(x) / self.length
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wrap_basic() {
        assert_eq!(wrap(1.25_f64), 0.25);
        assert_eq!(wrap(-0.25_f64), 0.75);
        assert_eq!(wrap(-1e-300_f64), 0.0);
    }

    #[test]
    fn arc_across_zero() {
        let a = ArcInterval::new(CirclePoint::new(0.9), CirclePoint::new(0.1)).unwrap();
        assert!((a.length - 0.2).abs() < 1e-15);
        assert!(a.contains(CirclePoint::new(0.95)));
        assert!(a.contains(CirclePoint::new(0.0)));
        assert!(a.contains(CirclePoint::new(0.9)));
        assert!(!a.contains(CirclePoint::new(0.1)));
        assert!(!a.contains(CirclePoint::new(0.5)));
    }

    #[test]
    fn degenerate_arc_rejected() {
        assert!(ArcInterval::new(CirclePoint::new(0.3), CirclePoint::new(0.3)).is_err());
    }

    proptest! {
        #[test]
        fn wrap_in_unit_interval(x in -1e6f64..1e6) {
            let y = wrap(x);
            prop_assert!((0.0..1.0).contains(&y));
        }

        #[test]
        fn distances_complement(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            prop_assume!((a - b).abs() > 1e-9);
            let d1 = ccw_distance(a, b);
            let d2 = ccw_distance(b, a);
            prop_assert!((d1 + d2 - 1.0).abs() < 1e-12);
            let s = signed_offset(a, b);
            prop_assert!(s > -0.5 && s <= 0.5);
            prop_assert!((wrap(a + s) - b).abs() < 1e-12 || (wrap(a + s) - b).abs() > 1.0 - 1e-12);
        }
    }
}
