//! Double-double scalar built on `twofloat`, with a corrected quotient.
//!
//! `twofloat` 0.8 forms the reciprocal residual `1 - b·(1/b)` without a fused
//! multiply-add, which rounds it to zero and leaves quotients accurate only to
//! double precision. Addition and multiplication are used as they are.

use std::cmp::Ordering;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use twofloat::TwoFloat;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DD(TwoFloat);

impl DD {
    pub fn new_add(a: f64, b: f64) -> DD {
        DD(TwoFloat::new_add(a, b))
    }

    pub fn hi(&self) -> f64 {
        self.0.hi()
    }

    pub fn lo(&self) -> f64 {
        self.0.lo()
    }

    pub fn abs(&self) -> DD {
        DD(self.0.abs())
    }

    pub fn floor(self) -> DD {
        DD(self.0.floor())
    }

    pub fn sqrt(self) -> DD {
        if self.hi() <= 0.0 {
            return DD(self.0.sqrt());
        }
        // Newton step on the double-precision root.
        let y = DD::from(self.hi().sqrt());
        y + (self - y * y) / (y * 2.0)
    }

    pub fn recip(self) -> DD {
        DD::from(1.0) / self
    }
}

impl From<f64> for DD {
    fn from(x: f64) -> DD {
        DD(TwoFloat::from(x))
    }
}

impl PartialOrd for DD {
    fn partial_cmp(&self, other: &DD) -> Option<Ordering> {
        self.0.partial_cmp(&other.0)
    }
}

impl PartialEq<f64> for DD {
    fn eq(&self, other: &f64) -> bool {
        self.0 == *other
    }
}

impl PartialOrd<f64> for DD {
    fn partial_cmp(&self, other: &f64) -> Option<Ordering> {
        self.0.partial_cmp(other)
    }
}

impl Neg for DD {
    type Output = DD;
    fn neg(self) -> DD {
        DD(-self.0)
    }
}

macro_rules! delegate {
    ($tr:ident, $m:ident) => {
        impl $tr<DD> for DD {
            type Output = DD;
            fn $m(self, rhs: DD) -> DD {
                DD($tr::$m(self.0, rhs.0))
            }
        }
        impl $tr<f64> for DD {
            type Output = DD;
            fn $m(self, rhs: f64) -> DD {
                DD($tr::$m(self.0, rhs))
            }
        }
        impl $tr<DD> for f64 {
            type Output = DD;
            fn $m(self, rhs: DD) -> DD {
                DD($tr::$m(self, rhs.0))
            }
        }
    };
}

delegate!(Add, add);
delegate!(Sub, sub);
delegate!(Mul, mul);

impl Div<DD> for DD {
    type Output = DD;
    fn div(self, rhs: DD) -> DD {
        let b = rhs.hi();
        let q1 = self.hi() / b;
        let r = self.0 - rhs.0 * q1;
        let q2 = r.hi() / b;
        let r = r - rhs.0 * q2;
        let q3 = r.hi() / b;
        DD(TwoFloat::new_add(q1, q2) + q3)
    }
}

impl Div<f64> for DD {
    type Output = DD;
    fn div(self, rhs: f64) -> DD {
        DD(self.0 / rhs)
    }
}

impl Div<DD> for f64 {
    type Output = DD;
    fn div(self, rhs: DD) -> DD {
        DD::from(self) / rhs
    }
}

impl AddAssign for DD {
    fn add_assign(&mut self, rhs: DD) {
        *self = *self + rhs;
    }
}

impl SubAssign for DD {
    fn sub_assign(&mut self, rhs: DD) {
        *self = *self - rhs;
    }
}

impl MulAssign for DD {
    fn mul_assign(&mut self, rhs: DD) {
        *self = *self * rhs;
    }
}

impl std::iter::Sum for DD {
    fn sum<I: Iterator<Item = DD>>(iter: I) -> DD {
        iter.fold(DD::from(0.0), |a, b| a + b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quotient_is_double_double_accurate() {
        let a = DD::from(0.3);
        let b = DD::from(3.0);
        let q = a / b;
        assert!((q * b - a).hi().abs() < 1e-32);
        let tiny = DD::from(1e-25);
        let d = (DD::from(1.0) + tiny) - 1.0;
        assert_eq!((tiny / d).hi(), 1.0);
        assert_eq!((tiny / d).lo(), 0.0);
    }

    #[test]
    fn sqrt_two() {
        let s = DD::from(2.0).sqrt();
        assert!((s * s - 2.0).hi().abs() < 1e-31);
        assert_eq!(DD::from(0.0).sqrt().hi(), 0.0);
    }

    proptest! {
        #[test]
        fn division_residual(a in -1e3f64..1e3, b in 0.01f64..1e3, al in -1e-17f64..1e-17) {
            let x = DD::new_add(a, a * al);
            let y = DD::from(b) + DD::from(b * 1e-17);
            let q = x / y;
            let res = (q * y - x).hi().abs();
            prop_assert!(res <= 1e-30 * a.abs().max(1e-300));
        }
    }
}
