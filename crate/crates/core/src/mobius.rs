//! Fractional-linear maps x ↦ (a x + b)/(c x + d) with double-double coefficients.

use crate::dd::DD;

use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mobius {
    pub a: DD,
    pub b: DD,
    pub c: DD,
    pub d: DD,
}

impl Mobius {
    pub fn new(a: DD, b: DD, c: DD, d: DD) -> Self {
        Mobius { a, b, c, d }
    }

    pub fn from_f64(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mobius::new(a.into(), b.into(), c.into(), d.into())
    }

    pub fn identity() -> Self {
        Mobius::from_f64(1.0, 0.0, 0.0, 1.0)
    }

    pub fn affine(slope: DD, intercept: DD) -> Self {
        Mobius::new(slope, intercept, 0.0.into(), 1.0.into())
    }

    pub fn det(&self) -> DD {
        self.a * self.d - self.b * self.c
    }

    /// `self ∘ other` as a coefficient-level matrix product.
    pub fn compose(&self, other: &Mobius) -> Mobius {
        Mobius {
            a: self.a * other.a + self.b * other.c,
            b: self.a * other.b + self.b * other.d,
            c: self.c * other.a + self.d * other.c,
            d: self.c * other.b + self.d * other.d,
        }
    }

    pub fn inverse(&self) -> Mobius {
        Mobius {
            a: self.d,
            b: -self.b,
            c: -self.c,
            d: self.a,
        }
    }

    /// Coefficients scaled so that |det| = 1; the map is unchanged.
    pub fn normalized(&self) -> Mobius {
        let s = self.det().abs().sqrt();
        Mobius {
            a: self.a / s,
            b: self.b / s,
            c: self.c / s,
            d: self.d / s,
        }
    }

    fn coeffs<R: Real>(&self) -> (R, R, R, R) {
        (
            R::from_dd(self.a),
            R::from_dd(self.b),
            R::from_dd(self.c),
            R::from_dd(self.d),
        )
    }

    pub fn eval<R: Real>(&self, x: R) -> R {
        let (a, b, c, d) = self.coeffs::<R>();
        (a * x + b) / (c * x + d)
    }

    pub fn deriv<R: Real>(&self, x: R) -> R {
        let (_, _, c, d) = self.coeffs::<R>();
        let den = c * x + d;
        R::from_dd(self.det()) / (den * den)
    }

    pub fn second_deriv<R: Real>(&self, x: R) -> R {
        let (_, _, c, d) = self.coeffs::<R>();
        let den = c * x + d;
        -R::from_f64(2.0) * c * R::from_dd(self.det()) / (den * den * den)
    }

    /// f(x+e) − f(x) without cancellation.
    pub fn increment<R: Real>(&self, x: R, e: R) -> R {
        let (_, _, c, d) = self.coeffs::<R>();
        let d0 = c * x + d;
        let d1 = c * (x + e) + d;
        R::from_dd(self.det()) * e / (d0 * d1)
    }

    /// f(x+e) − f(x) − f′(x)e without cancellation.
    pub fn remainder<R: Real>(&self, x: R, e: R) -> R {
        let (_, _, c, d) = self.coeffs::<R>();
        let d0 = c * x + d;
        let d1 = c * (x + e) + d;
        -R::from_dd(self.det()) * c * e * e / (d0 * d0 * d1)
    }

    /// Pole location −d/c, if any.
    pub fn pole(&self) -> Option<f64> {
        let c = self.c.hi();
        if c == 0.0 {
            None
        } else {
            Some(-(self.d / self.c).hi())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Mobius {
        Mobius::from_f64(2.0, 1.0, 0.5, 3.0)
    }

    #[test]
    fn inverse_roundtrip() {
        let m = sample();
        let inv = m.inverse();
        for &x in &[-1.0, 0.0, 0.3, 2.0] {
            let y: f64 = m.eval(x);
            assert!((inv.eval(y) - x).abs() < 1e-14);
        }
    }

    #[test]
    fn derivative_against_centered_difference() {
        let m = sample();
        let h = 1e-5;
        for &x in &[-1.0, 0.0, 0.7] {
            let fd = (m.eval(x + h) - m.eval(x - h)) / (2.0 * h);
            assert!((fd - m.deriv(x)).abs() < 1e-8);
            let fd2 = (m.eval(x + h) - 2.0 * m.eval(x) + m.eval(x - h)) / (h * h);
            assert!((fd2 - m.second_deriv(x)).abs() < 1e-4);
        }
    }

    #[test]
    fn increment_tiny_step_is_exact() {
        let m = sample();
        let x = DD::from(0.3);
        let e = 1e-30_f64;
        let inc: f64 = m.increment(0.3, e);
        // linear term dominates; compare with derivative
        assert!((inc / e - m.deriv(0.3)).abs() < 1e-14);
        let rem: f64 = m.remainder(0.3, e);
        let expected = 0.5 * m.second_deriv::<f64>(0.3) * e * e;
        assert!((rem - expected).abs() <= 1e-12 * expected.abs());
        // double-double evaluation of the difference agrees at a moderate step
        let e2 = DD::from(1e-6);
        let direct = m.eval(x + e2) - m.eval(x);
        let closed = m.increment(x, e2);
        assert!(((direct - closed) / closed).hi().abs() < 1e-20);
    }

    proptest! {
        #[test]
        fn composition_closure(x in -0.9f64..0.9, a in 0.5f64..2.0, b in -0.5f64..0.5,
                               c in -0.3f64..0.3, d in 1.0f64..2.0) {
            let m1 = Mobius::from_f64(a, b, c, d);
            let m2 = sample();
            let comp = m1.compose(&m2);
            let pointwise: f64 = m1.eval(m2.eval(x));
            let algebra: f64 = comp.eval(x);
            prop_assert!((pointwise - algebra).abs() < 1e-10);
        }
    }
}
