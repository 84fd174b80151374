//! Scalar abstraction over `f64` and double-double (`DD`).
//!
//! Map evaluation and orbit computation are generic over [`Real`] so the same
//! code runs in double or extended precision.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use crate::dd::DD;

/// Working precision for orbit and partition computations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    Double,
    Extended,
}

impl Precision {
    /// Smallest interval length that is still trusted at this precision.
    pub fn floor(self) -> f64 {
        match self {
            Precision::Double => 1e-12,
            Precision::Extended => 1e-27,
        }
    }
}

pub trait Real:
    Copy
    + Debug
    + PartialOrd
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    const EPSILON: f64;

    fn from_f64(x: f64) -> Self;
    fn from_dd(x: DD) -> Self;
    fn to_f64(self) -> f64;
    fn to_dd(self) -> DD;
    fn floor(self) -> Self;
    fn exp(self) -> Self;
    fn exp_m1(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn abs(self) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn one() -> Self {
        Self::from_f64(1.0)
    }

    /// ln(1 + x), accurate for small x.
    fn ln_1p(self) -> Self {
        let y = Self::one() + self;
        let d = y - Self::one();
        if d.to_f64() == 0.0 {
            return self;
        }
        y.ln() * (self / d)
    }
}

impl Real for f64 {
    const EPSILON: f64 = f64::EPSILON;

    fn from_f64(x: f64) -> Self {
        x
    }
    fn from_dd(x: DD) -> Self {
        x.hi() + x.lo()
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn to_dd(self) -> DD {
        DD::from(self)
    }
    fn floor(self) -> Self {
        f64::floor(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn exp_m1(self) -> Self {
        f64::exp_m1(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn ln_1p(self) -> Self {
        f64::ln_1p(self)
    }
}

const LN2_HI: f64 = std::f64::consts::LN_2;
const LN2_LO: f64 = 2.319_046_813_846_299_6e-17;
const EXP_HALVINGS: i32 = 10;

fn dd_ln2() -> DD {
    DD::new_add(LN2_HI, LN2_LO)
}

/// expm1 for |r| <= ln2/2 by argument halving and a short Taylor series.
fn dd_expm1_reduced(r: DD) -> DD {
    let scale = f64::powi(2.0, -EXP_HALVINGS);
    let s = r * scale;
    let mut term = s;
    let mut sum = s;
    for k in 2..=12 {
        term = term * s / (k as f64);
        sum += term;
        if term.hi().abs() < 1e-36 {
            break;
        }
    }
    for _ in 0..EXP_HALVINGS {
        sum = sum * (sum + 2.0);
    }
    sum
}

fn dd_exp(x: DD) -> DD {
    let hi = x.hi();
    if hi > 709.0 {
        return DD::from(f64::INFINITY);
    }
    if hi < -745.0 {
        return DD::from(0.0);
    }
    let k = (hi / LN2_HI).round();
    let r = x - dd_ln2() * k;
    let e = dd_expm1_reduced(r) + 1.0;
    e * f64::powi(2.0, k as i32)
}

fn dd_expm1(x: DD) -> DD {
    if x.hi().abs() <= 0.5 * LN2_HI {
        dd_expm1_reduced(x)
    } else {
        dd_exp(x) - 1.0
    }
}

fn dd_ln(x: DD) -> DD {
    let y0 = x.hi().ln();
    if !y0.is_finite() {
        return DD::from(y0);
    }
    let y0 = DD::from(y0);
    // One Newton step on exp(y) = x doubles the number of correct digits.
    let w = x * dd_exp(-y0);
    y0 + (w - 1.0)
}

impl Real for DD {
    const EPSILON: f64 = 4.93e-32;

    fn from_f64(x: f64) -> Self {
        DD::from(x)
    }
    fn from_dd(x: DD) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self.hi() + self.lo()
    }
    fn to_dd(self) -> DD {
        self
    }
    fn floor(self) -> Self {
        DD::floor(self)
    }
    fn exp(self) -> Self {
        dd_exp(self)
    }
    fn exp_m1(self) -> Self {
        dd_expm1(self)
    }
    fn ln(self) -> Self {
        dd_ln(self)
    }
    fn sqrt(self) -> Self {
        DD::sqrt(self)
    }
    fn abs(self) -> Self {
        DD::abs(&self)
    }
}

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl std::iter::FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = KahanSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// ln(e^a + e^b) without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (m, d) = if a > b { (a, b - a) } else { (b, a - b) };
    m + d.exp().ln_1p()
}

/// Max-shifted log-sum-exp with compensated accumulation.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    let s: KahanSum = values.iter().map(|v| (v - m).exp()).collect();
    m + s.value().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tf(x: f64) -> DD {
        DD::from(x)
    }

    #[test]
    fn dd_exp_matches_known_digits() {
        // e = 2.718281828459045235360287471352662497757...
        let e = dd_exp(tf(1.0));
        let e_hi = std::f64::consts::E;
        let e_lo = 1.4456468917292502e-16;
        let err = (e - DD::new_add(e_hi, e_lo)).hi().abs();
        assert!(err < 1e-30, "err {err:e}");
    }

    #[test]
    fn dd_ln_inverts_exp() {
        for &x in &[0.1, 0.7, 1.0, 3.5, -2.25, 20.0] {
            let y = dd_ln(dd_exp(tf(x)));
            let err = (y - tf(x)).hi().abs();
            assert!(err < 1e-29 * x.abs().max(1.0), "x={x} err={err:e}");
        }
    }

    #[test]
    fn dd_ln2_consistent() {
        let two = dd_exp(dd_ln2());
        assert!((two - 2.0).hi().abs() < 1e-30);
    }

    #[test]
    fn dd_expm1_small_argument() {
        let x = tf(1e-20);
        let y = dd_expm1(x);
        // expm1(x) = x + x^2/2 + ...
        let rel = ((y - x) / x).hi();
        assert!((rel - 5e-21).abs() < 1e-30);
    }

    #[test]
    fn ln_1p_small() {
        let x = 1e-18_f64;
        assert!((Real::ln_1p(x) - x).abs() < 1e-33);
        let y = Real::ln_1p(tf(1e-25));
        assert!(((y - tf(1e-25)) / tf(1e-25)).hi().abs() < 1e-20);
    }

    #[test]
    fn kahan_beats_naive() {
        let mut k = KahanSum::new();
        k.add(1.0);
        for _ in 0..1000 {
            k.add(1e-16);
        }
        assert!((k.value() - (1.0 + 1e-13)).abs() < 1e-18);
    }

    #[test]
    fn log_sum_exp_large_values() {
        let v = [1000.0, 1000.0];
        assert!((log_sum_exp(&v) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert!((log_add_exp(1000.0, 1000.0) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 3.0), 3.0);
    }
}
