//! Normalized first-return maps T_m on J_m = [x_{q_{m+1}}, x_{q_m}].

use serde::{Deserialize, Serialize};

use crate::circle::{ccw_distance, signed_offset, wrap};
use crate::dd::DD;
use crate::error::{Error, Result};
use crate::map::{iterate, BreakMap, CircleMap, Side};
use crate::real::{KahanSum, Real};
use crate::rotation::closest_returns;

/// Orbit points closer than this to a break use the break's one-sided derivative.
const SNAP: f64 = 1e-10;

/// ∏_{j<len} T′(x_j) with every factor taken from `side`; points numerically on
/// a break are snapped to it so the one-sided value is used.
pub fn one_sided_derivative_product(map: &BreakMap, x0: DD, len: u64, side: Side) -> f64 {
    let mut x = wrap(x0);
    let mut log = KahanSum::new();
    for _ in 0..len {
        let xf = x.to_f64();
        let at = map
            .breaks()
            .iter()
            .map(|b| b.position)
            .find(|&p| signed_offset(xf, p).abs() < SNAP)
            .unwrap_or(xf);
        log.add(map.deriv(at, side).ln());
        x = map.eval(x);
    }
    log.value().exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpIdentity {
    /// c²_{T_m}(a_m)
    pub at_a: f64,
    /// c²_{T_m}(0)
    pub at_zero: f64,
    /// ∏_p c_p² over the breaks of T, inverted when the normalization
    /// reverses orientation (left and right limits trade places).
    pub expected: f64,
    pub orientation_preserving: bool,
}

impl JumpIdentity {
    pub fn relative_error(&self) -> f64 {
        (self.at_a * self.at_zero / self.expected - 1.0).abs()
    }
}

#[derive(Debug, Clone)]
pub struct RenormalizedReturnMap<'a> {
    map: &'a BreakMap,
    pub level: usize,
    pub q_m: u64,
    pub q_m1: u64,
    origin: DD,
    scale: DD,
    /// Position of x_b in normalized coordinates.
    pub a_m: f64,
}

/// T_m for the orbit of the marked break point of `map`.
pub fn normalized_return_map(map: &BreakMap, m: usize) -> Result<RenormalizedReturnMap<'_>> {
    if map.breaks().is_empty() {
        return Err(Error::InvalidParameter("normalized return map needs a break point".into()));
    }
    let xb = map.break_point_tf();
    let q = closest_returns(map, xb, m + 2, 10_000_000)?;
    let (q_m, q_m1) = (q[m], q[m + 1]);
    if q_m == q_m1 {
        return Err(Error::InvalidParameter("level must be at least 1".into()));
    }
    let a = iterate(map, xb, q_m1 as usize);
    let b = iterate(map, xb, q_m as usize);
    let ab = ccw_distance(a, b);
    let scale = if ccw_distance(a, xb) < ab { ab } else { -ccw_distance(b, a) };
    let a_m = (along(a, xb, scale) / scale.abs()).to_f64();
    Ok(RenormalizedReturnMap {
        map,
        level: m,
        q_m,
        q_m1,
        origin: a,
        scale,
        a_m,
    })
}

/// Distance from `from` to `to` travelling in the direction of `scale`.
fn along(from: DD, to: DD, scale: DD) -> DD {
    if scale > 0.0 {
        ccw_distance(from, to)
    } else {
        ccw_distance(to, from)
    }
}

impl RenormalizedReturnMap<'_> {
    pub fn orientation_preserving(&self) -> bool {
        self.scale > 0.0
    }

    pub fn interval_length(&self) -> f64 {
        self.scale.abs().to_f64()
    }

    fn position<R: Real>(&self, z: R) -> R {
        wrap(R::from_dd(self.origin) + z * R::from_dd(self.scale))
    }

    fn uses_first_branch(&self, z: f64, side: Side) -> bool {
        z < self.a_m || (z == self.a_m && side == Side::Left)
    }

    /// Normalized coordinate of the circle point `y`, allowing a small overshoot below 0.
    fn coordinate<R: Real>(&self, y: R) -> R {
        let len = self.scale.abs();
        let mut w = along(self.origin, y.to_dd(), self.scale);
        if w > (len + 1.0) * 0.5 {
            w -= DD::from(1.0);
        }
        R::from_dd(w / len)
    }

    fn branch_value<R: Real>(&self, u: R) -> R {
        let x = self.position(u);
        if u.to_f64() < self.a_m {
            self.coordinate(iterate(self.map, x, self.q_m as usize))
        } else {
            self.coordinate(iterate(self.map, x, self.q_m1 as usize)) + R::one()
        }
    }

    fn derivative(&self, z: f64, side: Side) -> f64 {
        let x_side = if self.scale > 0.0 {
            side
        } else {
            match side {
                Side::Left => Side::Right,
                Side::Right => Side::Left,
            }
        };
        let len = if self.uses_first_branch(z, side) { self.q_m } else { self.q_m1 };
        let x = self.position(DD::from(z));
        one_sided_derivative_product(self.map, x, len, x_side)
    }

    pub fn jump_identity(&self) -> JumpIdentity {
        let at_a = self.derivative(self.a_m, Side::Left) / self.derivative(self.a_m, Side::Right);
        let at_zero = self.derivative(1.0, Side::Left) / self.derivative(0.0, Side::Right);
        let total: f64 = self.map.breaks().iter().map(|b| b.jump_ratio.powi(2)).product();
        let orientation_preserving = self.orientation_preserving();
        JumpIdentity {
            at_a,
            at_zero,
            expected: if orientation_preserving { total } else { total.recip() },
            orientation_preserving,
        }
    }
}

impl CircleMap for RenormalizedReturnMap<'_> {
    fn lift<R: Real>(&self, x: R) -> R {
        let k = x.floor();
        self.branch_value(x - k) + k
    }

    fn deriv(&self, x: f64, side: Side) -> f64 {
        let u = x - x.floor();
        if u == 0.0 && side == Side::Left {
            return self.derivative(1.0, Side::Left);
        }
        self.derivative(u, side)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::MapSpec;
    use crate::rotation::rotation_number;

    fn g1(c: f64) -> BreakMap {
        BreakMap::from_spec(MapSpec::FractionalLinear { c, which: 1 }).unwrap()
    }

    #[test]
    fn branches_meet_at_the_ends() {
        let m = g1(2.0);
        for level in 2..8 {
            let t = normalized_return_map(&m, level).unwrap();
            assert!(t.a_m > 0.0 && t.a_m < 1.0);
            let below = t.lift(t.a_m - 1e-13);
            let above = t.lift(t.a_m);
            assert!((below - 1.0).abs() < 1e-9, "level {level}: {below}");
            assert!((above - 1.0).abs() < 1e-9, "level {level}: {above}");
            assert!((t.lift(1.0) - 1.0 - t.lift(0.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn rotation_number_is_golden() {
        let m = g1(2.0);
        let omega = (5f64.sqrt() - 1.0) / 2.0;
        for level in [2, 4, 6] {
            let t = normalized_return_map(&m, level).unwrap();
            let est = rotation_number(&t, 20_000, 1e-3).unwrap();
            let r = est.rho.min(1.0 - est.rho);
            assert!((r - (1.0 - omega)).abs() < 1e-4, "level {level}: {}", est.rho);
        }
    }

    #[test]
    fn jump_identity_for_the_pair() {
        for c in [0.5, 2.0, 4.0] {
            let m = g1(c);
            for level in 2..10 {
                let j = normalized_return_map(&m, level).unwrap().jump_identity();
                assert!(j.relative_error() < 1e-10, "c={c} level {level}: {j:?}");
                let total = if j.orientation_preserving { j.expected } else { j.expected.recip() };
                assert!((total - c * c).abs() < 1e-10 * c * c);
            }
        }
    }

    #[test]
    fn derivative_is_finite_difference() {
        let m = g1(2.0);
        let t = normalized_return_map(&m, 4).unwrap();
        for &z in &[0.1, 0.3, 0.77, 0.95] {
            if (z - t.a_m).abs() < 1e-3 {
                continue;
            }
            let h = 1e-7;
            let fd = (t.lift(z + h) - t.lift(z - h)) / (2.0 * h);
            let d = t.deriv(z, Side::Right);
            assert!((fd / d - 1.0).abs() < 1e-5, "z={z}: {fd} vs {d}");
        }
    }
}
