//! Piecewise-smooth circle homeomorphisms with break points.

use serde::{Deserialize, Serialize};
use crate::dd::DD;

use crate::circle::wrap;
use crate::error::{Error, Result};
use crate::mobius::Mobius;
use crate::pair::build_fractional_linear_pair;
use crate::real::{Precision, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Orientation in which the family's reference rotation number is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Counterclockwise,
    Clockwise,
}

/// Anything with a continuous degree-one lift.
pub trait CircleMap: Sync {
    fn lift<R: Real>(&self, x: R) -> R;
    fn deriv(&self, x: f64, side: Side) -> f64;

    fn eval<R: Real>(&self, x: R) -> R {
        wrap(self.lift(x))
    }

    fn sense(&self) -> Sense {
        Sense::Counterclockwise
    }
}

/// x ↦ scale·expm1(rate·(x − center)) + base.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpBranch {
    pub rate: DD,
    pub center: DD,
    pub scale: DD,
    pub base: DD,
}

impl ExpBranch {
    fn parts<R: Real>(&self) -> (R, R, R, R) {
        (
            R::from_dd(self.rate),
            R::from_dd(self.center),
            R::from_dd(self.scale),
            R::from_dd(self.base),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Branch {
    Mobius(Mobius),
    Exp(ExpBranch),
}

impl Branch {
    pub fn eval<R: Real>(&self, x: R) -> R {
        match self {
            Branch::Mobius(m) => m.eval(x),
            Branch::Exp(b) => {
                let (r, c, s, base) = b.parts::<R>();
                s * (r * (x - c)).exp_m1() + base
            }
        }
    }

    pub fn deriv<R: Real>(&self, x: R) -> R {
        match self {
            Branch::Mobius(m) => m.deriv(x),
            Branch::Exp(b) => {
                let (r, c, s, _) = b.parts::<R>();
                s * r * (r * (x - c)).exp()
            }
        }
    }

    pub fn second_deriv<R: Real>(&self, x: R) -> R {
        match self {
            Branch::Mobius(m) => m.second_deriv(x),
            Branch::Exp(b) => {
                let (r, c, s, _) = b.parts::<R>();
                s * r * r * (r * (x - c)).exp()
            }
        }
    }

    /// f(x+h) − f(x).
    pub fn increment<R: Real>(&self, x: R, h: R) -> R {
        match self {
            Branch::Mobius(m) => m.increment(x, h),
            Branch::Exp(b) => {
                let (r, c, s, _) = b.parts::<R>();
                s * (r * (x - c)).exp() * (r * h).exp_m1()
            }
        }
    }

    /// f(x+h) − f(x) − f′(x)h.
    pub fn remainder<R: Real>(&self, x: R, h: R) -> R {
        match self {
            Branch::Mobius(m) => m.remainder(x, h),
            Branch::Exp(b) => {
                let (r, c, s, _) = b.parts::<R>();
                let u = r * h;
                s * (r * (x - c)).exp() * expm1_minus_linear(u)
            }
        }
    }

    /// f′(x+h) − f′(x).
    pub fn deriv_increment<R: Real>(&self, x: R, h: R) -> R {
        match self {
            Branch::Mobius(m) => {
                let c = R::from_dd(m.c);
                let d = R::from_dd(m.d);
                let d0 = c * x + d;
                let d1 = c * (x + h) + d;
                -R::from_dd(m.det()) * c * h * (d0 + d1) / (d0 * d0 * d1 * d1)
            }
            Branch::Exp(b) => {
                let (r, c, s, _) = b.parts::<R>();
                s * r * (r * (x - c)).exp() * (r * h).exp_m1()
            }
        }
    }

    pub fn inverse<R: Real>(&self, y: R) -> R {
        match self {
            Branch::Mobius(m) => m.inverse().eval(y),
            Branch::Exp(b) => {
                let (r, c, s, base) = b.parts::<R>();
                c + ((y - base) / s).ln_1p() / r
            }
        }
    }
}

/// expm1(u) − u, with a series near zero.
fn expm1_minus_linear<R: Real>(u: R) -> R {
    if u.to_f64().abs() < 1e-3 {
        let mut term = u * u / R::from_f64(2.0);
        let mut sum = term;
        for k in 3..=14 {
            term = term * u / R::from_f64(k as f64);
            sum = sum + term;
        }
        sum
    } else {
        u.exp_m1() - u
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    /// Left end in [0,1); the piece runs to the next start (or to 1).
    pub start: DD,
    pub branch: Branch,
    /// The join at `start` is C¹ by construction.
    pub smooth_join: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreakInfo {
    pub position: f64,
    /// √(T′(p−)/T′(p+)).
    pub jump_ratio: f64,
}

/// Serializable description of a map family member.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MapSpec {
    Rotation { rho: f64 },
    FractionalLinear { c: f64, which: u8 },
    SmoothBreak { c: f64, offset: f64 },
    PiecewiseLinear { c: f64, p: f64, offset: f64 },
}

/// Map spec plus working precision, as stored in config files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapDocument {
    #[serde(flatten)]
    pub spec: MapSpec,
    #[serde(default)]
    pub precision: Precision,
}

impl MapDocument {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("map document serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidParameter(e.to_string()))
    }
}

impl MapSpec {
    pub fn offset(&self) -> Option<f64> {
        match *self {
            MapSpec::Rotation { rho } => Some(rho),
            MapSpec::FractionalLinear { .. } => None,
            MapSpec::SmoothBreak { offset, .. } | MapSpec::PiecewiseLinear { offset, .. } => {
                Some(offset)
            }
        }
    }

    pub fn with_offset(&self, t: f64) -> Result<MapSpec> {
        Ok(match *self {
            MapSpec::Rotation { .. } => MapSpec::Rotation { rho: t },
            MapSpec::SmoothBreak { c, .. } => MapSpec::SmoothBreak { c, offset: t },
            MapSpec::PiecewiseLinear { c, p, .. } => MapSpec::PiecewiseLinear { c, p, offset: t },
            MapSpec::FractionalLinear { .. } => {
                return Err(Error::InvalidParameter(
                    "fractional-linear maps have no free offset".into(),
                ))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BreakMap {
    pub spec: MapSpec,
    pieces: Vec<Piece>,
    offset: DD,
    break_point: DD,
    sense: Sense,
    breaks: Vec<BreakInfo>,
}

/// Derivative and curvature bounds of a map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivativeBounds {
    pub min: f64,
    pub max: f64,
    pub max_abs_second: f64,
}

impl BreakMap {
    pub fn from_spec(spec: MapSpec) -> Result<BreakMap> {
        let tf = DD::from;
        let (pieces, offset, break_point, sense) = match spec {
            MapSpec::Rotation { rho } => {
                let pieces = vec![Piece {
                    start: tf(0.0),
                    branch: Branch::Mobius(Mobius::identity()),
                    smooth_join: true,
                }];
                (pieces, tf(rho), tf(0.0), Sense::Counterclockwise)
            }
            MapSpec::FractionalLinear { c, which } => {
                if which != 1 && which != 2 {
                    return Err(Error::InvalidParameter(format!("which must be 1 or 2, got {which}")));
                }
                let pair = build_fractional_linear_pair(c)?;
                let mp = pair.pair(which as usize);
                let one = tf(1.0);
                let zero = tf(0.0);
                let alpha = mp.alpha;
                let l = Mobius::new(one, one, zero, one + alpha);
                let l_inv = l.inverse();
                let shift = Mobius::new(one, one, zero, one);
                let b1 = l.compose(&mp.f).compose(&l_inv).normalized();
                let b2 = shift.compose(&l).compose(&mp.g).compose(&l_inv).normalized();
                let xb = one / (one + alpha);
                let pieces = vec![
                    Piece {
                        start: zero,
                        branch: Branch::Mobius(b1),
                        smooth_join: false,
                    },
                    Piece {
                        start: xb,
                        branch: Branch::Mobius(b2),
                        smooth_join: false,
                    },
                ];
                (pieces, zero, xb, Sense::Clockwise)
            }
            MapSpec::SmoothBreak { c, offset } => {
                if !(c > 0.0) || c == 1.0 {
                    return Err(Error::InvalidParameter(format!("jump ratio must be positive and != 1, got {c}")));
                }
                let a = Real::ln(tf(c)) * 2.0;
                let scale = tf(1.0) / Real::exp_m1(a);
                let half = tf(0.5);
                let pieces = vec![
                    Piece {
                        start: tf(0.0),
                        branch: Branch::Exp(ExpBranch {
                            rate: a,
                            center: -half,
                            scale,
                            base: -half,
                        }),
                        smooth_join: true,
                    },
                    Piece {
                        start: half,
                        branch: Branch::Exp(ExpBranch {
                            rate: a,
                            center: half,
                            scale,
                            base: half,
                        }),
                        smooth_join: false,
                    },
                ];
                (pieces, tf(offset), half, Sense::Counterclockwise)
            }
            MapSpec::PiecewiseLinear { c, p, offset } => {
                if !(c > 0.0) || c == 1.0 || !(p > 0.0 && p < 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "need c > 0, c != 1 and 0 < p < 1, got c={c}, p={p}"
                    )));
                }
                let r = tf(c) * tf(c);
                let pt = tf(p);
                let s2 = tf(1.0) / (r * pt + 1.0 - pt);
                let s1 = r * s2;
                let pieces = vec![
                    Piece {
                        start: tf(0.0),
                        branch: Branch::Mobius(Mobius::affine(s1, tf(0.0))),
                        smooth_join: false,
                    },
                    Piece {
                        start: pt,
                        branch: Branch::Mobius(Mobius::affine(s2, (s1 - s2) * pt)),
                        smooth_join: false,
                    },
                ];
                (pieces, tf(offset), pt, Sense::Counterclockwise)
            }
        };
        let mut map = BreakMap {
            spec,
            pieces,
            offset,
            break_point,
            sense,
            breaks: Vec::new(),
        };
        map.breaks = map.compute_breaks();
        Ok(map)
    }

    pub fn rotation(rho: f64) -> BreakMap {
        BreakMap::from_spec(MapSpec::Rotation { rho }).expect("rotation is always valid")
    }

    pub fn with_offset(&self, t: f64) -> Result<BreakMap> {
        BreakMap::from_spec(self.spec.with_offset(t)?)
    }

    fn compute_breaks(&self) -> Vec<BreakInfo> {
        self.pieces
            .iter()
            .filter(|p| !p.smooth_join)
            .filter_map(|p| {
                let x = p.start.hi();
                let ratio = self.deriv(x, Side::Left) / self.deriv(x, Side::Right);
                if (ratio - 1.0).abs() < 1e-12 {
                    None
                } else {
                    Some(BreakInfo {
                        position: x,
                        jump_ratio: ratio.sqrt(),
                    })
                }
            })
            .collect()
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn offset(&self) -> DD {
        self.offset
    }

    /// The marked break point x_b (0 for a rigid rotation).
    pub fn break_point(&self) -> f64 {
        self.break_point.hi()
    }

    pub fn break_point_tf(&self) -> DD {
        self.break_point
    }

    /// All points where the one-sided derivatives differ.
    pub fn breaks(&self) -> &[BreakInfo] {
        &self.breaks
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    fn piece_end(&self, i: usize) -> DD {
        if i + 1 < self.pieces.len() {
            self.pieces[i + 1].start
        } else {
            DD::from(1.0)
        }
    }

    fn piece_index<R: Real>(&self, y: R) -> usize {
        let mut idx = 0;
        for (i, p) in self.pieces.iter().enumerate() {
            if y >= R::from_dd(p.start) {
                idx = i;
            }
        }
        idx
    }

    /// Piece used for a one-sided evaluation at circle point `x`, and the lift
    /// shift (0 or 1) to apply to `x` inside that piece.
    fn piece_for_side(&self, x: f64, side: Side) -> (usize, f64) {
        let y = wrap(x);
        let i = self.piece_index(y);
        if side == Side::Left && y == self.pieces[i].start.hi() {
            if i == 0 {
                (self.pieces.len() - 1, 1.0)
            } else {
                (i - 1, 0.0)
            }
        } else {
            (i, 0.0)
        }
    }

    pub fn deriv_r<R: Real>(&self, x: R, side: Side) -> R {
        let y = wrap(x);
        let (i, shift) = self.piece_for_side(y.to_f64(), side);
        self.pieces[i].branch.deriv(y + R::from_f64(shift))
    }

    pub fn second_deriv(&self, x: f64, side: Side) -> f64 {
        let y = wrap(x);
        let (i, shift) = self.piece_for_side(y, side);
        self.pieces[i].branch.second_deriv(y + shift)
    }

    /// √(T′(p−)/T′(p+)).
    pub fn jump_ratio(&self, p: f64) -> Result<f64> {
        let ratio = self.deriv(p, Side::Left) / self.deriv(p, Side::Right);
        if (ratio - 1.0).abs() < 1e-10 {
            return Err(Error::NotABreakPoint { point: p, ratio });
        }
        Ok(ratio.sqrt())
    }

    /// Inverse of the lift.
    pub fn inverse_lift<R: Real>(&self, y: R) -> R {
        let f0 = self.lift(R::zero());
        let k = (y - f0).floor();
        let yr = y - k;
        let n = self.pieces.len();
        let mut idx = 0;
        for i in 0..n {
            let fs = self.lift(R::from_dd(self.pieces[i].start));
            if yr >= fs {
                idx = i;
            }
        }
        let local = yr - R::from_dd(self.offset);
        let x = self.pieces[idx].branch.inverse(local);
        x + k
    }

    pub fn inverse_eval<R: Real>(&self, y: R) -> R {
        wrap(self.inverse_lift(y))
    }

    /// Walk from x to x+e across piece boundaries, accumulating
    /// (F(x+e) − F(x), F(x+e) − F(x) − F′(x⁺)e) without cancellation.
    fn walk<R: Real>(&self, x: R, e: R) -> (R, R) {
        let x = wrap(x);
        let target = x + e;
        let forward = e.to_f64() >= 0.0;
        let n = self.pieces.len();
        let mut idx = self.piece_index(x);
        let mut k = R::zero();
        let mut pos = x;
        let mut inc = R::zero();
        let mut rem = R::zero();
        let mut dcur = R::zero();
        let mut done = R::zero();
        for _ in 0..(2 * n + 4) {
            let br = self.pieces[idx].branch;
            let seg_end = if forward {
                let end = R::from_dd(self.piece_end(idx)) + k;
                if target < end {
                    target
                } else {
                    end
                }
            } else {
                let start = R::from_dd(self.pieces[idx].start) + k;
                if target > start {
                    target
                } else {
                    start
                }
            };
            // Inside the last piece use the exact remaining offset: x + e may not
            // represent e at all when |e| is far below the spacing near x.
            let h = if seg_end == target { e - done } else { seg_end - pos };
            let local = pos - k;
            inc = inc + br.increment(local, h);
            rem = rem + br.remainder(local, h) + dcur * h;
            if seg_end == target {
                return (inc, rem);
            }
            dcur = dcur + br.deriv_increment(local, h);
            let boundary_local_old = seg_end - k;
            let (new_idx, new_k) = if forward {
                if idx + 1 < n {
                    (idx + 1, k)
                } else {
                    (0, k + R::one())
                }
            } else if idx > 0 {
                (idx - 1, k)
            } else {
                (n - 1, k - R::one())
            };
            let join_piece = if forward { new_idx } else { idx };
            if !self.pieces[join_piece].smooth_join {
                let d_new = self.pieces[new_idx].branch.deriv(seg_end - new_k);
                let d_old = br.deriv(boundary_local_old);
                dcur = dcur + d_new - d_old;
            }
            done = done + h;
            idx = new_idx;
            k = new_k;
            pos = seg_end;
        }
        (inc, rem)
    }

    /// F(x+e) − F(x) for a circle point x.
    pub fn increment<R: Real>(&self, x: R, e: R) -> R {
        self.walk(x, e).0
    }

    /// F(x+e) − F(x) − T′(x⁺)e for a circle point x.
    pub fn remainder<R: Real>(&self, x: R, e: R) -> R {
        self.walk(x, e).1
    }

    pub fn derivative_bounds(&self) -> DerivativeBounds {
        let mut min = f64::INFINITY;
        let mut max: f64 = 0.0;
        let mut second: f64 = 0.0;
        for (i, p) in self.pieces.iter().enumerate() {
            let a = p.start.hi();
            let b = self.piece_end(i).hi();
            for x in [a, b] {
                let d = p.branch.deriv(x);
                min = min.min(d);
                max = max.max(d);
                second = second.max(p.branch.second_deriv(x).abs());
            }
        }
        DerivativeBounds {
            min,
            max,
            max_abs_second: second,
        }
    }

    /// Total variation of ln T′ inside the branches, from branch end values
    /// (exact since T′ is monotone on every branch of the supported families).
    pub fn branch_variation_exact(&self) -> f64 {
        self.pieces
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let a = p.branch.deriv(p.start.hi()).ln();
                let b = p.branch.deriv(self.piece_end(i).hi()).ln();
                (b - a).abs()
            })
            .sum()
    }

    /// Total variation of ln T′ inside the branches on a grid that doubles
    /// until the estimate changes by less than `tol`.
    pub fn branch_variation(&self, tol: f64) -> f64 {
        let mut cells = 16usize;
        let mut prev = self.variation_on_grid(cells);
        loop {
            cells *= 2;
            let cur = self.variation_on_grid(cells);
            if (cur - prev).abs() < tol || cells > 1 << 22 {
                return cur;
            }
            prev = cur;
        }
    }

    fn variation_on_grid(&self, cells: usize) -> f64 {
        let mut total = 0.0;
        for (i, p) in self.pieces.iter().enumerate() {
            let a = p.start.hi();
            let b = self.piece_end(i).hi();
            let mut prev = p.branch.deriv(a).ln();
            for j in 1..=cells {
                let x = a + (b - a) * j as f64 / cells as f64;
                let cur = p.branch.deriv(x).ln();
                total += (cur - prev).abs();
                prev = cur;
            }
        }
        total
    }

    /// Sum over breaks of 2|ln c_p|.
    pub fn break_variation(&self) -> f64 {
        self.breaks.iter().map(|b| 2.0 * b.jump_ratio.ln().abs()).sum()
    }

    /// Total variation of ln T′ on the circle, v = v̄ + Σ_p 2|ln c_p|.
    pub fn denjoy_v(&self) -> f64 {
        self.branch_variation(1e-8) + self.break_variation()
    }

    pub fn theta(&self) -> f64 {
        (1.0 + (-self.denjoy_v()).exp()).powf(-0.5)
    }

    /// θ₊ = (1+e^{v})^{−1/2}, θ₋ = (1+e^{−v})^{−1/2}.
    pub fn theta_pm(&self) -> (f64, f64) {
        let v = self.denjoy_v();
        ((1.0 + v.exp()).powf(-0.5), (1.0 + (-v).exp()).powf(-0.5))
    }
}

impl CircleMap for BreakMap {
    fn lift<R: Real>(&self, x: R) -> R {
        let k = x.floor();
        let y = x - k;
        let i = self.piece_index(y);
        self.pieces[i].branch.eval(y) + R::from_dd(self.offset) + k
    }

    fn deriv(&self, x: f64, side: Side) -> f64 {
        self.deriv_r(x, side)
    }

    fn sense(&self) -> Sense {
        self.sense
    }
}

/// z₀, T(z₀), …, Tⁿ(z₀) as circle points.
pub fn orbit<R: Real, M: CircleMap>(map: &M, x0: R, n: usize) -> Vec<R> {
    let mut out = Vec::with_capacity(n + 1);
    let mut x = wrap(x0);
    out.push(x);
    for _ in 0..n {
        x = map.eval(x);
        out.push(x);
    }
    out
}

pub fn iterate<R: Real, M: CircleMap>(map: &M, x0: R, n: usize) -> R {
    let mut x = wrap(x0);
    for _ in 0..n {
        x = map.eval(x);
    }
    x
}

/// Orbit in the requested precision, returned as double-double values.
pub fn orbit_dd<M: CircleMap>(map: &M, x0: DD, n: usize, precision: Precision) -> Vec<DD> {
    match precision {
        Precision::Double => orbit(map, x0.hi(), n).into_iter().map(DD::from).collect(),
        Precision::Extended => orbit(map, x0, n),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pair::{build_fractional_linear_pair, jump_ratio_closed_form};
    use proptest::prelude::*;

    fn g1(c: f64) -> BreakMap {
        BreakMap::from_spec(MapSpec::FractionalLinear { c, which: 1 }).unwrap()
    }

    #[test]
    fn rotation_eval() {
        let r = BreakMap::rotation(0.25);
        assert!((r.eval(0.9_f64) - 0.15).abs() < 1e-15);
        assert_eq!(r.deriv(0.3, Side::Left), 1.0);
        assert!((iterate(&r, 0.0_f64, 4) - 0.0).abs() < 1e-15 || (iterate(&r, 0.0_f64, 4) - 1.0).abs() < 1e-15);
        assert_eq!(iterate(&r, 0.37_f64, 0), 0.37);
        assert!(matches!(r.jump_ratio(0.0), Err(Error::NotABreakPoint { .. })));
        assert!(r.breaks().is_empty());
    }

    #[test]
    fn g1_break_point_location_and_image() {
        let p = build_fractional_linear_pair(2.0).unwrap();
        let m = g1(2.0);
        let xb = 1.0 / (1.0 + p.alpha[0].hi());
        assert!((m.break_point() - xb).abs() < 1e-15);
        // T(x_b) = l(g(0)) = l(−1) = 0
        let img: DD = m.eval(m.break_point_tf());
        assert!(img.hi() < 1e-30 || img.hi() > 1.0 - 1e-30);
        assert_eq!(m.breaks().len(), 2);
    }

    #[test]
    fn g1_matches_direct_mobius_evaluation() {
        // independent evaluation: l ∘ f ∘ l⁻¹ with plain f64 formulas
        let c = 2.0;
        let p = build_fractional_linear_pair(c).unwrap();
        let (b, a) = (p.beta0.hi(), p.alpha[0].hi());
        let f = |x: f64| (a + c * x) * b / (b + (b + a - c) * x);
        let g = |x: f64| a * b * (x - c) / (a * b * c + (c - a - c * b) * x);
        let l = |x: f64| (x + 1.0) / (1.0 + a);
        let linv = |y: f64| (1.0 + a) * y - 1.0;
        let m = g1(c);
        for &y in &[0.1, 0.3, 0.55, 0.8, 0.95] {
            let x = linv(y);
            let direct = if x < 0.0 { l(f(x)) } else { wrap(l(g(x))) };
            assert!((m.eval(y) - direct).abs() < 1e-13, "y={y}");
        }
    }

    #[test]
    fn g1_jump_ratio_equals_closed_form() {
        for &c in &[0.5, 2.0, 4.0] {
            let p = build_fractional_linear_pair(c).unwrap();
            let m = g1(c);
            let j = m.jump_ratio(m.break_point()).unwrap();
            assert!((j - jump_ratio_closed_form(c, p.beta0.hi())).abs() < 1e-12);
            let j0 = m.jump_ratio(0.0).unwrap();
            assert!((j * j0 - c).abs() < 1e-12, "product {} for c={c}", j * j0);
        }
    }

    #[test]
    fn smooth_break_jump_and_continuity() {
        let m = BreakMap::from_spec(MapSpec::SmoothBreak { c: 2.0, offset: 0.1 }).unwrap();
        assert!((m.jump_ratio(0.5).unwrap() - 2.0).abs() < 1e-12);
        assert!(m.jump_ratio(0.0).is_err());
        assert_eq!(m.breaks().len(), 1);
        // lift continuity at both joins
        let eps = 1e-12;
        for &x in &[0.5_f64, 1.0] {
            let l = m.lift(x - eps);
            let r = m.lift(x + eps);
            assert!((l - r).abs() < 1e-10);
        }
        assert!((m.lift(1.0_f64) - m.lift(0.0_f64) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn piecewise_linear_slopes() {
        let m = BreakMap::from_spec(MapSpec::PiecewiseLinear { c: 1.5, p: 0.3, offset: 0.2 }).unwrap();
        assert!((m.jump_ratio(0.3).unwrap() - 1.5).abs() < 1e-12);
        assert!((m.jump_ratio(0.0).unwrap() - 1.0 / 1.5).abs() < 1e-12);
        assert!((m.lift(1.0_f64) - m.lift(0.0_f64) - 1.0).abs() < 1e-14);
        let b = m.derivative_bounds();
        assert!((b.max / b.min - 2.25).abs() < 1e-12);
        assert_eq!(b.max_abs_second, 0.0);
    }

    #[test]
    fn variation_grid_matches_exact() {
        for spec in [
            MapSpec::FractionalLinear { c: 2.0, which: 1 },
            MapSpec::SmoothBreak { c: 3.0, offset: 0.0 },
        ] {
            let m = BreakMap::from_spec(spec).unwrap();
            assert!((m.branch_variation(1e-8) - m.branch_variation_exact()).abs() < 1e-7);
        }
        assert_eq!(BreakMap::rotation(0.3).denjoy_v(), 0.0);
    }

    #[test]
    fn inverse_lift_roundtrip() {
        for spec in [
            MapSpec::FractionalLinear { c: 2.0, which: 1 },
            MapSpec::FractionalLinear { c: 0.5, which: 2 },
            MapSpec::SmoothBreak { c: 0.4, offset: 0.3 },
            MapSpec::PiecewiseLinear { c: 2.0, p: 0.6, offset: 0.9 },
        ] {
            let m = BreakMap::from_spec(spec).unwrap();
            for i in 0..200 {
                let x = (i as f64 + 0.5) / 200.0;
                let y: f64 = m.lift(x);
                assert!((m.inverse_lift(y) - x).abs() < 1e-12, "{spec:?} x={x}");
                assert!((m.inverse_lift(y + 3.0) - x - 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn increment_and_remainder_across_breaks() {
        let m = g1(2.0);
        let xb = m.break_point();
        for &(x, e) in &[(xb - 1e-3, 2e-3), (xb + 1e-3, -2e-3), (0.999, 0.002), (0.001, -0.002), (0.3, 1e-4)] {
            let xt = DD::from(x);
            let et = DD::from(e);
            let direct = m.lift(xt + et) - m.lift(xt);
            let inc = m.increment(xt, et);
            assert!((direct - inc).hi().abs() < 1e-28, "x={x} e={e}");
            let rem = m.remainder(xt, et);
            let direct_rem = direct - DD::from(m.deriv(x, Side::Right)) * et;
            assert!((direct_rem - rem).hi().abs() < 1e-17, "x={x} e={e}");
        }
    }

    #[test]
    fn remainder_across_smooth_join_is_second_order() {
        let m = BreakMap::from_spec(MapSpec::SmoothBreak { c: 2.0, offset: 0.0 }).unwrap();
        let x = 1.0 - 1e-31;
        let e = 3e-31;
        let rem = m.remainder(x, e);
        let expected = 0.5 * m.second_deriv(0.0, Side::Right) * e * e;
        assert!((rem - expected).abs() < 1e-3 * expected.abs(), "{rem:e} vs {expected:e}");
    }

    #[test]
    fn document_roundtrip_is_bit_exact() {
        let docs = [
            MapDocument { spec: MapSpec::SmoothBreak { c: 2.0, offset: 0.1 + 0.2 }, precision: Precision::Double },
            MapDocument { spec: MapSpec::FractionalLinear { c: 4.0, which: 2 }, precision: Precision::Extended },
            MapDocument { spec: MapSpec::Rotation { rho: (5f64.sqrt() - 1.0) / 2.0 }, precision: Precision::Double },
        ];
        for d in docs {
            let s = d.to_json();
            let back = MapDocument::from_json(&s).unwrap();
            assert_eq!(back, d);
            assert_eq!(back.to_json(), s);
        }
    }

    proptest! {
        #[test]
        fn monotone_and_positive_derivative(x in 0.0f64..1.0, h in 1e-9f64..1e-3, c in 0.3f64..5.0) {
            prop_assume!((c - 1.0).abs() > 1e-3);
            for spec in [
                MapSpec::FractionalLinear { c, which: 1 },
                MapSpec::FractionalLinear { c, which: 2 },
                MapSpec::SmoothBreak { c, offset: 0.2 },
                MapSpec::PiecewiseLinear { c, p: 0.4, offset: 0.7 },
            ] {
                let m = BreakMap::from_spec(spec).unwrap();
                let a: f64 = m.lift(x);
                let b: f64 = m.lift(x + h);
                prop_assert!(b > a);
                prop_assert!(m.deriv(x, Side::Left) > 0.0);
                prop_assert!(m.deriv(x, Side::Right) > 0.0);
                prop_assert!((m.lift(x + 1.0) - a - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn finite_difference_on_break_free_arcs(x in 0.02f64..0.98, c in 0.3f64..5.0) {
            prop_assume!((c - 1.0).abs() > 1e-3);
            let m = BreakMap::from_spec(MapSpec::FractionalLinear { c, which: 1 }).unwrap();
            let h = 1e-5;
            prop_assume!((x - m.break_point()).abs() > 2.0 * h);
            let fd = (m.lift(x + h) - m.lift(x - h)) / (2.0 * h);
            prop_assert!((fd - m.deriv(x, Side::Right)).abs() < 1e-7 * m.deriv(x, Side::Right).max(1.0));
        }
    }
}
