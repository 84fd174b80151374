//! Neighbourhoods A_k^{(n)} of the deterministic orbit built from the
//! two-sided partitions P̃_n(x_b).

use serde::{Deserialize, Serialize};

use crate::circle::{ccw_distance, wrap};
use crate::dd::DD;
use crate::error::{Error, Result};
use crate::map::{orbit_dd, BreakMap, CircleMap};
use crate::partition::OrbitData;
use crate::real::{Precision, Real};

/// P̃_n(x_b): the circle cut at x_i for −q_{n+1} ≤ i ≤ q_n + q_{n+1} − 1.
#[derive(Debug, Clone)]
pub struct ExtendedPartition {
    pub level: usize,
    /// (position, orbit index), sorted by position.
    points: Vec<(DD, i64)>,
    floor: f64,
}

impl ExtendedPartition {
    /// `forward[i]` = x_i and `backward[j]` = x_{−j}.
    pub fn build(forward: &[DD], backward: &[DD], q: &[u64], n: usize, precision: Precision) -> Result<ExtendedPartition> {
        let fwd = (q[n] + q[n + 1]) as usize;
        let bwd = q[n + 1] as usize;
        if forward.len() < fwd || backward.len() <= bwd {
            return Err(Error::InvalidParameter(format!("orbit too short for P̃_{n}")));
        }
        let mut points: Vec<(DD, i64)> = forward[..fwd].iter().enumerate().map(|(i, &x)| (x, i as i64)).collect();
        points.extend((1..=bwd).map(|j| (backward[j], -(j as i64))));
        points.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
        let floor = precision.floor();
        for w in points.windows(2) {
            if (w[1].0 - w[0].0).to_f64() < floor {
                return Err(Error::PrecisionExhausted {
                    level: n,
                    detail: format!("x_{} and x_{} are not separated", w[0].1, w[1].1),
                });
            }
        }
        Ok(ExtendedPartition { level: n, points, floor })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[(DD, i64)] {
        &self.points
    }

    /// Largest cut point strictly left of `y` (cyclically).
    fn before(&self, y: DD) -> DD {
        let lim = y - DD::from(self.floor);
        let i = self.points.partition_point(|p| p.0 < lim);
        self.points[if i == 0 { self.points.len() - 1 } else { i - 1 }].0
    }

    /// Smallest cut point strictly right of `y` (cyclically).
    fn after(&self, y: DD) -> DD {
        let lim = y + DD::from(self.floor);
        let i = self.points.partition_point(|p| p.0 <= lim);
        self.points[if i == self.points.len() { 0 } else { i }].0
    }

    /// [left, right) of the element containing `x`.
    pub fn element_containing(&self, x: DD) -> (DD, DD) {
        let i = self.points.partition_point(|p| p.0 <= x);
        let left = self.points[if i == 0 { self.points.len() - 1 } else { i - 1 }].0;
        let right = self.points[if i == self.points.len() { 0 } else { i }].0;
        (left, right)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tube {
    pub k: usize,
    /// A_k = [z_k − below, z_k + above].
    pub below: f64,
    pub above: f64,
    /// min(|A⁻_k|, |A⁺_k|); for k = 0 the distances from z_0 to the ends.
    pub margin: f64,
    /// |Δ^{(n)}(z_k)|
    pub coarse_length: f64,
}

impl Tube {
    pub fn contains_offset(&self, e: f64) -> bool {
        -self.below <= e && e <= self.above
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeSet {
    pub level: usize,
    pub l: usize,
    pub fine_level: usize,
    /// q_{n+1}: tubes exist for 0 ≤ k < q_{n+1}.
    pub horizon: u64,
    pub tubes: Vec<Tube>,
    /// (k, j) such that x_{−j} lies strictly inside A_k.
    pub break_points_inside: Vec<(usize, usize)>,
}

impl TubeSet {
    pub fn min_margin(&self) -> f64 {
        self.tubes.iter().skip(1).map(|t| t.margin).fold(f64::INFINITY, f64::min)
    }
}

fn dd_min(a: DD, b: DD) -> DD {
    if a < b {
        a
    } else {
        b
    }
}

/// A_0 = Δ^{(2n+l+1)}(z_0), A_k = A⁻_k ∪ T(A_{k−1}) ∪ A⁺_k in P̃_{2n+l+1}(x_b),
/// each checked to lie inside Δ^{(n)}(z_k) ∈ P̃_n(x_b).
pub fn build_tubes(map: &BreakMap, z0: DD, n: usize, l: usize, precision: Precision) -> Result<TubeSet> {
    if l < 4 {
        return Err(Error::InvalidParameter(format!("l = {l} must be at least 4")));
    }
    if map.breaks().is_empty() {
        return Err(Error::InvalidParameter("tubes are built from the break orbit".into()));
    }
    let fine = 2 * n + l + 1;
    let xb = map.break_point_tf();
    let orbit = OrbitData::compute(map, xb, fine, precision)?;
    let q = &orbit.q;
    let mut backward = Vec::with_capacity(q[fine + 1] as usize + 1);
    let mut x = xb;
    backward.push(x);
    for _ in 0..q[fine + 1] {
        x = match precision {
            Precision::Double => DD::from(map.inverse_eval(x.hi())),
            Precision::Extended => map.inverse_eval(x),
        };
        backward.push(x);
    }
    let coarse = ExtendedPartition::build(&orbit.points, &backward, q, n, precision)?;
    let fine_p = ExtendedPartition::build(&orbit.points, &backward, q, fine, precision)?;
    let horizon = q[n + 1];
    let z = orbit_dd(map, z0, horizon as usize, precision);
    let floor = DD::from(precision.floor());

    let mut tubes = Vec::with_capacity(horizon as usize);
    let mut failures = Vec::new();
    let mut inside = Vec::new();
    let (mut left, mut right) = fine_p.element_containing(wrap(z0));
    for k in 0..horizon as usize {
        let margin = if k == 0 {
            dd_min(ccw_distance(left, z[0]), ccw_distance(z[0], right))
        } else {
            let (yl, yr) = (map.eval(left), map.eval(right));
            let (nl, nr) = (fine_p.before(yl), fine_p.after(yr));
            let m = dd_min(ccw_distance(nl, yl), ccw_distance(yr, nr));
            left = nl;
            right = nr;
            m
        };
        let (cl, cr) = coarse.element_containing(z[k]);
        let span = ccw_distance(left, right);
        let offset = ccw_distance(cl, left);
        let coarse_len = ccw_distance(cl, cr);
        if offset + span > coarse_len + floor {
            failures.push(k);
        }
        for j in 0..horizon as usize {
            let d = ccw_distance(left, backward[j]);
            if d > floor && d < span - floor {
                inside.push((k, j));
            }
        }
        tubes.push(Tube {
            k,
            below: ccw_distance(left, z[k]).to_f64(),
            above: ccw_distance(z[k], right).to_f64(),
            margin: margin.to_f64(),
            coarse_length: coarse_len.to_f64(),
        });
    }
    if !failures.is_empty() {
        return Err(Error::ConstructionFailure(format!(
            "A_k ⊄ Δ^({n})(z_k) for k in {:?} (of {horizon})",
            &failures[..failures.len().min(10)]
        )));
    }
    Ok(TubeSet {
        level: n,
        l,
        fine_level: fine,
        horizon,
        tubes,
        break_points_inside: inside,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::MapSpec;

    fn g1() -> BreakMap {
        BreakMap::from_spec(MapSpec::FractionalLinear { c: 2.0, which: 1 }).unwrap()
    }

    #[test]
    fn extended_partition_counts() {
        let m = g1();
        let xb = m.break_point_tf();
        let o = OrbitData::compute(&m, xb, 8, Precision::Extended).unwrap();
        let mut back = vec![xb];
        for _ in 0..60 {
            let prev = *back.last().unwrap();
            back.push(m.inverse_eval(prev));
        }
        for n in 2..=6 {
            let p = ExtendedPartition::build(&o.points, &back, &o.q, n, Precision::Extended).unwrap();
            assert_eq!(p.len() as u64, o.q[n] + 2 * o.q[n + 1]);
        }
    }

    #[test]
    fn tubes_are_contained_and_avoid_break_preimages() {
        let m = g1();
        for n in 2..=7 {
            let t = build_tubes(&m, DD::from(0.1), n, 4, Precision::Extended).unwrap();
            assert_eq!(t.tubes.len() as u64, t.horizon);
            assert!(t.tubes.iter().all(|a| a.below > 0.0 && a.above > 0.0 && a.margin > 0.0));
            assert!(t.break_points_inside.is_empty(), "n={n}: {:?}", t.break_points_inside);
        }
    }

    #[test]
    fn containment_needs_a_good_level() {
        // z_0 = 0.3 sits too close to a boundary of P̃_4 along its orbit.
        let m = g1();
        let err = build_tubes(&m, DD::from(0.3), 4, 4, Precision::Extended).unwrap_err();
        assert!(matches!(err, Error::ConstructionFailure(_)), "{err}");
        assert!(build_tubes(&m, DD::from(0.3), 8, 4, Precision::Extended).is_ok());
    }

    #[test]
    fn small_l_is_rejected() {
        assert!(build_tubes(&g1(), DD::from(0.3), 3, 3, Precision::Extended).is_err());
    }
}
