//! Denjoy and Finzi distortion checks and the comparability census.

use serde::{Deserialize, Serialize};

use super::DynamicalPartition;
use crate::circle::{ccw_distance, signed_offset, wrap};
use crate::error::{Error, Result};
use crate::map::{CircleMap, Side};
use crate::real::KahanSum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenjoyReport {
    pub product: f64,
    pub v: f64,
    pub pass: bool,
}

/// ∏_{s<len} T′(y_s), refusing orbits that land exactly on a break.
pub fn denjoy_product<M: CircleMap>(map: &M, y0: f64, len: u64, breaks: &[f64]) -> Result<f64> {
    let mut y = wrap(y0);
    let mut log = KahanSum::new();
    for s in 0..len {
        if breaks.contains(&y) {
            return Err(Error::OrbitHitsBreak { step: s as usize });
        }
        log.add(map.deriv(y, Side::Right).ln());
        y = map.eval(y);
    }
    Ok(log.value().exp())
}

pub fn check_denjoy<M: CircleMap>(map: &M, y0: f64, qn: u64, v: f64, breaks: &[f64]) -> Result<DenjoyReport> {
    let product = denjoy_product(map, y0, qn, breaks)?;
    let pass = (-v).exp() <= product && product <= v.exp();
    Ok(DenjoyReport { product, v, pass })
}

/// q_n-smallness of the counter-clockwise arc [τ, t], from the position of
/// T^{q_{n−1}} relative to the endpoints.
pub fn is_qn_small<M: CircleMap>(map: &M, tau: f64, t: f64, q_prev: u64) -> bool {
    let len = ccw_distance(tau, t);
    if len <= 0.0 {
        return false;
    }
    let mut ft = tau;
    for _ in 0..q_prev {
        ft = map.eval(ft);
    }
    let d = signed_offset(tau, ft);
    if d > 0.0 {
        return len <= d;
    }
    let mut gt = t;
    for _ in 0..q_prev {
        gt = map.eval(gt);
    }
    let e = signed_offset(gt, t);
    e > 0.0 && len <= e
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinziReport {
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub v: f64,
    pub pass: bool,
}

/// DT^k(τ)/DT^k(t) for 0 ≤ k < q_n on a q_n-small arc [τ, t].
pub fn finzi_ratios<M: CircleMap>(map: &M, tau: f64, t: f64, qn: u64, q_prev: u64, v: f64) -> Result<FinziReport> {
    if !is_qn_small(map, tau, t, q_prev) {
        return Err(Error::NotQnSmall { n: qn as usize });
    }
    let (mut x, mut y) = (wrap(tau), wrap(t));
    let mut log_ratio = 0.0;
    let (mut lo, mut hi) = (1.0_f64, 1.0_f64);
    for _ in 1..qn {
        log_ratio += map.deriv(x, Side::Right).ln() - map.deriv(y, Side::Left).ln();
        x = map.eval(x);
        y = map.eval(y);
        let r = log_ratio.exp();
        lo = lo.min(r);
        hi = hi.max(r);
    }
    let pass = (-v).exp() <= lo && hi <= v.exp();
    Ok(FinziReport {
        min_ratio: lo,
        max_ratio: hi,
        v,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Census {
    /// Number of e^v-comparable partners of each element, in partition order.
    pub counts: Vec<usize>,
    pub min_count: usize,
}

pub fn comparability_census(p: &DynamicalPartition, v: f64) -> Census {
    let mut sorted: Vec<f64> = p.intervals().iter().map(|i| i.length).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("lengths are finite"));
    let k = v.exp();
    let counts: Vec<usize> = p
        .intervals()
        .iter()
        .map(|iv| {
            let lo = sorted.partition_point(|&l| l < iv.length / k);
            let hi = sorted.partition_point(|&l| l <= iv.length * k);
            hi - lo - 1
        })
        .collect();
    let min_count = counts.iter().copied().min().unwrap_or(0);
    Census { counts, min_count }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{BreakMap, MapSpec};
    use crate::real::Precision;
    use crate::rotation::closest_returns;

    fn golden() -> f64 {
        (5f64.sqrt() - 1.0) / 2.0
    }

    fn g1() -> BreakMap {
        BreakMap::from_spec(MapSpec::FractionalLinear { c: 2.0, which: 1 }).unwrap()
    }

    /// Map with every derivative scaled, so derivative products drift.
    struct Corrupted(BreakMap);

    impl CircleMap for Corrupted {
        fn lift<R: crate::real::Real>(&self, x: R) -> R {
            self.0.lift(x)
        }
        fn deriv(&self, x: f64, side: Side) -> f64 {
            1.5 * self.0.deriv(x, side)
        }
    }

    #[test]
    fn rotation_product_is_one() {
        let r = BreakMap::rotation(golden());
        let rep = check_denjoy(&r, 0.2, 89, 0.0, &[]).unwrap();
        assert_eq!(rep.product, 1.0);
        assert!(rep.pass);
    }

    #[test]
    fn g1_denjoy_holds() {
        let m = g1();
        let v = m.denjoy_v();
        let breaks: Vec<f64> = m.breaks().iter().map(|b| b.position).collect();
        let q = closest_returns(&m, 0.1_f64, 13, 1_000_000).unwrap();
        for i in 0..50 {
            let y0 = (i as f64 + 0.37) / 50.0;
            for &qn in &q[1..] {
                assert!(check_denjoy(&m, y0, qn, v, &breaks).unwrap().pass);
            }
        }
    }

    #[test]
    fn corrupted_derivative_fails() {
        let m = Corrupted(g1());
        let v = g1().denjoy_v();
        let rep = check_denjoy(&m, 0.1, 89, v, &[]).unwrap();
        assert!(!rep.pass);
    }

    #[test]
    fn orbit_through_break_is_refused() {
        let m = g1();
        let breaks: Vec<f64> = m.breaks().iter().map(|b| b.position).collect();
        assert!(matches!(
            check_denjoy(&m, m.break_point(), 5, 1.0, &breaks),
            Err(Error::OrbitHitsBreak { step: 0 })
        ));
    }

    /// Direct check that T^i(I), i < q_n, have disjoint interiors.
    fn images_disjoint<M: CircleMap>(map: &M, tau: f64, t: f64, qn: u64) -> bool {
        let mut arcs = Vec::new();
        let (mut a, mut b) = (tau, t);
        for _ in 0..qn {
            arcs.push((a, ccw_distance(a, b)));
            a = map.eval(a);
            b = map.eval(b);
        }
        for i in 0..arcs.len() {
            for j in 0..arcs.len() {
                if i != j {
                    let d = ccw_distance(arcs[i].0, arcs[j].0);
                    if d > 1e-14 && d < arcs[i].1 - 1e-14 {
                        return false;
                    }
                }
            }
        }
        true
    }

    #[test]
    fn qn_small_criterion_matches_disjointness() {
        let m = g1();
        let q = closest_returns(&m, 0.1_f64, 9, 1_000_000).unwrap();
        // From n = 3 on the q_{n-1} returns are short enough for the order
        // relation to be unambiguous.
        for n in 3..8 {
            for i in 0..40 {
                let tau = (i as f64 + 0.5) / 40.0;
                for &len in &[1e-3, 5e-3, 2e-2, 6e-2, 0.15] {
                    let t = wrap(tau + len);
                    assert_eq!(
                        is_qn_small(&m, tau, t, q[n - 1]),
                        images_disjoint(&m, tau, t, q[n]),
                        "n={n} tau={tau} len={len}"
                    );
                }
            }
        }
    }

    #[test]
    fn finzi_on_generator_and_rejection() {
        let m = g1();
        let v = m.denjoy_v();
        let p = DynamicalPartition::build(&m, 0.3, 8, Precision::Double).unwrap();
        let iv = p.get(super::super::Tag { generation: 8, index: 0 }).unwrap();
        let (tau, t) = (p.point(iv.left).hi(), p.point(iv.right).hi());
        let rep = finzi_ratios(&m, tau, t, p.q(8), p.q(7), v).unwrap();
        assert!(rep.pass);
        let r = BreakMap::rotation(golden());
        let rr = finzi_ratios(&r, 0.1, 0.1 + 1e-3, 8, 5, 0.0).unwrap();
        assert_eq!((rr.min_ratio, rr.max_ratio), (1.0, 1.0));
        assert!(matches!(finzi_ratios(&m, 0.1, 0.6, p.q(8), p.q(7), v), Err(Error::NotQnSmall { .. })));
    }

    #[test]
    fn census_lower_bound() {
        let m = g1();
        let v = m.denjoy_v();
        let p = DynamicalPartition::build(&m, m.break_point(), 10, Precision::Double).unwrap();
        assert!(comparability_census(&p, v).min_count >= 9);
        let r = BreakMap::rotation(golden());
        let pr = DynamicalPartition::build(&r, 0.0, 8, Precision::Double).unwrap();
        let c = comparability_census(&pr, golden().recip().ln() + 1e-9);
        assert_eq!(c.min_count, pr.cardinality() - 1);
    }
}
