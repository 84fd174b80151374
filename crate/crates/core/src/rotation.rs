//! Continued fractions, rotation numbers and first-return times.

use serde::{Deserialize, Serialize};

use crate::circle::{ccw_distance, wrap};
use crate::error::{Error, Result};
use crate::map::{BreakMap, CircleMap, MapSpec, Sense};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContinuedFraction {
    /// k₁, k₂, …
    pub partial_quotients: Vec<u64>,
    /// p₀, p₁, … with p₀ = 0.
    pub p: Vec<u64>,
    /// q₀, q₁, … with q₀ = 1.
    pub q: Vec<u64>,
}

impl ContinuedFraction {
    pub fn from_partial_quotients(k: &[u64]) -> ContinuedFraction {
        let (mut p, mut q) = (vec![0u64], vec![1u64]);
        let (mut p_prev, mut q_prev) = (1u64, 0u64);
        for &kn in k {
            let pn = kn * p[p.len() - 1] + p_prev;
            let qn = kn * q[q.len() - 1] + q_prev;
            p_prev = p[p.len() - 1];
            q_prev = q[q.len() - 1];
            p.push(pn);
            q.push(qn);
        }
        ContinuedFraction {
            partial_quotients: k.to_vec(),
            p,
            q,
        }
    }

    pub fn depth(&self) -> usize {
        self.partial_quotients.len()
    }

    pub fn convergent(&self, n: usize) -> f64 {
        self.p[n] as f64 / self.q[n] as f64
    }
}

/// Gauss-map expansion of ρ ∈ (0,1) to the requested depth.
pub fn continued_fraction<R: Real>(rho: R, depth: usize) -> Result<ContinuedFraction> {
    if depth == 0 {
        return Err(Error::InvalidParameter("depth must be at least 1".into()));
    }
    let r = rho.to_f64();
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::InvalidParameter(format!("rotation number must lie in (0,1), got {r}")));
    }
    let mut x = rho;
    let mut k = Vec::with_capacity(depth);
    let mut q_cur = 1u64;
    let mut q_prev = 0u64;
    while k.len() < depth {
        // The remainder carries an error of order ε q², so ⌊1/x⌋ is trusted
        // only while x stays well above √ε q.
        if x.to_f64() < (1e3 * R::EPSILON).sqrt() * q_cur as f64 {
            return Err(Error::DepthUnreliable {
                reached: k.len(),
                partial_quotients: k,
            });
        }
        let inv = R::one() / x;
        let kn = inv.floor();
        let kn_u = kn.to_f64() as u64;
        k.push(kn_u);
        let q_next = kn_u.saturating_mul(q_cur).saturating_add(q_prev);
        q_prev = q_cur;
        q_cur = q_next;
        x = inv - kn;
    }
    Ok(ContinuedFraction::from_partial_quotients(&k))
}

pub fn first_return_times(cf: &ContinuedFraction) -> Vec<u64> {
    cf.q.clone()
}

/// k_n recovered from consecutive return times, k_n = (q_n − q_{n−2})/q_{n−1}.
pub fn partial_quotients_from_returns(q: &[u64]) -> Vec<u64> {
    let mut k = Vec::new();
    if let Some(&q1) = q.get(1) {
        k.push(q1);
    }
    for n in 2..q.len() {
        k.push((q[n] - q[n - 2]) / q[n - 1]);
    }
    k
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationEstimate {
    pub rho: f64,
    pub error: f64,
}

/// Counter-clockwise lift rotation number from displacement averages at the
/// closest-return times of the orbit of 0.
pub fn rotation_number<M: CircleMap>(map: &M, n_iter: usize, tol: f64) -> Result<RotationEstimate> {
    if n_iter == 0 {
        return Err(Error::InvalidParameter("n_iter must be positive".into()));
    }
    let x0 = 0.0_f64;
    let mut y = x0;
    let mut winding = 0i64;
    let mut best = f64::INFINITY;
    let mut estimates: Vec<f64> = Vec::new();
    for j in 1..=n_iter {
        let v = map.lift(y);
        let k = v.floor();
        winding += k as i64;
        y = v - k;
        if y >= 1.0 {
            y -= 1.0;
            winding += 1;
        }
        let d = ccw_distance(x0, y);
        let dist = d.min(1.0 - d);
        if dist == 0.0 {
            let rho = (winding as f64 + y - x0) / j as f64;
            return Ok(RotationEstimate { rho, error: 0.0 });
        }
        if dist < best {
            best = dist;
            estimates.push((winding as f64 + y - x0) / j as f64);
        }
    }
    let n = estimates.len();
    let rho = estimates[n - 1];
    let error = if n >= 2 {
        (estimates[n - 1] - estimates[n - 2]).abs()
    } else {
        1.0
    };
    if error > tol {
        return Err(Error::ToleranceNotReached {
            estimate: rho,
            error,
            tol,
        });
    }
    Ok(RotationEstimate { rho, error })
}

/// Rotation number measured in the family's own orientation.
pub fn reference_rotation_number<M: CircleMap>(map: &M, n_iter: usize, tol: f64) -> Result<RotationEstimate> {
    let est = rotation_number(map, n_iter, tol)?;
    let frac = est.rho - est.rho.floor();
    Ok(match map.sense() {
        Sense::Counterclockwise => RotationEstimate { rho: frac, error: est.error },
        Sense::Clockwise => RotationEstimate {
            rho: if frac == 0.0 { 0.0 } else { 1.0 - frac },
            error: est.error,
        },
    })
}

/// Closest-return times q₀, q₁, … of the orbit of `z0`, read off from the
/// ordering of orbit points in the map's orientation. Returns `count` values.
pub fn closest_returns<R: Real, M: CircleMap>(
    map: &M,
    z0: R,
    count: usize,
    max_iter: usize,
) -> Result<Vec<u64>> {
    let flip = map.sense() == Sense::Clockwise;
    let z0 = wrap(z0);
    let dist_fwd = |z: R| -> R {
        if flip {
            ccw_distance(z, z0)
        } else {
            ccw_distance(z0, z)
        }
    };
    let mut best_fwd = R::one();
    let mut best_bwd = R::one();
    let mut run_side: Option<bool> = None;
    let mut run_end = 0u64;
    let mut q: Vec<u64> = Vec::new();
    let mut z = z0;
    for j in 1..=max_iter as u64 {
        z = map.eval(z);
        let f = dist_fwd(z);
        if f.to_f64() == 0.0 {
            return Err(Error::DepthUnreliable {
                reached: q.len(),
                partial_quotients: partial_quotients_from_returns(&q),
            });
        }
        let b = R::one() - f;
        if j == 1 {
            best_fwd = f;
            best_bwd = b;
            run_end = 1;
            continue;
        }
        if j == 2 {
            // z₁ is a record on both sides; it belongs to the run opposite to
            // the first genuine record, whatever the size of the first step.
            let forward_first = if f < best_fwd {
                false
            } else if b < best_bwd {
                true
            } else {
                best_fwd < best_bwd
            };
            if !forward_first {
                q.push(1);
            }
            run_side = Some(forward_first);
        }
        let side = if f < best_fwd {
            best_fwd = f;
            Some(true)
        } else if b < best_bwd {
            best_bwd = b;
            Some(false)
        } else {
            None
        };
        if let Some(s) = side {
            match run_side {
                Some(rs) if rs != s => {
                    q.push(run_end);
                    if q.len() >= count {
                        q.truncate(count);
                        return Ok(q);
                    }
                }
                _ => {}
            }
            run_side = Some(s);
            run_end = j;
        }
    }
    Err(Error::DepthUnreliable {
        reached: q.len(),
        partial_quotients: partial_quotients_from_returns(&q),
    })
}

/// Sign of ρ(map) − target certified from the lift: |Fⁿ(x) − x − nρ| < 1.
fn compare_with_target(map: &BreakMap, target: f64, n_iter: usize) -> Option<std::cmp::Ordering> {
    let mut y = 0.0_f64;
    let mut winding = 0i64;
    for j in 1..=n_iter {
        let v = map.lift(y);
        let k = v.floor();
        winding += k as i64;
        y = v - k;
        let d = winding as f64 + y - j as f64 * target;
        if d > 1.0 {
            return Some(std::cmp::Ordering::Greater);
        }
        if d < -1.0 {
            return Some(std::cmp::Ordering::Less);
        }
    }
    None
}

/// Find the lift offset giving rotation number `target`.
pub fn tune_offset(map: &BreakMap, target: f64, tol: f64, n_iter: usize) -> Result<f64> {
    if let MapSpec::Rotation { .. } = map.spec {
        return Ok(target);
    }
    if map.spec.offset().is_none() {
        return Err(Error::InvalidParameter("map family has no free offset".into()));
    }
    if let Err(Error::DepthUnreliable { .. }) = continued_fraction(target, 20) {
        return Err(Error::RationalTarget { target });
    }
    let base = map.with_offset(0.0)?;
    let (mut dmin, mut dmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..=1024 {
        let x = i as f64 / 1024.0;
        let d = base.lift(x) - x;
        dmin = dmin.min(d);
        dmax = dmax.max(d);
    }
    let mut lo = target - dmax - 1e-3;
    let mut hi = target - dmin + 1e-3;
    let at = |t: f64| map.with_offset(t);
    if compare_with_target(&at(lo)?, target, n_iter) != Some(std::cmp::Ordering::Less)
        || compare_with_target(&at(hi)?, target, n_iter) != Some(std::cmp::Ordering::Greater)
    {
        return Err(Error::BracketFailure { target });
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let m = at(mid)?;
        match compare_with_target(&m, target, n_iter) {
            Some(std::cmp::Ordering::Greater) => hi = mid,
            Some(_) => lo = mid,
            None => {
                let est = match rotation_number(&m, n_iter, f64::INFINITY) {
                    Ok(e) => e,
                    Err(_) => break,
                };
                if (est.rho - target).abs() + est.error <= tol {
                    return Ok(mid);
                }
                if est.rho > target {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
        }
    }
    let est = rotation_number(&at(mid)?, n_iter, f64::INFINITY)?;
    if (est.rho - target).abs() > tol {
        return Err(Error::ToleranceNotReached {
            estimate: est.rho,
            error: (est.rho - target).abs(),
            tol,
        });
    }
    Ok(mid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dd::DD;
    use proptest::prelude::*;

    fn golden() -> f64 {
        (5f64.sqrt() - 1.0) / 2.0
    }

    fn fibonacci(n: usize) -> Vec<u64> {
        let mut f = vec![1u64, 1];
        while f.len() < n {
            let l = f.len();
            f.push(f[l - 1] + f[l - 2]);
        }
        f.truncate(n);
        f
    }

    #[test]
    fn golden_mean_expansion() {
        let cf = continued_fraction(golden(), 6).unwrap();
        assert_eq!(cf.partial_quotients, vec![1; 6]);
        assert_eq!(cf.q, vec![1, 1, 2, 3, 5, 8, 13]);
        assert_eq!(first_return_times(&cf), fibonacci(7));
    }

    #[test]
    fn silver_complement_expansion() {
        let rho = (3.0 - 5f64.sqrt()) / 2.0;
        let cf = continued_fraction(rho, 5).unwrap();
        assert_eq!(cf.partial_quotients, vec![2, 1, 1, 1, 1]);
        assert_eq!(&cf.q[..4], &[1, 2, 3, 5]);
        // direct Gauss-map steps as an oracle
        let x1 = 1.0 / rho - (1.0 / rho).floor();
        assert_eq!((1.0 / rho).floor(), 2.0);
        assert_eq!((1.0 / x1).floor(), 1.0);
        assert_eq!(first_return_times(&cf), vec![1, 2, 3, 5, 8, 13]);
    }

    #[test]
    fn rational_is_unreliable() {
        match continued_fraction(1.0 / 3.0, 3) {
            Err(Error::DepthUnreliable { reached, partial_quotients }) => {
                assert_eq!(reached, 1);
                assert_eq!(partial_quotients, vec![3]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn extended_precision_expansion_is_deeper() {
        let g = (DD::from(5.0).sqrt() - 1.0) / 2.0;
        let cf = continued_fraction(g, 60).unwrap();
        assert!(cf.partial_quotients.iter().all(|&k| k == 1));
        assert_eq!(cf.q[60], fibonacci(61)[60]);
    }

    #[test]
    fn rotation_number_of_rotation() {
        let r = BreakMap::rotation(0.25);
        let est = rotation_number(&r, 1000, 1e-12).unwrap();
        assert!((est.rho - 0.25).abs() < 1e-12);
        let g = BreakMap::rotation(golden());
        let est = rotation_number(&g, 100_000, 1e-9).unwrap();
        assert!((est.rho - golden()).abs() < 1e-9);
    }

    #[test]
    fn fractional_linear_map_has_golden_rotation() {
        let m = BreakMap::from_spec(MapSpec::FractionalLinear { c: 2.0, which: 1 }).unwrap();
        // long-orbit Birkhoff average as an independent oracle
        let n = 1_000_000;
        let mut y = 0.0_f64;
        let mut total = 0.0;
        for _ in 0..n {
            let v = m.lift(y);
            total += v - y;
            y = wrap(v);
        }
        let birkhoff = total / n as f64;
        let est = rotation_number(&m, 1_000_000, 1e-9).unwrap();
        assert!((est.rho - birkhoff).abs() < 1e-5);
        let r = reference_rotation_number(&m, 1_000_000, 1e-9).unwrap();
        assert!((r.rho - golden()).abs() < 1e-6);
    }

    #[test]
    fn closest_returns_follow_continued_fraction() {
        let g = BreakMap::rotation(golden());
        assert_eq!(closest_returns(&g, 0.1_f64, 21, 1_000_000).unwrap(), fibonacci(21));
        let s = BreakMap::rotation(0.21);
        assert_eq!(closest_returns(&s, 0.0_f64, 3, 1000).unwrap(), vec![1, 4, 5]);
        let m = BreakMap::from_spec(MapSpec::FractionalLinear { c: 2.0, which: 1 }).unwrap();
        assert_eq!(closest_returns(&m, 0.3_f64, 21, 1_000_000).unwrap(), fibonacci(21));
    }

    #[test]
    fn tune_rotation_closed_form() {
        assert_eq!(tune_offset(&BreakMap::rotation(0.0), 0.3, 1e-12, 1000).unwrap(), 0.3);
    }

    #[test]
    fn tune_piecewise_linear_to_golden() {
        let m = BreakMap::from_spec(MapSpec::PiecewiseLinear { c: 2.0, p: 0.4, offset: 0.0 }).unwrap();
        let t = tune_offset(&m, golden(), 1e-8, 200_000).unwrap();
        let tuned = m.with_offset(t).unwrap();
        let est = rotation_number(&tuned, 400_000, 1e-8).unwrap();
        assert!((est.rho - golden()).abs() < 1e-8);
    }

    #[test]
    fn tune_rejects_rational_target() {
        let m = BreakMap::from_spec(MapSpec::SmoothBreak { c: 2.0, offset: 0.0 }).unwrap();
        assert!(matches!(tune_offset(&m, 0.25, 1e-8, 1000), Err(Error::RationalTarget { .. })));
    }

    proptest! {
        #[test]
        fn convergents_alternate_and_approximate(rho in 0.01f64..0.99) {
            let cf = match continued_fraction(rho, 8) {
                Ok(cf) => cf,
                Err(_) => return Ok(()),
            };
            for n in 0..cf.depth() {
                let c = cf.convergent(n);
                if n % 2 == 0 {
                    prop_assert!(c <= rho);
                } else {
                    prop_assert!(c >= rho);
                }
                let bound = 1.0 / (cf.q[n] as f64 * cf.q[n + 1] as f64);
                prop_assert!((rho - c).abs() <= bound * (1.0 + 1e-9));
                if n >= 1 {
                    prop_assert_eq!(cf.q[n + 1], cf.partial_quotients[n] * cf.q[n] + cf.q[n - 1]);
                }
            }
        }

        #[test]
        fn returns_recover_quotients(rho in 0.05f64..0.95) {
            let cf = match continued_fraction(rho, 6) {
                Ok(cf) if cf.q[6] < 50_000 => cf,
                _ => return Ok(()),
            };
            let r = BreakMap::rotation(rho);
            let q = closest_returns(&r, 0.0_f64, 5, 100_000).unwrap();
            prop_assert_eq!(&q[..], &cf.q[..5]);
        }
    }
}
