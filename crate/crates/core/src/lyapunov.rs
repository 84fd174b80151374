//! Lyapunov functions Λ_s, Λ̂ and the partition sums S_{n,β}.

use serde::{Deserialize, Serialize};

use crate::circle::signed_offset;
use crate::dd::DD;
use crate::error::{Error, Result};
use crate::map::{CircleMap, Side};
use crate::partition::{DynamicalPartition, PartitionHierarchy, Tag};
use crate::real::{log_sum_exp, Real};

/// ln|T′(z_j)| for j = 0..n, refusing orbits that land on a break.
pub fn log_derivatives<M: CircleMap>(map: &M, z0: DD, n: usize, breaks: &[f64]) -> Result<Vec<f64>> {
    let mut z = crate::circle::wrap(z0);
    let mut out = Vec::with_capacity(n);
    for step in 0..n {
        let zf = z.to_f64();
        if breaks.iter().any(|&b| signed_offset(zf, b) == 0.0) {
            return Err(Error::OrbitHitsBreak { step });
        }
        out.push(map.deriv(zf, Side::Right).abs().ln());
        z = map.eval(z);
    }
    Ok(out)
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// ln Λ_s(z_0, m) for m = 1..=len, from the recursion Λ(m+1) = 1 + |T′(z_m)|^s Λ(m).
pub fn log_lambda_s_sequence(log_d: &[f64], s: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(log_d.len());
    let mut l = 0.0;
    out.push(l);
    for &d in &log_d[1..] {
        l = softplus(s * d + l);
        out.push(l);
    }
    out
}

/// Λ_s(z_0, n) = 1 + Σ_{k=1}^{n−1} ∏_{j=k}^{n−1} |T′(z_j)|^s, returned as its logarithm.
pub fn log_lambda_s<M: CircleMap>(map: &M, z0: DD, n: usize, s: f64, breaks: &[f64]) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let d = log_derivatives(map, z0, n, breaks)?;
    Ok(*log_lambda_s_sequence(&d, s).last().expect("n ≥ 1"))
}

pub fn lambda_s<M: CircleMap>(map: &M, z0: DD, n: usize, s: f64, breaks: &[f64]) -> Result<f64> {
    Ok(log_lambda_s(map, z0, n, s, breaks)?.exp())
}

/// ln Λ̂(z_0, n): the largest partial backward sum, Λ̂ = max_{2≤m≤n} (Λ₁(z_0, m) − 1).
pub fn log_lambda_hat_from(log_d: &[f64]) -> f64 {
    let seq = log_lambda_s_sequence(log_d, 1.0);
    (1..seq.len()).map(|m| partial(log_d, &seq, m)).fold(f64::NEG_INFINITY, f64::max)
}

/// ln(Λ₁(m+1) − 1) = ln|T′(z_m)| + ln Λ₁(m).
fn partial(log_d: &[f64], seq: &[f64], m: usize) -> f64 {
    log_d[m] + seq[m - 1]
}

pub fn lambda_hat<M: CircleMap>(map: &M, z0: DD, n: usize, breaks: &[f64]) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidParameter("Λ̂ needs n ≥ 2".into()));
    }
    let d = log_derivatives(map, z0, n, breaks)?;
    Ok(log_lambda_hat_from(&d).exp())
}

/// ln S_{n,β}(z_0) = ln(|I^{(n)}(z_0)|^β Σ_{I∈P_n} |I|^{−β}).
pub fn log_s_n_beta(p: &DynamicalPartition, z0: DD, beta: f64) -> f64 {
    let own = p.locate(z0).length.ln();
    let terms: Vec<f64> = p.intervals().iter().map(|iv| -beta * iv.length.ln()).collect();
    beta * own + log_sum_exp(&terms)
}

pub fn s_n_beta(p: &DynamicalPartition, z0: DD, beta: f64) -> f64 {
    log_s_n_beta(p, z0, beta).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovRow {
    pub n: usize,
    pub q_n: u64,
    pub lambda_beta: f64,
    pub lambda_hat_next: f64,
    pub s_n_beta: f64,
    pub interval: f64,
    /// Λ_β(z_0, q_n) / (|I^{(n)}|^β λ_{−β}^n)
    pub sandwich_ratio: f64,
    /// Λ_β(z_0, q_n + q_{n+1}) / S_{n,β}
    pub partition_ratio: f64,
    /// Λ̂(z_0, q_{n+1}) / (n λ_{−1}^n)
    pub hat_constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    pub z0: f64,
    pub beta: f64,
    pub lambda_minus_beta: f64,
    pub lambda_minus_one: f64,
    pub rows: Vec<LyapunovRow>,
    /// max/min of the sandwich ratio over the rows.
    pub dynamic_range: f64,
    pub bound: f64,
    pub pass: bool,
    /// First level from which every later ratio stays within `bound` of each other.
    pub stable_from: Option<usize>,
}

/// Eigenvalue inputs taken from the thermodynamic estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenInputs {
    pub lambda_minus_beta: f64,
    pub lambda_minus_one: f64,
}

/// Per-level comparison of Λ_β(z_0, q_n) with |I^{(n)}(x_b; z_0)|^β λ_{−β}^n.
/// The hierarchy must be built from x_b up to at least max(levels)+1.
pub fn sandwich_check<M: CircleMap>(
    map: &M,
    h: &PartitionHierarchy,
    z0: DD,
    beta: f64,
    levels: std::ops::RangeInclusive<usize>,
    eigen: EigenInputs,
    bound: f64,
    breaks: &[f64],
) -> Result<LyapunovReport> {
    let top = *levels.end();
    if top + 1 > h.max_level() {
        return Err(Error::InvalidParameter(format!(
            "levels up to {top} need a hierarchy of depth {}",
            top + 1
        )));
    }
    let p_top = h.level(top);
    let horizon = (p_top.q(top + 1) + p_top.q(top + 2)) as usize;
    let d = log_derivatives(map, z0, horizon, breaks)?;
    let lam_beta = log_lambda_s_sequence(&d, beta);
    let lam_one = log_lambda_s_sequence(&d, 1.0);
    let mut rows = Vec::new();
    for n in levels {
        let p = h.level(n);
        let q_n = p.q(n);
        let q_n1 = p.q(n + 1) as usize;
        let interval = p.locate(z0).length;
        let l_beta = lam_beta[q_n as usize - 1];
        let l_hat = (1..q_n1).map(|m| partial(&d, &lam_one, m)).fold(f64::NEG_INFINITY, f64::max);
        let log_s = log_s_n_beta(p, z0, beta);
        let nf = n as f64;
        rows.push(LyapunovRow {
            n,
            q_n,
            lambda_beta: l_beta.exp(),
            lambda_hat_next: l_hat.exp(),
            s_n_beta: log_s.exp(),
            interval,
            sandwich_ratio: (l_beta - beta * interval.ln() - nf * eigen.lambda_minus_beta.ln()).exp(),
            partition_ratio: (lam_beta[q_n as usize + q_n1 - 1] - log_s).exp(),
            hat_constant: (l_hat - nf.ln() - nf * eigen.lambda_minus_one.ln()).exp(),
        });
    }
    let ratios: Vec<f64> = rows.iter().map(|r| r.sandwich_ratio).collect();
    let range = |r: &[f64]| r.iter().copied().fold(f64::NEG_INFINITY, f64::max) / r.iter().copied().fold(f64::INFINITY, f64::min);
    let dynamic_range = range(&ratios);
    let stable_from = (0..ratios.len()).find(|&i| range(&ratios[i..]) <= bound).map(|i| rows[i].n);
    Ok(LyapunovReport {
        z0: z0.to_f64(),
        beta,
        lambda_minus_beta: eigen.lambda_minus_beta,
        lambda_minus_one: eigen.lambda_minus_one,
        rows,
        dynamic_range,
        bound,
        pass: dynamic_range <= bound,
        stable_from,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltCondition {
    pub p: f64,
    /// (n, Λ_p(z_0, q_n) / Λ_2(z_0, q_n)^{p/2})
    pub ratios: Vec<(usize, f64)>,
    /// Fitted per-level factor of the ratio.
    pub fitted_rate: f64,
    /// λ_{−p} / λ_{−2}^{p/2}, when eigenvalues are supplied.
    pub predicted_rate: Option<f64>,
    pub strictly_decreasing: bool,
}

pub fn clt_condition_check<M: CircleMap>(
    map: &M,
    h: &PartitionHierarchy,
    z0: DD,
    p: f64,
    levels: std::ops::RangeInclusive<usize>,
    eigen: Option<(f64, f64)>,
    breaks: &[f64],
) -> Result<CltCondition> {
    let top = *levels.end();
    let horizon = h.level(top).q(top) as usize;
    let d = log_derivatives(map, z0, horizon, breaks)?;
    let lp = log_lambda_s_sequence(&d, p);
    let l2 = log_lambda_s_sequence(&d, 2.0);
    let ratios: Vec<(usize, f64)> = levels
        .map(|n| {
            let q = h.level(n).q(n) as usize;
            (n, (lp[q - 1] - 0.5 * p * l2[q - 1]).exp())
        })
        .collect();
    let pts: Vec<(f64, f64)> = ratios.iter().map(|&(n, r)| (n as f64, r.ln())).collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    Ok(CltCondition {
        p,
        strictly_decreasing: ratios.windows(2).all(|w| w[1].1 < w[0].1),
        ratios,
        fitted_rate: slope.exp(),
        predicted_rate: eigen.map(|(lp, l2)| lp / l2.powf(p / 2.0)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RBetaEstimate {
    pub m: usize,
    pub beta: f64,
    /// (n, D_{n−m}(β) / λ_{−β}^{n−m})
    pub ratios: Vec<(usize, f64)>,
    pub plateau: f64,
    pub error_bar: f64,
}

/// D_{n−m}(β) sums |Δ|^{−β} over the elements of P_n inside J_m, with lengths
/// normalized by |J_m|.
pub fn r_beta_plateau(
    h: &PartitionHierarchy,
    m: usize,
    levels: std::ops::RangeInclusive<usize>,
    beta: f64,
    lambda_minus_beta: f64,
) -> Result<RBetaEstimate> {
    if *levels.start() <= m {
        return Err(Error::InvalidParameter("levels must exceed m".into()));
    }
    let pm = h.level(m);
    let j_tags = [Tag { generation: m + 1, index: 0 }, Tag { generation: m, index: 0 }];
    let j_len: f64 = j_tags.iter().filter_map(|&t| pm.get(t)).map(|iv| iv.length).sum();
    let ratios: Vec<(usize, f64)> = levels
        .map(|n| {
            let p = h.level(n);
            let terms: Vec<f64> = p
                .intervals()
                .iter()
                .filter(|iv| {
                    let mid = crate::circle::wrap(p.point(iv.left) + DD::from(0.5 * iv.length));
                    j_tags.contains(&pm.locate(mid).tag)
                })
                .map(|iv| -beta * (iv.length / j_len).ln())
                .collect();
            let k = (n - m) as f64;
            (n, (log_sum_exp(&terms) - k * lambda_minus_beta.ln()).exp())
        })
        .collect();
    let tail: Vec<f64> = ratios.iter().rev().take(3).map(|r| r.1).collect();
    let plateau = tail.iter().sum::<f64>() / tail.len() as f64;
    let error_bar = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max) - tail.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(RBetaEstimate {
        m,
        beta,
        ratios,
        plateau,
        error_bar,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{BreakMap, MapSpec};
    use crate::real::Precision;
    use crate::thermo::{eigenvalue_power, estimate_potential};
    use proptest::prelude::*;

    fn g1() -> BreakMap {
        BreakMap::from_spec(MapSpec::FractionalLinear { c: 2.0, which: 1 }).unwrap()
    }

    fn breaks(m: &BreakMap) -> Vec<f64> {
        m.breaks().iter().map(|b| b.position).collect()
    }

    /// Direct double sum, no recursion and no logarithms.
    fn lambda_direct(m: &BreakMap, z0: f64, n: usize, s: f64) -> f64 {
        let z = crate::map::orbit(m, z0, n);
        let d: Vec<f64> = z.iter().map(|&x| m.deriv(x, Side::Right).powf(s)).collect();
        1.0 + (1..n).map(|k| (k..n).map(|j| d[j]).product::<f64>()).sum::<f64>()
    }

    #[test]
    fn rotation_values() {
        let r = BreakMap::rotation(0.381966);
        for n in [1, 2, 7, 40] {
            assert!((lambda_s(&r, DD::from(0.3), n, 2.0, &[]).unwrap() - n as f64).abs() < 1e-12);
        }
        assert!((lambda_hat(&r, DD::from(0.3), 40, &[]).unwrap() - 39.0).abs() < 1e-12);
    }

    #[test]
    fn matches_direct_sum() {
        let m = g1();
        for &(z0, n, s) in &[(0.1, 30, 1.0), (0.77, 89, 2.0), (0.5, 144, 3.0)] {
            let fast = lambda_s(&m, DD::from(z0), n, s, &[]).unwrap();
            let slow = lambda_direct(&m, z0, n, s);
            assert!((fast / slow - 1.0).abs() < 1e-9, "{fast} vs {slow}");
        }
    }

    #[test]
    fn hat_dominates_the_last_partial_sum() {
        let m = g1();
        let mut exceeds_total = 0;
        for i in 0..20 {
            let z0 = DD::from((i as f64 + 0.31) / 20.0);
            let hat = lambda_hat(&m, z0, 200, &[]).unwrap();
            let total = lambda_s(&m, z0, 200, 1.0, &[]).unwrap();
            assert!(hat >= (total - 1.0) * (1.0 - 1e-12));
            if hat > total {
                exceeds_total += 1;
            }
        }
        // The maximum runs over sums ending at earlier times, so Λ̂ ≤ Λ₁ fails.
        assert!(exceeds_total > 0);
    }

    #[test]
    fn lambda_is_not_monotone_in_n() {
        let d = log_derivatives(&g1(), DD::from(0.0), 150, &[]).unwrap();
        let seq = log_lambda_s_sequence(&d, 2.242886040692732);
        assert!(seq.windows(2).any(|w| w[1] < w[0]));
    }

    #[test]
    fn orbit_on_break_is_refused() {
        let m = g1();
        let b = breaks(&m);
        assert!(matches!(
            lambda_s(&m, m.break_point_tf(), 10, 1.0, &b),
            Err(Error::OrbitHitsBreak { step: 0 })
        ));
    }

    #[test]
    fn s_n_beta_counts_at_beta_zero_and_matches_rotation_lengths() {
        let m = g1();
        let h = PartitionHierarchy::build(&m, m.break_point_tf(), 9, Precision::Double).unwrap();
        for n in 2..=8 {
            let p = h.level(n);
            let s0 = s_n_beta(p, DD::from(0.3), 0.0);
            assert!((s0 - (p.q(n) + p.q(n + 1)) as f64).abs() < 1e-9);
        }
        // Golden rotation: q_{n+1} intervals of length ‖q_nρ‖ and q_n of length ‖q_{n+1}ρ‖.
        let rho = (3.0 - 5f64.sqrt()) / 2.0;
        let r = BreakMap::rotation(rho);
        let hr = PartitionHierarchy::build(&r, DD::from(0.0), 9, Precision::Double).unwrap();
        let norm = |q: u64| {
            let x = q as f64 * rho;
            (x - x.round()).abs()
        };
        for n in 2..=8 {
            let p = hr.level(n);
            let (qn, qn1) = (p.q(n), p.q(n + 1));
            let own = p.locate(DD::from(0.123)).length;
            let beta = 1.5;
            let expect = own.powf(beta) * (qn1 as f64 * norm(qn).powf(-beta) + qn as f64 * norm(qn1).powf(-beta));
            assert!((s_n_beta(p, DD::from(0.123), beta) / expect - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn sandwich_and_clt_condition_for_g1() {
        let m = g1();
        let b = breaks(&m);
        let h = PartitionHierarchy::build(&m, m.break_point_tf(), 14, Precision::Double).unwrap();
        let t = estimate_potential(&h, 10).unwrap();
        let eigen = EigenInputs {
            lambda_minus_beta: eigenvalue_power(&t, -2.0, 1_000_000).unwrap().lambda,
            lambda_minus_one: eigenvalue_power(&t, -1.0, 1_000_000).unwrap().lambda,
        };
        let z0 = DD::from(0.3);
        let rep = sandwich_check(&m, &h, z0, 2.0, 6..=12, eigen, 50.0, &b).unwrap();
        assert!(rep.pass, "{rep:?}");
        let part: Vec<f64> = rep.rows.iter().map(|r| r.partition_ratio).collect();
        let spread = part.iter().copied().fold(0.0, f64::max) / part.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(spread < 50.0, "{part:?}");
        let clt = clt_condition_check(&m, &h, z0, 3.0, 6..=12, None, &b).unwrap();
        assert!(clt.strictly_decreasing, "{clt:?}");
        assert!(clt.fitted_rate < 1.0);
    }

    #[test]
    fn rotation_clt_ratio_closed_form() {
        let r = BreakMap::rotation((3.0 - 5f64.sqrt()) / 2.0);
        let h = PartitionHierarchy::build(&r, DD::from(0.0), 10, Precision::Double).unwrap();
        let c = clt_condition_check(&r, &h, DD::from(0.4), 3.0, 3..=9, None, &[]).unwrap();
        for &(n, v) in &c.ratios {
            let q = h.level(n).q(n) as f64;
            assert!((v - q / q.powf(1.5)).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn cocycle_identity(z0 in 0.0f64..1.0, n in 1usize..120, t in 1usize..120) {
            let m = g1();
            let zn = crate::map::iterate(&m, DD::from(z0), n);
            let total = lambda_s(&m, DD::from(z0), n + t, 1.0, &[]).unwrap();
            let head = lambda_s(&m, DD::from(z0), n, 1.0, &[]).unwrap();
            let tail = lambda_s(&m, zn, t, 1.0, &[]).unwrap();
            let dt: f64 = log_derivatives(&m, zn, t, &[]).unwrap().iter().sum::<f64>().exp();
            prop_assert!(((dt * head + tail) / total - 1.0).abs() < 1e-10);
        }

        #[test]
        fn lambda_at_least_one(z0 in 0.0f64..1.0, s in 0.0f64..4.0) {
            let d = log_derivatives(&g1(), DD::from(z0), 150, &[]).unwrap();
            let seq = log_lambda_s_sequence(&d, s);
            prop_assert_eq!(seq[0], 0.0);
            prop_assert!(seq.iter().all(|&l| l >= 0.0));
            // Each step adds at least the constant term.
            prop_assert!(seq.windows(2).all(|w| w[1] > 0.0));
        }
    }
}
