//! Noise exponents, tube/D-event frequencies and the Monte-Carlo CLT run.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ks::{ks_test_normal, wilson, Frequency, KsResult};
use super::noise::NoiseModel;
use super::tubes::{build_tubes, TubeSet};
use super::{replica_rng, BaseOrbit};
use crate::dd::DD;
use crate::error::{Error, Result};
use crate::lyapunov::{log_lambda_hat_from, log_lambda_s_sequence};
use crate::map::BreakMap;
use crate::real::{Precision, Real};
use crate::rotation::closest_returns;

/// Normal quantile used for every Wilson interval in the reports.
const WILSON_Z: f64 = 2.576;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentInputs {
    pub lambda_minus_one: f64,
    pub lambda_minus_two: f64,
    /// λ_{−s} with s = min(p, 3).
    pub lambda_minus_s: f64,
    pub theta_plus: f64,
    pub rho: f64,
    pub p: f64,
    /// Absolute error bars of the three eigenvalues, in the same order.
    pub errors: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseExponents {
    pub gamma: f64,
    pub tau: f64,
    pub s: f64,
    pub gamma_error: f64,
    pub tau_error: f64,
    /// 2 ln λ_{−s} − s ln λ_{−2} < 0, i.e. τ ≥ γ.
    pub ordering_holds: bool,
}

fn exponents_at(lm1: f64, lm2: f64, lms: f64, theta: f64, rho: f64, p: f64) -> (f64, f64, f64) {
    let lr = rho.ln();
    let s = p.min(3.0);
    let g1 = 2.0 / p - (5.0 * lm1.ln() + 4.0 * (1.0 / theta).ln() + 6.0) / lr;
    let g2 = 0.5 + 2.0 * theta.ln() / lr;
    let gamma = g1.max(g2);
    let corr = 2.0 * lms.ln() - s * lm2.ln();
    (gamma, gamma + corr / (3.0 * lr), corr)
}

pub fn noise_exponents(x: &ExponentInputs) -> Result<NoiseExponents> {
    let positive = [x.lambda_minus_one, x.lambda_minus_two, x.lambda_minus_s, x.theta_plus];
    if positive.iter().any(|v| !(*v > 0.0)) || !(x.theta_plus < 1.0) {
        return Err(Error::InvalidParameter(format!("eigenvalues and θ₊ must be positive: {x:?}")));
    }
    if !(x.rho > 0.0 && x.rho < 1.0) || !(x.p > 2.0) {
        return Err(Error::InvalidParameter(format!("need 0 < ρ < 1 and p > 2: {x:?}")));
    }
    let (gamma, tau, corr) = exponents_at(x.lambda_minus_one, x.lambda_minus_two, x.lambda_minus_s, x.theta_plus, x.rho, x.p);
    let (mut ge, mut te) = (0.0f64, 0.0f64);
    for signs in 0..8u32 {
        let pert = |v: f64, e: f64, bit: u32| if signs >> bit & 1 == 1 { (v + e).max(f64::MIN_POSITIVE) } else { (v - e).max(f64::MIN_POSITIVE) };
        let (g, t, _) = exponents_at(
            pert(x.lambda_minus_one, x.errors[0], 0),
            pert(x.lambda_minus_two, x.errors[1], 1),
            pert(x.lambda_minus_s, x.errors[2], 2),
            x.theta_plus,
            x.rho,
            x.p,
        );
        ge = ge.max((g - gamma).abs());
        te = te.max((t - tau).abs());
    }
    Ok(NoiseExponents {
        gamma,
        tau,
        s: x.p.min(3.0),
        gamma_error: ge,
        tau_error: te,
        ordering_holds: corr < 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltConfig {
    pub z0: f64,
    /// Levels m; the observation time is q_m.
    pub levels: Vec<usize>,
    pub c1: f64,
    pub tau: f64,
    pub noise: NoiseModel,
    pub replicas: usize,
    pub seed: u64,
    /// Fine-partition offset for the tubes (≥ 4).
    pub l: usize,
    /// Tubes are built only for n_m = m − 1 up to this level.
    pub max_tube_level: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeEvents {
    pub level: usize,
    pub fine_level: usize,
    pub horizon: u64,
    pub sigma: f64,
    pub frequency: Frequency,
    /// (1 − Cσ²/θ₊^{2n+7})^{q_{n+1}} with the fitted C.
    pub bound: f64,
    /// max_k Var(L_k) θ₊^{2n+7} / d_k², d_k the distance from z_k to ∂A_k.
    pub fitted_c: f64,
    /// q_{n+1} σ² / θ₊^{2n+4}
    pub hypothesis: f64,
    pub min_margin: f64,
    pub break_points_inside: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltLevel {
    pub level: usize,
    pub n: u64,
    pub sigma: f64,
    pub replicas: usize,
    pub var_l: f64,
    pub sample_var_l: f64,
    /// Λ_s / Λ₂^{s/2} with s = min(p, 3).
    pub berry_esseen: f64,
    /// KS(l) / Berry–Esseen proxy.
    pub berry_esseen_constant: f64,
    pub ks_linear: KsResult,
    pub ks_full: KsResult,
    /// e·1_B standardised by its sample deviation.
    pub ks_restricted: Option<KsResult>,
    pub lambda_hat: f64,
    pub d_event: Frequency,
    /// 1 − E(max|ξ|^p)(2Kσ Λ̂²)^p
    pub d_bound: f64,
    /// Replicas in D with |σ²Q| > 2Kσ²(max|ξ|)²Λ̂³.
    pub remainder_violations: usize,
    pub unwrap_flags: usize,
    pub tubes: Option<TubeEvents>,
    /// Why tubes were not built, if they were not.
    pub tube_note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub z0: f64,
    pub seed: u64,
    pub replicas: usize,
    pub c1: f64,
    pub tau: f64,
    pub noise: NoiseModel,
    pub levels: Vec<CltLevel>,
    /// −slope of ln KS(ω) against ln q_m.
    pub ks_decay_exponent: f64,
    pub linear_inversions: usize,
    pub full_inversions: usize,
}

impl CltReport {
    pub fn linear_trend_ok(&self) -> bool {
        self.linear_inversions <= 1
    }

    pub fn full_trend_ok(&self) -> bool {
        self.full_inversions <= 1
    }
}

/// Normalised samples at one level, for CSV export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltSamples {
    pub level: usize,
    pub n: u64,
    pub linear: Vec<f64>,
    pub full: Vec<f64>,
}

struct Replica {
    e: f64,
    l: f64,
    max_xi: f64,
    q: f64,
    in_tubes: bool,
    unwrap: bool,
}

fn run_replica(
    map: &BreakMap,
    base: &BaseOrbit,
    n: usize,
    sigma: f64,
    noise: &NoiseModel,
    seed: u64,
    stream: u64,
    tubes: Option<&TubeSet>,
) -> Replica {
    let mut rng = replica_rng(seed, stream);
    let (mut e, mut l, mut q, mut max_xi) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut in_tubes = true;
    let mut unwrap = false;
    let s2 = sigma * sigma;
    for k in 0..n {
        let z = base.z[k].to_f64();
        let xi = noise.sample(&mut rng);
        max_xi = max_xi.max(xi.abs());
        q = base.deriv[k] * q + map.remainder(z, e) / s2;
        l = if k == 0 { xi } else { l * base.deriv[k] + xi };
        e = map.increment(z, e) + sigma * xi;
        if e.abs() > 0.25 {
            unwrap = true;
        }
        if let Some(t) = tubes {
            if k + 1 < t.tubes.len() && !t.tubes[k + 1].contains_offset(e) {
                in_tubes = false;
            }
        }
    }
    Replica { e, l, max_xi, q, in_tubes, unwrap }
}

fn inversions(xs: &[f64]) -> usize {
    xs.windows(2).filter(|w| w[1] > w[0]).count()
}

fn sample_sd(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn return_times(map: &BreakMap, count: usize) -> Result<Vec<u64>> {
    closest_returns(map, map.break_point_tf(), count, 50_000_000)
}

fn sigma_at(c1: f64, tau: f64, q: u64) -> Result<f64> {
    let sigma = c1 * (q as f64).powf(-tau);
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("σ = C₁ q^(−τ) = {sigma} at q = {q}")));
    }
    Ok(sigma)
}

fn tube_summary(map: &BreakMap, base: &BaseOrbit, t: &TubeSet, sigma: f64, noise: &NoiseModel, hits: usize, trials: usize) -> TubeEvents {
    let n = t.level as i32;
    let theta = map.theta_pm().0;
    let log_d: Vec<f64> = base.deriv.iter().map(|d| d.abs().ln()).collect();
    let l2 = log_lambda_s_sequence(&log_d, 2.0);
    let mut fitted_c: f64 = 0.0;
    for tube in t.tubes.iter().skip(1) {
        let var = noise.variance() * l2[tube.k - 1].exp();
        let d = tube.below.min(tube.above);
        fitted_c = fitted_c.max(var * theta.powi(2 * n + 7) / (d * d));
    }
    let per_step = 1.0 - fitted_c * sigma * sigma / theta.powi(2 * n + 7);
    let bound = if per_step <= 0.0 { 0.0 } else { (t.horizon as f64 * per_step.ln()).exp() };
    TubeEvents {
        level: t.level,
        fine_level: t.fine_level,
        horizon: t.horizon,
        sigma,
        frequency: wilson(hits, trials, WILSON_Z),
        bound,
        fitted_c,
        hypothesis: t.horizon as f64 * sigma * sigma / theta.powi(2 * n + 4),
        min_margin: t.min_margin(),
        break_points_inside: t.break_points_inside.len(),
    }
}

/// Fraction of replicas whose noisy orbit stays in the tubes A_k^{(n)},
/// k < q_{n+1}, at noise level σ.
pub fn tube_event_frequency(
    map: &BreakMap,
    z0: f64,
    n: usize,
    l: usize,
    sigma: f64,
    noise: &NoiseModel,
    replicas: usize,
    seed: u64,
) -> Result<TubeEvents> {
    noise.validate()?;
    let tubes = build_tubes(map, DD::from(z0), n, l, Precision::Extended)?;
    let horizon = tubes.horizon as usize;
    let base = BaseOrbit::new(map, DD::from(z0), horizon)?;
    let hits = (0..replicas as u64)
        .into_par_iter()
        .map(|r| run_replica(map, &base, horizon, sigma, noise, seed, r, Some(&tubes)).in_tubes)
        .collect::<Vec<_>>()
        .into_iter()
        .filter(|&b| b)
        .count();
    Ok(tube_summary(map, &base, &tubes, sigma, noise, hits, replicas))
}

/// Largest C₁ in {1, 10⁻¹, 10⁻², …} with P̂(B) ≥ `target` at tube level `n`.
pub fn calibrate_c1(
    map: &BreakMap,
    z0: f64,
    n: usize,
    l: usize,
    tau: f64,
    noise: &NoiseModel,
    replicas: usize,
    seed: u64,
    target: f64,
) -> Result<f64> {
    let q = return_times(map, n + 2)?;
    let mut c1 = 1.0;
    for _ in 0..40 {
        let sigma = sigma_at(c1, tau, q[n + 1])?;
        if tube_event_frequency(map, z0, n, l, sigma, noise, replicas, seed)?.frequency.value >= target {
            return Ok(c1);
        }
        c1 *= 0.1;
    }
    Err(Error::NoConvergence { iterations: 40 })
}

pub fn clt_experiment(map: &BreakMap, cfg: &CltConfig) -> Result<(CltReport, Vec<CltSamples>)> {
    cfg.noise.validate()?;
    if cfg.levels.is_empty() || cfg.replicas < 2 {
        return Err(Error::InvalidParameter("need at least one level and two replicas".into()));
    }
    if !(cfg.c1 > 0.0) {
        return Err(Error::InvalidParameter(format!("C₁ = {} must be positive", cfg.c1)));
    }
    let top = *cfg.levels.iter().max().expect("nonempty");
    let q = return_times(map, top + 2)?;
    let base = BaseOrbit::new(map, DD::from(cfg.z0), q[top] as usize)?;
    let log_d: Vec<f64> = base.deriv.iter().map(|d| d.abs().ln()).collect();
    let s = cfg.noise.p.min(3.0);
    let l2 = log_lambda_s_sequence(&log_d, 2.0);
    let ls = log_lambda_s_sequence(&log_d, s);
    let k2 = map.derivative_bounds().max_abs_second;
    let p = cfg.noise.p;

    let mut levels = Vec::with_capacity(cfg.levels.len());
    let mut samples = Vec::with_capacity(cfg.levels.len());
    for &m in &cfg.levels {
        let n = q[m] as usize;
        if n < 2 {
            return Err(Error::InvalidParameter(format!("level {m} has q_m = {n}")));
        }
        let sigma = sigma_at(cfg.c1, cfg.tau, q[m])?;
        let (tubes, tube_note) = if m >= 2 && m - 1 <= cfg.max_tube_level {
            match build_tubes(map, DD::from(cfg.z0), m - 1, cfg.l, Precision::Extended) {
                Ok(t) => (Some(t), None),
                Err(e) => (None, Some(e.to_string())),
            }
        } else {
            (None, Some(format!("tube level {} above the configured limit", m.saturating_sub(1))))
        };
        let reps: Vec<Replica> = (0..cfg.replicas as u64)
            .into_par_iter()
            .map(|r| run_replica(map, &base, n, sigma, &cfg.noise, cfg.seed, (m as u64) << 40 | r, tubes.as_ref()))
            .collect();

        let var_l = cfg.noise.variance() * l2[n - 1].exp();
        let sd = var_l.sqrt();
        let linear: Vec<f64> = reps.iter().map(|r| r.l / sd).collect();
        let full: Vec<f64> = reps.iter().map(|r| r.e / (sigma * sd)).collect();
        let ks_linear = ks_test_normal(&linear);
        let ks_full = ks_test_normal(&full);
        let restricted: Vec<f64> = reps.iter().map(|r| if r.in_tubes { r.e / sigma } else { 0.0 }).collect();
        let rsd = sample_sd(&restricted);
        let ks_restricted = (rsd > 0.0).then(|| ks_test_normal(&restricted.iter().map(|x| x / rsd).collect::<Vec<_>>()));
        let berry_esseen = (ls[n - 1] - 0.5 * s * l2[n - 1]).exp();

        let lambda_hat = log_lambda_hat_from(&log_d[..n]).exp();
        let d_hits: Vec<&Replica> = reps.iter().filter(|r| k2 * sigma * r.max_xi * lambda_hat * lambda_hat < 0.5).collect();
        let remainder_violations = d_hits
            .iter()
            .filter(|r| (sigma * sigma * r.q).abs() > 2.0 * k2 * sigma * sigma * r.max_xi * r.max_xi * lambda_hat.powi(3) * (1.0 + 1e-9))
            .count();
        let d_bound = 1.0 - cfg.noise.expected_max_moment(n as u64, p) * (2.0 * k2 * sigma * lambda_hat * lambda_hat).powf(p);
        let tube_hits = reps.iter().filter(|r| r.in_tubes).count();
        let tube_events = tubes.as_ref().map(|t| tube_summary(map, &base, t, sigma, &cfg.noise, tube_hits, cfg.replicas));

        levels.push(CltLevel {
            level: m,
            n: q[m],
            sigma,
            replicas: cfg.replicas,
            var_l,
            sample_var_l: sample_sd(&reps.iter().map(|r| r.l).collect::<Vec<_>>()).powi(2),
            berry_esseen,
            berry_esseen_constant: ks_linear.statistic / berry_esseen,
            ks_linear,
            ks_full,
            ks_restricted,
            lambda_hat,
            d_event: wilson(d_hits.len(), cfg.replicas, WILSON_Z),
            d_bound,
            remainder_violations,
            unwrap_flags: reps.iter().filter(|r| r.unwrap).count(),
            tubes: tube_events,
            tube_note,
        });
        samples.push(CltSamples { level: m, n: q[m], linear, full });
    }

    let lin: Vec<f64> = levels.iter().map(|l| l.ks_linear.statistic).collect();
    let ful: Vec<f64> = levels.iter().map(|l| l.ks_full.statistic).collect();
    let pts: Vec<(f64, f64)> = levels.iter().map(|l| ((l.n as f64).ln(), l.ks_full.statistic.ln())).collect();
    let ks_decay_exponent = if pts.len() >= 2 { -crate::thermo::fit_line(&pts).0 } else { f64::NAN };
    Ok((
        CltReport {
            z0: cfg.z0,
            seed: cfg.seed,
            replicas: cfg.replicas,
            c1: cfg.c1,
            tau: cfg.tau,
            noise: cfg.noise,
            levels,
            ks_decay_exponent,
            linear_inversions: inversions(&lin),
            full_inversions: inversions(&ful),
        },
        samples,
    ))
}
