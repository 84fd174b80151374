//! The acceptance suite: ten criteria with pinned thresholds.

use std::time::Instant;

use serde::Serialize;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use circlebreak::circle::wrap;
use circlebreak::dd::DD;
use circlebreak::lyapunov::{clt_condition_check, sandwich_check, EigenInputs};
use circlebreak::map::{BreakMap, CircleMap, MapSpec};
use circlebreak::pair::{build_fractional_linear_pair, renormalize_pair};
use circlebreak::partition::{
    check_denjoy, decay_slope, finzi_ratios, is_qn_small, normalized_return_map, ratio_bracket, DynamicalPartition,
    OrbitData, PartitionHierarchy,
};
use circlebreak::real::Precision;
use circlebreak::rotation::closest_returns;
use circlebreak::stochastic::{
    calibrate_c1, clt_experiment, noise_exponents, CltConfig, CltReport, ExponentInputs, NoiseModel,
};
use circlebreak::thermo::{eigenvalue_inequality_check, eigenvalue_power, eigenvalue_ruelle, estimate_potential};
use circlebreak::Result;

// Thresholds.
const RENORM_TOL: f64 = 1e-10;
const PRODUCT_TOL: f64 = 1e-10;
const RETURN_MAP_TOL: f64 = 1e-8;
const DENJOY_POINTS: usize = 1000;
const DENJOY_MAX_LEVEL: usize = 12;
const PARTITION_MAX_LEVEL: usize = 14;
const SLOPE_SLACK: f64 = 0.05;
const PHI_TOL: f64 = 1e-6;
const ESTIMATOR_AGREEMENT: f64 = 0.01;
const SANDWICH_RANGE: f64 = 50.0;
const REPLICAS: usize = 10_000;
const KS_MAX: f64 = 0.05;
const BERRY_ESSEEN_FACTOR: f64 = 3.0;
const TUBE_MIN: f64 = 0.99;
const MAX_INVERSIONS: usize = 1;

/// Levels m (time q_m) for the trend checks: four successive levels.
const TREND_LEVELS: [usize; 4] = [2, 3, 4, 5];
/// Largest level for the linear CLT (q_20 = 10946 steps).
const LINEAR_TOP: usize = 20;
/// Largest level with tubes A_k^{(m−1)} for z_0 = 0.1 (tube level 12).
const FULL_TOP: usize = 13;
const CLT_Z0: f64 = 0.1;
const SEED: u64 = 20_240_917;

/// Criterion 3a asks for c_{G₁}(0)·c_{G₁}(G₁(0)) = √c; the one-sided
/// derivatives of G₁ give c.
pub const KNOWN_RED: [usize; 1] = [3];

const CS: [f64; 3] = [0.5, 2.0, 4.0];
const PHI: f64 = 1.618_033_988_749_895;

fn g1(c: f64) -> BreakMap {
    BreakMap::from_spec(MapSpec::FractionalLinear { c, which: 1 }).expect("G₁")
}

fn breaks(m: &BreakMap) -> Vec<f64> {
    m.breaks().iter().map(|b| b.position).collect()
}

fn fibonacci(n: usize) -> Vec<u64> {
    let mut f = vec![1u64, 1];
    while f.len() < n {
        let k = f.len();
        f.push(f[k - 1] + f[k - 2]);
    }
    f.truncate(n);
    f
}

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

fn c1_first_returns() -> Result<Outcome> {
    let fib = fibonacci(21);
    let mut maps: Vec<(String, BreakMap)> = CS.iter().map(|&c| (format!("G1(c={c})"), g1(c))).collect();
    maps.push(("G2(c=2)".into(), BreakMap::from_spec(MapSpec::FractionalLinear { c: 2.0, which: 2 })?));
    maps.push(("golden rotation".into(), BreakMap::rotation((5f64.sqrt() - 1.0) / 2.0)));
    let mut bad = Vec::new();
    for (name, m) in &maps {
        let q = closest_returns(m, DD::from(0.1), 21, 1_000_000)?;
        if q != fib {
            bad.push(name.clone());
        }
    }
    Ok(Outcome {
        pass: bad.is_empty(),
        detail: format!("q_0..q_20 = Fibonacci for {} maps; mismatches {:?}", maps.len(), bad),
    })
}

fn c2_renormalization() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    for c in CS {
        let p = build_fractional_linear_pair(c)?;
        let r1 = renormalize_pair(p.pair(1))?;
        let r2 = renormalize_pair(&r1)?;
        worst = worst.max(r1.sup_distance(p.pair(2), 1000)).max(r2.sup_distance(p.pair(1), 1000));
    }
    Ok(Outcome {
        pass: worst <= RENORM_TOL,
        detail: format!("max sup-distance {worst:.2e} (≤ {RENORM_TOL:.0e})"),
    })
}

fn c3_jump_ratios() -> Result<Outcome> {
    let mut worst_product: f64 = 0.0;
    let mut measured = Vec::new();
    for c in CS {
        let product: f64 = g1(c).breaks().iter().map(|b| b.jump_ratio).product();
        worst_product = worst_product.max((product - c.sqrt()).abs());
        measured.push(format!("c={c}: {product:.6} vs √c={:.6}", c.sqrt()));
    }
    let m = g1(2.0);
    let mut worst_identity: f64 = 0.0;
    for level in 1..=8 {
        worst_identity = worst_identity.max(normalized_return_map(&m, level)?.jump_identity().relative_error());
    }
    let a = worst_product <= PRODUCT_TOL;
    let b = worst_identity <= RETURN_MAP_TOL;
    Ok(Outcome {
        pass: a && b,
        detail: format!(
            "(a) product = √c: {} [{}]; (b) return-map identity m ≤ 8: {} (max rel. error {worst_identity:.1e})",
            if a { "pass" } else { "FAIL" },
            measured.join("; "),
            if b { "pass" } else { "FAIL" },
        ),
    })
}

fn c4_denjoy_finzi() -> Result<Outcome> {
    let m = g1(2.0);
    let v = m.denjoy_v();
    let b = breaks(&m);
    let q = closest_returns(&m, DD::from(0.1), DENJOY_MAX_LEVEL + 1, 1_000_000)?;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut denjoy_bad, mut finzi_bad, mut finzi_checked) = (0usize, 0usize, 0usize);
    for _ in 0..DENJOY_POINTS {
        let y0: f64 = rng.random();
        for n in 1..=DENJOY_MAX_LEVEL {
            if !check_denjoy(&m, y0, q[n], v, &b)?.pass {
                denjoy_bad += 1;
            }
            if n >= 3 {
                // A q_n-small arc starting at y0: half of the way to T^{q_{n−1}}(y0)
                // on whichever side it falls.
                let mut t = y0;
                for _ in 0..q[n - 1] {
                    t = m.eval(t);
                }
                let d = circlebreak::circle::signed_offset(y0, t);
                let len = if d > 0.0 { 0.5 * d } else { 0.25 * d.abs() };
                let end = wrap(y0 + len);
                if is_qn_small(&m, y0, end, q[n - 1]) {
                    finzi_checked += 1;
                    if !finzi_ratios(&m, y0, end, q[n], q[n - 1], v)?.pass {
                        finzi_bad += 1;
                    }
                }
            }
        }
    }
    Ok(Outcome {
        pass: denjoy_bad == 0 && finzi_bad == 0 && finzi_checked > 0,
        detail: format!(
            "v = {v:.4}; Denjoy violations {denjoy_bad}/{}; Finzi violations {finzi_bad}/{finzi_checked}",
            DENJOY_POINTS * DENJOY_MAX_LEVEL
        ),
    })
}

fn c5_partitions() -> Result<Outcome> {
    let m = g1(2.0);
    let mut invalid = Vec::new();
    for z0 in [m.break_point(), 0.3] {
        let orbit = std::sync::Arc::new(OrbitData::compute(&m, DD::from(z0), PARTITION_MAX_LEVEL, Precision::Double)?);
        for n in 1..=PARTITION_MAX_LEVEL {
            let p = DynamicalPartition::from_orbit(orbit.clone(), n)?;
            let card = (p.q(n) + p.q(n + 1)) as usize;
            if p.validate().is_err() || p.cardinality() != card {
                invalid.push((z0, n));
            }
        }
    }
    let orbit = std::sync::Arc::new(OrbitData::compute(&m, DD::from(m.break_point()), PARTITION_MAX_LEVEL, Precision::Double)?);
    let maxima: Vec<(usize, f64)> = (2..=PARTITION_MAX_LEVEL)
        .map(|n| Ok((n, DynamicalPartition::from_orbit(orbit.clone(), n)?.max_length())))
        .collect::<Result<_>>()?;
    let slope = decay_slope(&maxima);
    let limit = m.theta().ln() + SLOPE_SLACK;
    let bracket = ratio_bracket(&m, 4..=12, 2..=6, Precision::Double)?;
    Ok(Outcome {
        pass: invalid.is_empty() && slope <= limit && bracket.holds(),
        detail: format!(
            "invalid levels {invalid:?}; slope {slope:.4} ≤ {limit:.4}; bracket C₁={:.3} C₂={:.3}, held-out violations {} (unmargined {})",
            bracket.c1,
            bracket.c2,
            bracket.violations.len(),
            bracket.tight_violations.len()
        ),
    })
}

fn c6_eigenvalues() -> Result<Outcome> {
    let m = g1(2.0);
    let h = PartitionHierarchy::build(&m, m.break_point_tf(), 12, Precision::Double)?;
    let t = estimate_potential(&h, 10)?;
    let count = eigenvalue_power(&t, 0.0, 1_000_000)?.lambda;
    let phi_ok = (count - PHI).abs() <= PHI_TOL;
    let mut worst: f64 = 0.0;
    for beta in [1.0, 2.0, 3.0] {
        let p = eigenvalue_power(&t, beta, 1_000_000)?.lambda;
        let r = eigenvalue_ruelle(&t, beta, 120).lambda;
        worst = worst.max((p / r - 1.0).abs());
    }
    let tables: Vec<_> = (8..=10).map(|k| estimate_potential(&h, k)).collect::<Result<_>>()?;
    let ineq = eigenvalue_inequality_check(&tables, 2.0, 3.0);
    let (ineq_ok, ineq_detail) = match &ineq {
        Ok(r) => (r.holds, format!("λ₋₃² vs λ₋₂³: margin {:.4} ± {:.4}", r.rhs - r.lhs, r.error_bar)),
        Err(e) => (false, e.to_string()),
    };
    Ok(Outcome {
        pass: phi_ok && worst <= ESTIMATOR_AGREEMENT && ineq_ok,
        detail: format!("λ(0) = {count:.10}; max power/Ruelle mismatch {:.3}%; {ineq_detail}", 100.0 * worst),
    })
}

fn c7_sandwich() -> Result<Outcome> {
    let m = g1(2.0);
    let b = breaks(&m);
    let h = PartitionHierarchy::build(&m, m.break_point_tf(), 14, Precision::Double)?;
    let t = estimate_potential(&h, 10)?;
    let eigen = EigenInputs {
        lambda_minus_beta: eigenvalue_power(&t, -2.0, 1_000_000)?.lambda,
        lambda_minus_one: eigenvalue_power(&t, -1.0, 1_000_000)?.lambda,
    };
    let z0 = DD::from(0.3);
    let s = sandwich_check(&m, &h, z0, 2.0, 6..=12, eigen, SANDWICH_RANGE, &b)?;
    let c = clt_condition_check(&m, &h, z0, 3.0, 6..=12, None, &b)?;
    Ok(Outcome {
        pass: s.pass && s.dynamic_range <= SANDWICH_RANGE && c.strictly_decreasing,
        detail: format!(
            "dynamic range {:.2} (≤ {SANDWICH_RANGE}); Λ₃/Λ₂^1.5 strictly decreasing: {}",
            s.dynamic_range, c.strictly_decreasing
        ),
    })
}

fn clt_config(levels: Vec<usize>, c1: f64, tau: f64) -> CltConfig {
    CltConfig {
        z0: CLT_Z0,
        levels,
        c1,
        tau,
        noise: NoiseModel::uniform(1.0),
        replicas: REPLICAS,
        seed: SEED,
        l: 4,
        max_tube_level: FULL_TOP - 1,
    }
}

fn inversions(xs: &[f64]) -> usize {
    xs.windows(2).filter(|w| w[1] > w[0]).count()
}

fn c8_linear_clt() -> Result<Outcome> {
    let m = g1(2.0);
    let mut levels = TREND_LEVELS.to_vec();
    levels.push(LINEAR_TOP);
    // σ only enters the full process; the linear statistic ignores it.
    let (rep, _) = clt_experiment(&m, &CltConfig { max_tube_level: 0, ..clt_config(levels, 1e-12, 0.0) })?;
    let top = rep.levels.last().expect("levels");
    let threshold = KS_MAX.max(BERRY_ESSEEN_FACTOR * top.berry_esseen);
    let trend: Vec<f64> = rep.levels[..4].iter().map(|l| l.ks_linear.statistic).collect();
    let inv = inversions(&trend);
    Ok(Outcome {
        pass: top.ks_linear.statistic <= threshold && inv <= MAX_INVERSIONS,
        detail: format!(
            "KS(l) at q_{} = {}: {:.4} ≤ {threshold:.4}; trend over q = {:?}: {:?} ({inv} inversions)",
            top.level,
            top.n,
            top.ks_linear.statistic,
            rep.levels[..4].iter().map(|l| l.n).collect::<Vec<_>>(),
            trend.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>(),
        ),
    })
}

pub fn full_clt_run(threads: usize) -> Result<(CltReport, f64)> {
    let m = g1(2.0);
    let h = PartitionHierarchy::build(&m, m.break_point_tf(), 11, Precision::Double)?;
    let lam = |depth: usize| -> Result<[f64; 3]> {
        let t = estimate_potential(&h, depth)?;
        Ok([
            eigenvalue_power(&t, -1.0, 1_000_000)?.lambda,
            eigenvalue_power(&t, -2.0, 1_000_000)?.lambda,
            eigenvalue_power(&t, -3.0, 1_000_000)?.lambda,
        ])
    };
    let (fine, coarse) = (lam(10)?, lam(8)?);
    let rho = circlebreak::rotation::rotation_number(&m, 100_000, 1e-8)?.rho;
    let ex = noise_exponents(&ExponentInputs {
        lambda_minus_one: fine[0],
        lambda_minus_two: fine[1],
        lambda_minus_s: fine[2],
        theta_plus: m.theta_pm().0,
        rho,
        p: 3.0,
        errors: [0, 1, 2].map(|i| (fine[i] - coarse[i]).abs()),
    })?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool");
    pool.install(|| {
        let noise = NoiseModel::uniform(1.0);
        let c1 = calibrate_c1(&m, CLT_Z0, TREND_LEVELS[0] - 1, 4, ex.tau, &noise, REPLICAS, SEED, TUBE_MIN)?;
        let mut levels = TREND_LEVELS.to_vec();
        levels.push(FULL_TOP);
        let (rep, _) = clt_experiment(&m, &clt_config(levels, c1, ex.tau))?;
        Ok((rep, ex.gamma))
    })
}

fn c9_full_clt() -> Result<Outcome> {
    let (rep, gamma) = full_clt_run(rayon::current_num_threads())?;
    let tubes: Vec<String> = rep
        .levels
        .iter()
        .map(|l| match &l.tubes {
            Some(t) => format!("{:.4}", t.frequency.value),
            None => "none".into(),
        })
        .collect();
    let tubes_ok = rep.levels.iter().all(|l| l.tubes.as_ref().is_some_and(|t| t.frequency.value >= TUBE_MIN));
    let top = rep.levels.last().expect("levels");
    let trend: Vec<f64> = rep.levels[..4].iter().map(|l| l.ks_full.statistic).collect();
    let inv = inversions(&trend);
    Ok(Outcome {
        pass: tubes_ok && top.ks_full.statistic <= KS_MAX && inv <= MAX_INVERSIONS,
        detail: format!(
            "γ = {gamma:.3}, τ = {:.3}, C₁ = {:.0e}; P̂(B) {tubes:?}; KS(ω) at q_{} = {}: {:.4}; trend {:?} ({inv} inversions); fitted KS decay exponent {:.3}",
            rep.tau,
            rep.c1,
            top.level,
            top.n,
            top.ks_full.statistic,
            trend.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>(),
            rep.ks_decay_exponent,
        ),
    })
}

fn c10_determinism() -> Result<Outcome> {
    let (a, _) = full_clt_run(1)?;
    let (b, _) = full_clt_run(4)?;
    let (sa, sb) = (serde_json::to_string(&a).expect("json"), serde_json::to_string(&b).expect("json"));
    Ok(Outcome {
        pass: sa == sb,
        detail: format!("full CLT report on 1 vs 4 threads: {} bytes, identical: {}", sa.len(), sa == sb),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub pass: bool,
    /// Expected to fail; see `KNOWN_RED`.
    pub known_red: bool,
    pub seconds: f64,
    pub detail: String,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        let tag = match (self.pass, self.known_red) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        format!("criterion {:>2} {:<28} {tag:<12} {:>7.2}s  {}", self.id, self.name, self.seconds, self.detail)
    }

    pub fn unexpected_failure(&self) -> bool {
        !self.pass && !self.known_red
    }
}

pub type Criterion = (usize, &'static str, fn() -> Result<Outcome>);

pub const CRITERIA: [Criterion; 10] = [
    (1, "first-return times", c1_first_returns),
    (2, "renormalization period two", c2_renormalization),
    (3, "jump-ratio identities", c3_jump_ratios),
    (4, "Denjoy/Finzi", c4_denjoy_finzi),
    (5, "partition geometry", c5_partitions),
    (6, "eigenvalue estimators", c6_eigenvalues),
    (7, "Lyapunov sandwich", c7_sandwich),
    (8, "linear CLT", c8_linear_clt),
    (9, "full CLT", c9_full_clt),
    (10, "determinism", c10_determinism),
];

/// Runs the selected criteria (all when `only` is empty), calling `each` as
/// every result becomes available.
pub fn run(only: &[usize], mut each: impl FnMut(&CriterionResult)) -> Vec<CriterionResult> {
    let mut out = Vec::new();
    for (id, name, f) in CRITERIA {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = match f() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let r = CriterionResult {
            id,
            name,
            pass,
            known_red: KNOWN_RED.contains(&id),
            seconds: start.elapsed().as_secs_f64(),
            detail,
        };
        each(&r);
        out.push(r);
    }
    out
}
