//! Subcommand bodies. Each one reads an [`ExperimentConfig`], writes its
//! tables and reports under the output directory and returns a short summary.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use circlebreak::dd::DD;
use circlebreak::lyapunov::{clt_condition_check, sandwich_check, EigenInputs};
use circlebreak::map::BreakMap;
use circlebreak::partition::{barycentric_scan, decay_slope, PartitionHierarchy};
use circlebreak::rotation::{continued_fraction, rotation_number};
use circlebreak::stochastic::{calibrate_c1, clt_experiment, noise_exponents, CltConfig, CltReport, ExponentInputs, NoiseExponents};
use circlebreak::symbolic::partition_words;
use circlebreak::thermo::{eigenvalue_power, eigenvalue_ruelle, estimate_potential, PotentialTable};
use circlebreak::Error;

use crate::config::{ExperimentConfig, SCHEMA_VERSION};
use crate::CliError;

/// Margin threshold κ* for the barycentric scan.
pub const KAPPA_STAR: f64 = 0.01;
/// P̂(B) target when C₁ is calibrated.
pub const TUBE_TARGET: f64 = 0.99;
/// `clt --check` thresholds.
pub const KS_MAX: f64 = 0.05;
pub const MAX_INVERSIONS: usize = 1;

const POWER_ITER: usize = 1_000_000;
const RUELLE_TERMS: usize = 120;

#[derive(Debug, Clone)]
pub struct Context {
    pub out: PathBuf,
    /// Omit the `generated_at` field so reruns are byte-identical.
    pub deterministic: bool,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_json(&self, name: &str, command: &str, body: impl Serialize) -> Result<PathBuf, CliError> {
        let mut doc = json!({ "schema_version": SCHEMA_VERSION, "command": command });
        if !self.deterministic {
            let secs = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            doc["generated_at"] = json!(secs);
        }
        doc["result"] = serde_json::to_value(body)?;
        let path = self.path(name);
        std::fs::create_dir_all(&self.out)?;
        std::fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n")?;
        Ok(path)
    }

    fn write_csv<R: Serialize>(&self, name: &str, rows: impl IntoIterator<Item = R>) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        std::fs::create_dir_all(&self.out)?;
        let mut w = csv::Writer::from_path(&path)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(path)
    }
}

/// What a command produced.
#[derive(Debug, Clone)]
pub struct Summary {
    pub lines: Vec<String>,
    pub files: Vec<PathBuf>,
}

impl Summary {
    fn new() -> Summary {
        Summary { lines: Vec::new(), files: Vec::new() }
    }

    fn line(&mut self, s: impl Into<String>) {
        self.lines.push(s.into());
    }
}

fn build_map(cfg: &ExperimentConfig) -> Result<BreakMap, CliError> {
    BreakMap::from_spec(cfg.map.spec).map_err(|e| CliError::Config(format!("map: {e}")))
}

fn need_breaks(map: &BreakMap, command: &str) -> Result<(), CliError> {
    if map.breaks().is_empty() {
        return Err(CliError::Config(format!("{command} needs a map with at least one break point")));
    }
    Ok(())
}

// map-info

#[derive(Debug, Serialize)]
pub struct MapInfo {
    pub map: circlebreak::map::MapDocument,
    pub breaks: Vec<circlebreak::map::BreakInfo>,
    pub jump_ratio_product: f64,
    pub derivative_bounds: circlebreak::map::DerivativeBounds,
    /// Total variation of ln T′.
    pub v: f64,
    /// Variation inside the branches.
    pub v_bar: f64,
    pub theta_plus: f64,
    pub theta_minus: f64,
}

pub fn map_info(cfg: &ExperimentConfig, ctx: &Context) -> Result<(MapInfo, Summary), CliError> {
    let map = build_map(cfg)?;
    let (theta_plus, theta_minus) = map.theta_pm();
    let info = MapInfo {
        map: cfg.map,
        breaks: map.breaks().to_vec(),
        jump_ratio_product: map.breaks().iter().map(|b| b.jump_ratio).product(),
        derivative_bounds: map.derivative_bounds(),
        v: map.denjoy_v(),
        v_bar: map.branch_variation(1e-8),
        theta_plus,
        theta_minus,
    };
    let mut s = Summary::new();
    s.line(format!("breaks: {}", info.breaks.len()));
    for b in &info.breaks {
        s.line(format!("  x = {:.12}  c = {:.12}", b.position, b.jump_ratio));
    }
    s.line(format!("product of jump ratios: {:.12}", info.jump_ratio_product));
    s.line(format!(
        "T′ in [{:.6}, {:.6}], |T″| ≤ {:.6}",
        info.derivative_bounds.min, info.derivative_bounds.max, info.derivative_bounds.max_abs_second
    ));
    s.line(format!("v = {:.8}, v̄ = {:.8}, θ₊ = {:.8}, θ₋ = {:.8}", info.v, info.v_bar, theta_plus, theta_minus));
    s.files.push(ctx.write_json("map_info.json", "map-info", &info)?);
    Ok((info, s))
}

// rotnum

#[derive(Debug, Serialize)]
struct RotRow {
    schema_version: u32,
    n: usize,
    k_n: Option<u64>,
    p_n: u64,
    q_n: u64,
    estimate: f64,
    error: f64,
}

pub fn rotnum(cfg: &ExperimentConfig, ctx: &Context) -> Result<Summary, CliError> {
    let map = build_map(cfg)?;
    let est = rotation_number(&map, 1_000_000, 1e-12)
        .or_else(|_| rotation_number(&map, 1_000_000, 1e-8))?;
    let depth = cfg.levels.max + 1;
    let (cf, note) = match continued_fraction(est.rho, depth) {
        Ok(cf) => (cf, None),
        Err(Error::DepthUnreliable { reached, partial_quotients }) => (
            circlebreak::rotation::ContinuedFraction::from_partial_quotients(&partial_quotients),
            Some(format!("expansion reliable to depth {reached} only")),
        ),
        Err(e) => return Err(e.into()),
    };
    let rows: Vec<RotRow> = (0..=cf.depth())
        .map(|n| {
            let estimate = cf.convergent(n);
            RotRow {
                schema_version: SCHEMA_VERSION,
                n,
                k_n: n.checked_sub(1).map(|i| cf.partial_quotients[i]),
                p_n: cf.p[n],
                q_n: cf.q[n],
                estimate,
                error: (est.rho - estimate).abs(),
            }
        })
        .collect();
    let mut s = Summary::new();
    s.line(format!("ρ = {:.15} ± {:.1e}", est.rho, est.error));
    s.line(format!("partial quotients {:?}", cf.partial_quotients));
    if let Some(n) = &note {
        s.line(n.clone());
    }
    s.files.push(ctx.write_csv("rotnum.csv", rows)?);
    s.files.push(ctx.write_json(
        "rotnum.json",
        "rotnum",
        json!({ "rho": est.rho, "error": est.error, "continued_fraction": cf, "note": note }),
    )?);
    Ok(s)
}

// partition

#[derive(Debug, Serialize)]
struct PartitionRow {
    schema_version: u32,
    z0: f64,
    level: usize,
    generation: usize,
    index: u64,
    left: u64,
    right: u64,
    length: f64,
    cardinality: usize,
    word: String,
}

#[derive(Debug, Serialize)]
pub struct PartitionSummary {
    pub z0: f64,
    pub level: usize,
    pub cardinality: usize,
    pub expected_cardinality: u64,
    pub total_length: f64,
    pub max_length: f64,
    pub min_length: f64,
    pub valid: bool,
    pub error: Option<String>,
}

pub fn partition(cfg: &ExperimentConfig, ctx: &Context) -> Result<Summary, CliError> {
    let map = build_map(cfg)?;
    let precision = cfg.map.precision;
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    let mut slopes = Vec::new();
    // P_n(x_b) is always dumped, with words; base points from the config follow.
    let coding = if map.breaks().is_empty() {
        None
    } else {
        Some(PartitionHierarchy::build(&map, map.break_point_tf(), cfg.levels.max, precision)?)
    };
    let mut bases = Vec::new();
    if coding.is_some() {
        bases.push(map.break_point());
    }
    for &z in &cfg.z0 {
        if !bases.contains(&z) {
            bases.push(z);
        }
    }
    for z0 in bases {
        let h = PartitionHierarchy::build(&map, DD::from(z0), cfg.levels.max, precision)?;
        let mut maxima = Vec::new();
        for n in cfg.levels.iter() {
            let p = h.level(n);
            let words = match (&coding, z0 == map.break_point()) {
                (Some(c), true) => partition_words(c, n).ok(),
                _ => None,
            };
            let card = p.cardinality();
            for (i, iv) in p.intervals().iter().enumerate() {
                rows.push(PartitionRow {
                    schema_version: SCHEMA_VERSION,
                    z0,
                    level: n,
                    generation: iv.tag.generation,
                    index: iv.tag.index,
                    left: iv.left,
                    right: iv.right,
                    length: iv.length,
                    cardinality: card,
                    word: words.as_ref().map(|w| w[i].to_string()).unwrap_or_default(),
                });
            }
            let check = p.validate();
            summaries.push(PartitionSummary {
                z0,
                level: n,
                cardinality: card,
                expected_cardinality: p.q(n) + p.q(n + 1),
                total_length: p.total_length(),
                max_length: p.max_length(),
                min_length: p.min_length(),
                valid: check.is_ok(),
                error: check.err().map(|e| e.to_string()),
            });
            maxima.push((n, p.max_length()));
        }
        let slope = if maxima.len() >= 2 { Some(decay_slope(&maxima)) } else { None };
        slopes.push(json!({ "z0": z0, "decay_slope": slope }));
    }
    let mut s = Summary::new();
    let invalid = summaries.iter().filter(|p| !p.valid).count();
    s.line(format!("{} partitions, {invalid} invalid", summaries.len()));
    s.line(format!("ln θ = {:.6}", map.theta().ln()));
    for v in &slopes {
        s.line(format!("z0 = {}: decay slope {}", v["z0"], v["decay_slope"]));
    }
    s.files.push(ctx.write_csv("partition.csv", rows)?);
    s.files.push(ctx.write_json(
        "partition.json",
        "partition",
        json!({ "levels": summaries, "decay": slopes, "ln_theta": map.theta().ln() }),
    )?);
    Ok(s)
}

// thermo

#[derive(Debug, Clone, Serialize)]
pub struct EigenRow {
    pub beta: f64,
    pub depth: usize,
    pub lambda: f64,
    pub method: &'static str,
    pub residual: f64,
}

#[derive(Debug, Serialize)]
struct PotentialRow {
    schema_version: u32,
    word: String,
    u: f64,
}

fn potential(map: &BreakMap, cfg: &ExperimentConfig) -> Result<PotentialTable, CliError> {
    let h = PartitionHierarchy::build(map, map.break_point_tf(), cfg.depth + 2, cfg.map.precision)?;
    Ok(estimate_potential(&h, cfg.depth)?)
}

pub fn eigen_rows(table: &PotentialTable, betas: &[f64]) -> Result<Vec<EigenRow>, CliError> {
    let mut out = Vec::new();
    for &beta in betas {
        let p = eigenvalue_power(table, beta, POWER_ITER)?;
        out.push(EigenRow {
            beta,
            depth: p.depth,
            lambda: p.lambda,
            method: "power",
            residual: p.residual,
        });
        let r = eigenvalue_ruelle(table, beta, RUELLE_TERMS);
        out.push(EigenRow {
            beta,
            depth: r.depth,
            lambda: r.lambda,
            method: "ruelle",
            residual: r.error,
        });
    }
    Ok(out)
}

pub fn thermo(cfg: &ExperimentConfig, ctx: &Context) -> Result<Summary, CliError> {
    let map = build_map(cfg)?;
    need_breaks(&map, "thermo")?;
    let table = potential(&map, cfg)?;
    let eig = eigen_rows(&table, &cfg.betas)?;
    let mut s = Summary::new();
    s.line(format!("potential table: {} words at depth {}", table.len(), cfg.depth));
    for r in &eig {
        s.line(format!("β = {:>6}  {:<6} λ = {:.10}  ({:.1e})", r.beta, r.method, r.lambda, r.residual));
    }
    s.files.push(ctx.write_csv(
        "potential.csv",
        table.iter().map(|(w, u)| PotentialRow {
            schema_version: SCHEMA_VERSION,
            word: w.to_string(),
            u,
        }),
    )?);
    s.files.push(ctx.write_json("eigenvalues.json", "thermo", &eig)?);
    Ok(s)
}

// lyapunov

#[derive(Debug, Serialize)]
struct LyapunovCsvRow {
    schema_version: u32,
    z0: f64,
    beta: f64,
    n: usize,
    q_n: u64,
    lambda_beta: f64,
    lambda_hat_next: f64,
    s_n_beta: f64,
    interval: f64,
    sandwich_ratio: f64,
    partition_ratio: f64,
    hat_constant: f64,
}

pub fn lyapunov(cfg: &ExperimentConfig, ctx: &Context) -> Result<Summary, CliError> {
    let map = build_map(cfg)?;
    need_breaks(&map, "lyapunov")?;
    let breaks: Vec<f64> = map.breaks().iter().map(|b| b.position).collect();
    let table = potential(&map, cfg)?;
    let h = PartitionHierarchy::build(&map, map.break_point_tf(), cfg.levels.max + 2, cfg.map.precision)?;
    let lambda_minus_one = eigenvalue_power(&table, -1.0, POWER_ITER)?.lambda;
    let p = cfg.noise.p;
    let eigen_p = (
        eigenvalue_power(&table, -p, POWER_ITER)?.lambda,
        eigenvalue_power(&table, -2.0, POWER_ITER)?.lambda,
    );
    let mut reports = Vec::new();
    let mut conditions = Vec::new();
    let mut rows = Vec::new();
    let mut s = Summary::new();
    for &z0 in &cfg.z0 {
        let z = DD::from(z0);
        for &beta in cfg.betas.iter().filter(|b| **b > 0.0) {
            let eigen = EigenInputs {
                lambda_minus_beta: eigenvalue_power(&table, -beta, POWER_ITER)?.lambda,
                lambda_minus_one,
            };
            let r = sandwich_check(&map, &h, z, beta, cfg.levels.iter(), eigen, 50.0, &breaks)?;
            s.line(format!("z0 = {z0}, β = {beta}: dynamic range {:.3}, stable from {:?}", r.dynamic_range, r.stable_from));
            rows.extend(r.rows.iter().map(|row| LyapunovCsvRow {
                schema_version: SCHEMA_VERSION,
                z0,
                beta,
                n: row.n,
                q_n: row.q_n,
                lambda_beta: row.lambda_beta,
                lambda_hat_next: row.lambda_hat_next,
                s_n_beta: row.s_n_beta,
                interval: row.interval,
                sandwich_ratio: row.sandwich_ratio,
                partition_ratio: row.partition_ratio,
                hat_constant: row.hat_constant,
            }));
            reports.push(r);
        }
        let c = clt_condition_check(&map, &h, z, p, cfg.levels.iter(), Some(eigen_p), &breaks)?;
        s.line(format!(
            "z0 = {z0}: Λ_{p}/Λ_2^{} strictly decreasing: {} (rate {:.4})",
            p / 2.0,
            c.strictly_decreasing,
            c.fitted_rate
        ));
        conditions.push(json!({ "z0": z0, "condition": c }));
    }
    s.files.push(ctx.write_csv("lyapunov.csv", rows)?);
    s.files.push(ctx.write_json("lyapunov.json", "lyapunov", json!({ "sandwich": reports, "clt_condition": conditions }))?);
    Ok(s)
}

// barycentric

#[derive(Debug, Serialize)]
struct BaryRow {
    schema_version: u32,
    z0: f64,
    level: usize,
    kappa: f64,
    worst_k: u64,
    selected: bool,
}

pub fn barycentric(cfg: &ExperimentConfig, ctx: &Context) -> Result<Summary, CliError> {
    let map = build_map(cfg)?;
    need_breaks(&map, "barycentric")?;
    let mut reports = Vec::new();
    let mut rows = Vec::new();
    let mut s = Summary::new();
    for &z0 in &cfg.z0 {
        let r = barycentric_scan(&map, map.break_point(), z0, cfg.levels.iter(), KAPPA_STAR, cfg.map.precision)?;
        s.line(format!("z0 = {z0}: κ ≥ {KAPPA_STAR} at levels {:?}", r.selected));
        rows.extend(r.levels.iter().map(|l| BaryRow {
            schema_version: SCHEMA_VERSION,
            z0,
            level: l.level,
            kappa: l.kappa,
            worst_k: l.worst_k,
            selected: r.selected.contains(&l.level),
        }));
        reports.push(json!({ "z0": z0, "scan": r }));
    }
    s.files.push(ctx.write_csv("barycentric.csv", rows)?);
    s.files.push(ctx.write_json("barycentric.json", "barycentric", reports)?);
    Ok(s)
}

// clt

/// γ and τ from eigenvalues at `depth` and `depth − 2` (same parity).
pub fn auto_exponents(map: &BreakMap, cfg: &ExperimentConfig) -> Result<NoiseExponents, CliError> {
    let h = PartitionHierarchy::build(map, map.break_point_tf(), cfg.depth + 1, cfg.map.precision)?;
    let s = cfg.noise.p;
    let lam = |depth: usize| -> Result<[f64; 3], CliError> {
        let t = estimate_potential(&h, depth)?;
        Ok([
            eigenvalue_power(&t, -1.0, POWER_ITER)?.lambda,
            eigenvalue_power(&t, -2.0, POWER_ITER)?.lambda,
            eigenvalue_power(&t, -s, POWER_ITER)?.lambda,
        ])
    };
    let fine = lam(cfg.depth)?;
    let coarse = lam(cfg.depth.saturating_sub(2).max(1))?;
    let rho = rotation_number(map, 100_000, 1e-8)?.rho;
    Ok(noise_exponents(&ExponentInputs {
        lambda_minus_one: fine[0],
        lambda_minus_two: fine[1],
        lambda_minus_s: fine[2],
        theta_plus: map.theta_pm().0,
        rho,
        p: s,
        errors: [0, 1, 2].map(|i| (fine[i] - coarse[i]).abs()),
    })?)
}

#[derive(Debug, Serialize)]
struct SampleRow {
    schema_version: u32,
    z0: f64,
    level: usize,
    n: u64,
    replica: usize,
    linear: f64,
    full: f64,
}

#[derive(Debug, Serialize)]
pub struct CltOutput {
    pub exponents: Option<NoiseExponents>,
    pub reports: Vec<CltReport>,
    pub check: Option<Vec<String>>,
}

/// Threshold breaches of a report, empty when it passes.
pub fn clt_breaches(r: &CltReport) -> Vec<String> {
    let mut out = Vec::new();
    if let Some(top) = r.levels.last() {
        if top.ks_full.statistic > KS_MAX {
            out.push(format!("z0 = {}: KS(ω) = {:.4} > {KS_MAX} at level {}", r.z0, top.ks_full.statistic, top.level));
        }
    }
    if r.full_inversions > MAX_INVERSIONS {
        out.push(format!("z0 = {}: {} inversions in the KS trend", r.z0, r.full_inversions));
    }
    for l in &r.levels {
        if let Some(t) = &l.tubes {
            if t.frequency.value < TUBE_TARGET {
                out.push(format!("z0 = {}: P̂(B) = {:.4} at level {}", r.z0, t.frequency.value, l.level));
            }
        }
    }
    out
}

pub fn clt(cfg: &ExperimentConfig, ctx: &Context, check: bool) -> Result<(CltOutput, Summary), CliError> {
    let map = build_map(cfg)?;
    let mut s = Summary::new();
    let exponents = match cfg.sigma.tau.value() {
        Some(_) => None,
        None => {
            need_breaks(&map, "clt with tau = \"auto\"")?;
            Some(auto_exponents(&map, cfg)?)
        }
    };
    let tau = cfg.sigma.tau.value().or(exponents.as_ref().map(|e| e.tau)).expect("τ set");
    if let Some(e) = &exponents {
        s.line(format!("γ = {:.4} ± {:.4}, τ = {:.4} ± {:.4}", e.gamma, e.gamma_error, e.tau, e.tau_error));
    }
    let levels: Vec<usize> = cfg.levels.iter().collect();
    let mut reports = Vec::new();
    let mut samples = Vec::new();
    for &z0 in &cfg.z0 {
        let c1 = match cfg.sigma.c1.value() {
            Some(c) => c,
            None => {
                let n = cfg.levels.min.saturating_sub(1).max(1);
                calibrate_c1(&map, z0, n, cfg.l, tau, &cfg.noise, cfg.replicas, cfg.seed, TUBE_TARGET)?
            }
        };
        let run = CltConfig {
            z0,
            levels: levels.clone(),
            c1,
            tau,
            noise: cfg.noise,
            replicas: cfg.replicas,
            seed: cfg.seed,
            l: cfg.l,
            max_tube_level: cfg.max_tube_level,
        };
        let (report, smp) = clt_experiment(&map, &run)?;
        s.line(format!("z0 = {z0}, C₁ = {c1:e}"));
        for l in &report.levels {
            s.line(format!(
                "  level {:>2} (n = {:>6}): KS(l) {:.4}  KS(ω) {:.4}  P̂(B) {}",
                l.level,
                l.n,
                l.ks_linear.statistic,
                l.ks_full.statistic,
                l.tubes.as_ref().map(|t| format!("{:.4}", t.frequency.value)).unwrap_or_else(|| "-".into())
            ));
        }
        for c in smp {
            for (i, (lin, full)) in c.linear.iter().zip(&c.full).enumerate() {
                samples.push(SampleRow {
                    schema_version: SCHEMA_VERSION,
                    z0,
                    level: c.level,
                    n: c.n,
                    replica: i,
                    linear: *lin,
                    full: *full,
                });
            }
        }
        reports.push(report);
    }
    let breaches = check.then(|| reports.iter().flat_map(clt_breaches).collect::<Vec<_>>());
    let out = CltOutput { exponents, reports, check: breaches };
    s.files.push(ctx.write_csv("clt_samples.csv", samples)?);
    s.files.push(ctx.write_json("clt_report.json", "clt", &out)?);
    if let Some(b) = &out.check {
        if !b.is_empty() {
            return Err(CliError::CheckFailed(b.join("; ")));
        }
        s.line("check: all thresholds met");
    }
    Ok((out, s))
}

// check

pub fn check(only: &[usize], ctx: &Context, mut each: impl FnMut(&str)) -> Result<Summary, CliError> {
    let results = crate::check::run(only, |r| each(&r.line()));
    let mut s = Summary::new();
    let bad: Vec<usize> = results.iter().filter(|r| r.unexpected_failure()).map(|r| r.id).collect();
    s.files.push(ctx.write_json("check.json", "check", &results)?);
    if !bad.is_empty() {
        return Err(CliError::CheckFailed(format!("criteria {bad:?}")));
    }
    s.line(format!("{} criteria run, no unexpected failures", results.len()));
    Ok(s)
}

pub fn output_dir(cfg_out: Option<&Path>, flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| cfg_out.map(Path::to_path_buf)).unwrap_or_else(|| PathBuf::from("."))
}
