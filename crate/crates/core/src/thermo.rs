//! Potential estimated from nested partition lengths, and the leading
//! eigenvalue of the associated transfer operator.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::circle::wrap;
use crate::dd::DD;
use crate::error::{Error, Result};
use crate::partition::PartitionHierarchy;
use crate::real::KahanSum;
use crate::symbolic::{admissible_words, allowed, encode, gamma_tail, partition_words, Symbol, Word};

/// U_k on reversed words of length `depth` (finest symbol first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialTable {
    pub depth: usize,
    values: BTreeMap<Vec<Symbol>, f64>,
}

impl PotentialTable {
    /// U ≡ u on every admissible reversed word.
    pub fn constant(depth: usize, u: f64) -> PotentialTable {
        let values = admissible_words(depth).into_iter().map(|w| (w.reversed().symbols, u)).collect();
        PotentialTable { depth, values }
    }

    pub fn get(&self, reversed: &[Symbol]) -> Option<f64> {
        self.values.get(reversed).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Word, f64)> + '_ {
        self.values.iter().map(|(k, &v)| {
            (
                Word {
                    symbols: k.clone(),
                    direction: crate::symbolic::Direction::Reversed,
                },
                v,
            )
        })
    }

    pub fn max_value(&self) -> f64 {
        self.values.values().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// U on the reversed sequence (a_s, …, a_1, γ(a_1)) truncated to the table depth.
    pub fn along_history(&self, forward: &[Symbol]) -> f64 {
        let mut key: Vec<Symbol> = forward.iter().rev().take(self.depth).copied().collect();
        if key.len() < self.depth {
            let first = forward[0];
            key.extend(gamma_tail(first, self.depth - key.len()));
        }
        self.values[&key]
    }
}

/// U_k(b_1…b_k) = ln(|I(b_k…b_1)| / |I(b_k…b_2)|) with the elements taken from
/// P_k and P_{k−1} of the hierarchy.
pub fn estimate_potential(h: &PartitionHierarchy, depth: usize) -> Result<PotentialTable> {
    if depth == 0 || depth > h.max_level() {
        return Err(Error::InvalidParameter(format!(
            "potential depth {depth} outside 1..={}",
            h.max_level()
        )));
    }
    let p = h.level(depth);
    let words = partition_words(h, depth)?;
    let mut values = BTreeMap::new();
    for (iv, word) in p.intervals().iter().zip(words) {
        let parent = if depth == 1 {
            1.0
        } else {
            let mid = wrap(p.point(iv.left) + DD::from(0.5 * iv.length));
            h.level(depth - 1).locate(mid).length
        };
        values.insert(word.reversed().symbols, (iv.length / parent).ln());
    }
    Ok(PotentialTable { depth, values })
}

/// sup over shared histories of |U_{k+1} − U_k|, for each consecutive pair of tables.
pub fn cauchy_differences(tables: &[PotentialTable]) -> Vec<(usize, f64)> {
    tables
        .windows(2)
        .map(|w| {
            let (a, b) = (&w[0], &w[1]);
            let sup = b
                .values
                .iter()
                .map(|(k, &v)| (v - a.values[&k[..a.depth]]).abs())
                .fold(0.0, f64::max);
            (a.depth, sup)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauchyReport {
    /// (k, sup |U_{k+1} − U_k|)
    pub consecutive: Vec<(usize, f64)>,
    /// (k, sup |U_{k+2} − U_k|)
    pub same_parity: Vec<(usize, f64)>,
    /// Per-level contraction fitted to `same_parity`.
    pub q: f64,
}

/// Both difference sequences for consecutive depths `tables[0].depth..`.
/// Renormalization has period two, so only same-parity depths are expected
/// to contract.
pub fn cauchy_report(tables: &[PotentialTable]) -> CauchyReport {
    let consecutive = cauchy_differences(tables);
    let mut same_parity: Vec<(usize, f64)> = Vec::new();
    for start in 0..2 {
        let sub: Vec<PotentialTable> = tables.iter().skip(start).step_by(2).cloned().collect();
        same_parity.extend(cauchy_differences(&sub));
    }
    same_parity.sort_by_key(|p| p.0);
    let pts: Vec<(f64, f64)> = same_parity.iter().filter(|p| p.1 > 0.0).map(|&(k, d)| (k as f64, d.ln())).collect();
    CauchyReport {
        consecutive,
        same_parity,
        q: fit_line(&pts).0.exp(),
    }
}

/// Least-squares (slope, intercept).
pub fn fit_line(pts: &[(f64, f64)]) -> (f64, f64) {
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    (slope, my - slope * mx)
}

/// States are reversed windows of length max(depth−1, 1); an edge prepends
/// the next symbol.
struct CylinderGraph {
    window: usize,
    states: Vec<Vec<Symbol>>,
    index: HashMap<Vec<Symbol>, usize>,
    /// (from, to, U of the full reversed word)
    edges: Vec<(usize, usize, f64)>,
}

impl CylinderGraph {
    fn new(table: &PotentialTable) -> CylinderGraph {
        let k = table.depth;
        let window = (k - 1).max(1);
        let states: Vec<Vec<Symbol>> = admissible_words(window).into_iter().map(|w| w.reversed().symbols).collect();
        let index: HashMap<Vec<Symbol>, usize> = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        let mut edges = Vec::new();
        for (from, w) in states.iter().enumerate() {
            for c in Symbol::ALL.into_iter().filter(|&c| allowed(w[0], c)) {
                let mut full = Vec::with_capacity(window + 1);
                full.push(c);
                full.extend_from_slice(w);
                edges.push((from, index[&full[..window]], table.values[&full[..k]]));
            }
        }
        CylinderGraph {
            window,
            states,
            index,
            edges,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuelleEstimate {
    pub beta: f64,
    pub depth: usize,
    /// (1/n) ln Z_n
    pub raw: Vec<f64>,
    /// ln(Z_{n+1}/Z_n)
    pub ratios: Vec<f64>,
    /// Aitken Δ² transform of `ratios`.
    pub aitken: Vec<f64>,
    pub lambda: f64,
    /// |difference of the last two extrapolated values| in ln λ.
    pub error: f64,
}

fn aitken(x: &[f64]) -> Vec<f64> {
    x.windows(3)
        .map(|w| {
            let d1 = w[1] - w[0];
            let d2 = w[2] - 2.0 * w[1] + w[0];
            if d2.abs() < 1e-300 || d2.abs() < 1e-15 * w[2].abs() {
                w[2]
            } else {
                w[0] - d1 * d1 / d2
            }
        })
        .collect()
}

/// Cylinder sums Z_n = Σ_ε exp{β Σ_s U(ε_s, …, ε_1, γ(ε_1))} for n = 1..=terms.
pub fn eigenvalue_ruelle(table: &PotentialTable, beta: f64, terms: usize) -> RuelleEstimate {
    let g = CylinderGraph::new(table);
    let k = table.depth;
    let mut v = vec![0.0; g.states.len()];
    for e1 in Symbol::ALL {
        let mut full = vec![e1];
        full.extend(gamma_tail(e1, g.window));
        v[g.index[&full[..g.window]]] += (beta * table.values[&full[..k]]).exp();
    }
    let weights: Vec<f64> = g.edges.iter().map(|e| (beta * e.2).exp()).collect();
    let mut log_z = Vec::with_capacity(terms);
    let mut acc = 0.0;
    for step in 0..terms {
        if step > 0 {
            let mut next = vec![KahanSum::new(); v.len()];
            for (e, w) in g.edges.iter().zip(&weights) {
                next[e.1].add(v[e.0] * w);
            }
            v = next.iter().map(KahanSum::value).collect();
        }
        let mut s = KahanSum::new();
        v.iter().for_each(|&x| s.add(x));
        let s = s.value();
        acc += s.ln();
        v.iter_mut().for_each(|x| *x /= s);
        log_z.push(acc);
    }
    let raw: Vec<f64> = log_z.iter().enumerate().map(|(i, l)| l / (i + 1) as f64).collect();
    let ratios: Vec<f64> = log_z.windows(2).map(|w| w[1] - w[0]).collect();
    let ait = aitken(&ratios);
    let (last, prev) = match ait.len() {
        0 => (*ratios.last().unwrap_or(&raw[raw.len() - 1]), f64::NAN),
        1 => (ait[0], ratios[ratios.len() - 1]),
        n => (ait[n - 1], ait[n - 2]),
    };
    RuelleEstimate {
        beta,
        depth: k,
        raw,
        ratios,
        aitken: ait,
        lambda: last.exp(),
        error: (last - prev).abs(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerEstimate {
    pub beta: f64,
    pub depth: usize,
    pub lambda: f64,
    /// Eigenfunction on depth−1 cylinders, normalized to unit sum.
    pub eigenfunction: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

pub const POWER_TOL: f64 = 1e-12;

/// Power iteration of (D f)(w) = Σ_c e^{βU(c,w)} f(c, w₁…) on depth−1 cylinders
/// (depth-1 cylinders when the depth is 1).
pub fn eigenvalue_power(table: &PotentialTable, beta: f64, max_iter: usize) -> Result<PowerEstimate> {
    let g = CylinderGraph::new(table);
    let weights: Vec<f64> = g.edges.iter().map(|e| (beta * e.2).exp()).collect();
    let n = g.states.len();
    let apply = |f: &[f64]| -> Vec<f64> {
        let mut out = vec![KahanSum::new(); n];
        for (e, w) in g.edges.iter().zip(&weights) {
            out[e.0].add(w * f[e.1]);
        }
        out.iter().map(KahanSum::value).collect()
    };
    let sum = |f: &[f64]| {
        let mut s = KahanSum::new();
        f.iter().for_each(|&x| s.add(x));
        s.value()
    };
    let mut f = vec![1.0 / n as f64; n];
    let mut lambda = f64::NAN;
    for it in 1..=max_iter {
        let g_f = apply(&f);
        let next = sum(&g_f);
        let converged = (next - lambda).abs() < POWER_TOL;
        lambda = next;
        f = g_f.iter().map(|x| x / next).collect();
        if converged {
            let r = apply(&f);
            let residual = r.iter().zip(&f).map(|(a, b)| (a - lambda * b).abs()).sum();
            return Ok(PowerEstimate {
                beta,
                depth: table.depth,
                lambda,
                eigenfunction: f,
                iterations: it,
                residual,
            });
        }
    }
    Err(Error::NoConvergence { iterations: max_iter })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub delta: f64,
    pub beta: f64,
    /// δ ln λ_{−β}
    pub lhs: f64,
    /// β ln λ_{−δ}
    pub rhs: f64,
    pub error_bar: f64,
    pub holds: bool,
}

/// Compares λ_{−β}^δ with λ_{−δ}^β. The last table is the reference; the
/// spread over the others is the error bar.
pub fn eigenvalue_inequality_check(tables: &[PotentialTable], delta: f64, beta: f64) -> Result<InequalityReport> {
    if !(1.0 <= delta && delta < beta) {
        return Err(Error::InvalidParameter(format!("need 1 ≤ δ < β, got δ={delta}, β={beta}")));
    }
    if tables.is_empty() {
        return Err(Error::InvalidParameter("no potential tables".into()));
    }
    let sides = tables
        .iter()
        .map(|t| {
            let lb = eigenvalue_power(t, -beta, 1_000_000)?.lambda.ln();
            let ld = eigenvalue_power(t, -delta, 1_000_000)?.lambda.ln();
            Ok((delta * lb, beta * ld))
        })
        .collect::<Result<Vec<_>>>()?;
    let (lhs, rhs) = sides[sides.len() - 1];
    let margin = rhs - lhs;
    let error_bar = sides.iter().map(|(l, r)| ((r - l) - margin).abs()).fold(0.0, f64::max);
    if margin.abs() <= error_bar {
        return Err(Error::InconclusiveWithinErrorBars { margin, error_bar });
    }
    Ok(InequalityReport {
        delta,
        beta,
        lhs,
        rhs,
        error_bar,
        holds: margin > 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub level: usize,
    /// (r, sup |ψ_r|) over all elements of P_level.
    pub sup_psi: Vec<(usize, f64)>,
    /// Least-squares fit sup|ψ_r| ≈ C₂ qʳ.
    pub c2: f64,
    pub q: f64,
}

/// Compares |Δ^{(n)}| with |Δ^{(r)}|·exp Σ_{s=r+1}^{n} U(a_s, …, a_1, γ(a_1)).
/// `tables` holds two consecutive depths; level s uses the one of the same
/// parity, following the period-two renormalization limit.
pub fn reconstruction_errors(h: &PartitionHierarchy, tables: [&PotentialTable; 2], n: usize) -> Result<Reconstruction> {
    if tables[0].depth + 1 != tables[1].depth {
        return Err(Error::InvalidParameter("reconstruction needs two consecutive depths".into()));
    }
    let for_level = |s: usize| if (s + tables[0].depth) % 2 == 0 { tables[0] } else { tables[1] };
    let p = h.level(n);
    let words = partition_words(h, n)?;
    let mut sup = vec![0.0_f64; n];
    for (iv, w) in p.intervals().iter().zip(&words) {
        let mid = wrap(p.point(iv.left) + DD::from(0.5 * iv.length));
        let mut tail = 0.0;
        for r in (1..n).rev() {
            tail += for_level(r + 1).along_history(&w.symbols[..r + 1]);
            let coarse = h.level(r).locate(mid).length;
            let psi = iv.length / (coarse * tail.exp()) - 1.0;
            sup[r] = sup[r].max(psi.abs());
        }
    }
    let sup_psi: Vec<(usize, f64)> = (1..n).map(|r| (r, sup[r])).collect();
    let pts: Vec<(f64, f64)> = sup_psi.iter().filter(|(_, s)| *s > 0.0).map(|&(r, s)| (r as f64, s.ln())).collect();
    let (slope, intercept) = fit_line(&pts);
    Ok(Reconstruction {
        level: n,
        sup_psi,
        c2: intercept.exp(),
        q: slope.exp(),
    })
}

/// Word of `z` at depth `n` (re-exported for reports).
pub fn word_of(h: &PartitionHierarchy, z: f64, n: usize) -> Result<Word> {
    encode(h, z, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{BreakMap, MapSpec};
    use crate::real::Precision;

    const PHI: f64 = 1.618_033_988_749_895;

    fn hierarchy(c: f64, depth: usize) -> PartitionHierarchy {
        let m = BreakMap::from_spec(MapSpec::FractionalLinear { c, which: 1 }).unwrap();
        PartitionHierarchy::build(&m, m.break_point_tf(), depth, Precision::Double).unwrap()
    }

    fn norm(x: f64) -> f64 {
        let f = x - x.floor();
        f.min(1.0 - f)
    }

    #[test]
    fn rotation_potential_is_three_distance_ratios() {
        let rho = (5f64.sqrt() - 1.0) / 2.0;
        let r = BreakMap::rotation(rho);
        let h = PartitionHierarchy::build(&r, DD::from(0.0), 10, Precision::Double).unwrap();
        let fib = [1u64, 1, 2, 3, 5, 8, 13, 21, 34, 55, 89, 144];
        for k in 2..=9 {
            let t = estimate_potential(&h, k).unwrap();
            let len = |i: usize| norm(fib[i] as f64 * rho);
            for (w, u) in t.iter() {
                let expect = match w.symbols[0] {
                    Symbol::A => 0.0,
                    Symbol::Zero => (len(k + 1) / len(k - 1)).ln(),
                    Symbol::One => (len(k) / len(k - 1)).ln(),
                };
                assert!((u - expect).abs() < 1e-9, "k={k} {w}: {u} vs {expect}");
            }
        }
    }

    #[test]
    fn potential_sign_structure() {
        let h = hierarchy(2.0, 12);
        let t = estimate_potential(&h, 10).unwrap();
        assert_eq!(t.len(), 233);
        for (w, u) in t.iter() {
            if w.symbols[0] == Symbol::A {
                assert_eq!(u, 0.0);
            } else {
                assert!(u < 0.0);
            }
        }
    }

    #[test]
    fn potential_is_cauchy_along_each_parity() {
        let h = hierarchy(2.0, 15);
        let tables: Vec<_> = (6..=14).map(|k| estimate_potential(&h, k).unwrap()).collect();
        let rep = cauchy_report(&tables);
        for w in rep.same_parity.windows(3) {
            assert!(w[2].1 < w[0].1, "{rep:?}");
        }
        assert!(rep.q < 0.8, "{rep:?}");
        // Neighbouring depths sit on different branches of the period-two limit.
        assert!(rep.consecutive.iter().all(|d| d.1 > 0.5), "{rep:?}");
    }

    #[test]
    fn constant_potential_closed_form() {
        for depth in [1, 4, 8] {
            let t = PotentialTable::constant(depth, -0.7);
            for beta in [0.0, 1.0, 2.5] {
                let p = eigenvalue_power(&t, beta, 100_000).unwrap();
                let exact = (-0.7 * beta).exp() * PHI;
                assert!((p.lambda - exact).abs() < 1e-12, "{depth} {beta}: {}", p.lambda);
                let r = eigenvalue_ruelle(&t, beta, 60);
                assert!((r.lambda / exact - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn counting_at_beta_zero() {
        let h = hierarchy(2.0, 11);
        let t = estimate_potential(&h, 10).unwrap();
        let p = eigenvalue_power(&t, 0.0, 100_000).unwrap();
        assert!((p.lambda - PHI).abs() < 1e-10);
        assert!(p.eigenfunction.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn pressure_vanishes_at_beta_one() {
        // Children lengths add up to their parent, so e^{U} sums to one over extensions.
        let h = hierarchy(2.0, 11);
        for k in [4, 7, 10] {
            let t = estimate_potential(&h, k).unwrap();
            let p = eigenvalue_power(&t, 1.0, 1_000_000).unwrap();
            assert!((p.lambda - 1.0).abs() < 1e-11, "k={k}: {}", p.lambda);
        }
    }

    #[test]
    fn estimators_agree_and_decrease_in_beta() {
        let h = hierarchy(2.0, 11);
        let t = estimate_potential(&h, 10).unwrap();
        let mut prev = f64::INFINITY;
        for beta in [-2.0, -1.0, 0.0, 1.0, 2.0, 3.0] {
            let p = eigenvalue_power(&t, beta, 1_000_000).unwrap();
            let r = eigenvalue_ruelle(&t, beta, 120);
            assert!((p.lambda / r.lambda - 1.0).abs() < 1e-2, "beta={beta}: {} vs {}", p.lambda, r.lambda);
            assert!(p.lambda < prev);
            prev = p.lambda;
        }
    }

    #[test]
    fn inequality_lemma() {
        let h = hierarchy(2.0, 12);
        let tables: Vec<_> = (8..=10).map(|k| estimate_potential(&h, k).unwrap()).collect();
        let rep = eigenvalue_inequality_check(&tables, 2.0, 3.0).unwrap();
        assert!(rep.holds, "{rep:?}");
        assert!(eigenvalue_inequality_check(&tables, 2.0, 2.0).is_err());
        let c = [PotentialTable::constant(6, -0.5)];
        let rep = eigenvalue_inequality_check(&c, 1.0, 2.0).unwrap();
        assert!(rep.holds);
        assert!((rep.rhs - rep.lhs - PHI.ln()).abs() < 1e-10);
    }

    #[test]
    fn reconstruction_errors_shrink() {
        let h = hierarchy(2.0, 13);
        let t = [estimate_potential(&h, 11).unwrap(), estimate_potential(&h, 12).unwrap()];
        let rec = reconstruction_errors(&h, [&t[0], &t[1]], 12).unwrap();
        assert!(rec.q < 1.0, "{rec:?}");
        assert!(rec.sup_psi.iter().all(|p| p.1 < 1e-8), "{rec:?}");
        // Shallow tables truncate the history; the error saturates instead of vanishing.
        let t = [estimate_potential(&h, 6).unwrap(), estimate_potential(&h, 7).unwrap()];
        let rec = reconstruction_errors(&h, [&t[0], &t[1]], 12).unwrap();
        assert!(rec.sup_psi.iter().all(|p| p.1 < 0.1), "{rec:?}");
        assert!(rec.sup_psi[0].1 > 1e-3);
    }
}
