//! One-sample Kolmogorov–Smirnov statistic and binomial confidence intervals.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// sup |F_N − Φ| for the sample (order does not matter).
pub fn ks_statistic_normal(sample: &[f64]) -> f64 {
    let std = Normal::standard();
    ks_statistic(sample, |x| std.cdf(x))
}

pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// P(D_n < d) by the Marsaglia–Tsang–Wang matrix method, with their
/// closed-form right tail for large n d².
pub fn kolmogorov_cdf(n: usize, d: f64) -> f64 {
    if d <= 0.0 {
        return 0.0;
    }
    if d >= 1.0 {
        return 1.0;
    }
    let nf = n as f64;
    let s = d * d * nf;
    if s > 7.24 || (s > 3.76 && n > 99) {
        return 1.0 - 2.0 * (-(2.000071 + 0.331 / nf.sqrt() + 1.409 / nf) * s).exp();
    }
    if n > 100_000 {
        return kolmogorov_asymptotic(nf.sqrt() * d);
    }
    let k = (nf * d) as usize + 1;
    let m = 2 * k - 1;
    let h = k as f64 - nf * d;
    let mut hm = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            if i + 1 >= j {
                hm[i * m + j] = 1.0;
            }
        }
    }
    for i in 0..m {
        hm[i * m] -= h.powi(i as i32 + 1);
        hm[(m - 1) * m + i] -= h.powi((m - i) as i32);
    }
    if 2.0 * h - 1.0 > 0.0 {
        hm[(m - 1) * m] += (2.0 * h - 1.0).powi(m as i32);
    }
    for i in 0..m {
        for j in 0..m {
            if i + 1 > j {
                for g in 1..=(i + 1 - j) {
                    hm[i * m + j] /= g as f64;
                }
            }
        }
    }
    let (q, mut eq) = matrix_power(&hm, 0, m, n);
    let mut s = q[(k - 1) * m + k - 1];
    for i in 1..=n {
        s = s * i as f64 / nf;
        if s < 1e-140 {
            s *= 1e140;
            eq -= 140;
        }
    }
    (s * 10f64.powi(eq)).clamp(0.0, 1.0)
}

fn multiply(a: &[f64], b: &[f64], m: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * m];
    for i in 0..m {
        for l in 0..m {
            let x = a[i * m + l];
            if x == 0.0 {
                continue;
            }
            for j in 0..m {
                c[i * m + j] += x * b[l * m + j];
            }
        }
    }
    c
}

/// A^n with a decimal exponent carried separately.
fn matrix_power(a: &[f64], ea: i32, m: usize, n: usize) -> (Vec<f64>, i32) {
    if n == 1 {
        return (a.to_vec(), ea);
    }
    let (v, ev) = matrix_power(a, ea, m, n / 2);
    let b = multiply(&v, &v, m);
    let eb = 2 * ev;
    let (mut v, mut ev) = if n % 2 == 0 { (b, eb) } else { (multiply(a, &b, m), ea + eb) };
    if v[(m / 2) * m + m / 2] > 1e140 {
        v.iter_mut().for_each(|x| *x *= 1e-140);
        ev += 140;
    }
    (v, ev)
}

/// Limiting Kolmogorov distribution P(K ≤ t).
pub fn kolmogorov_asymptotic(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let s: f64 = (1..=100).map(|k| (-1f64).powi(k - 1) * (-2.0 * (k as f64 * t).powi(2)).exp()).sum();
    (1.0 - 2.0 * s).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

pub fn ks_test_normal(sample: &[f64]) -> KsResult {
    let d = ks_statistic_normal(sample);
    KsResult {
        statistic: d,
        p_value: 1.0 - kolmogorov_cdf(sample.len(), d),
        n: sample.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frequency {
    pub successes: usize,
    pub trials: usize,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Wilson score interval at the given normal quantile.
pub fn wilson(successes: usize, trials: usize, z: f64) -> Frequency {
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    Frequency {
        successes,
        trials,
        value: p,
        lower: (centre - half).max(0.0),
        upper: (centre + half).min(1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn small_sample_cdf_values() {
        // n = 1: P(D < d) = 2d − 1 on [1/2, 1].
        assert!((kolmogorov_cdf(1, 0.75) - 0.5).abs() < 1e-12);
        // n = 2, d = 0.5: 2·(1/2)² computed by hand from the order statistics.
        assert!((kolmogorov_cdf(2, 0.5) - 0.5).abs() < 1e-12);
        // Reference value 0.9999999... region and the usual 5% critical value.
        let c = 1.3581 / 100f64.sqrt();
        assert!((kolmogorov_cdf(100, c) - 0.95).abs() < 5e-3);
    }

    #[test]
    fn exact_tends_to_asymptotic() {
        let n = 5000;
        for t in [0.6, 0.9, 1.2, 1.6] {
            let exact = kolmogorov_cdf(n, t / (n as f64).sqrt());
            assert!((exact - kolmogorov_asymptotic(t)).abs() < 0.01, "t={t}");
        }
    }

    #[test]
    fn statistic_on_known_sample() {
        let d = ks_statistic(&[0.1, 0.4, 0.8], |x| x);
        assert!((d - (1.0f64 / 3.0 - 0.1).max(0.8 - 2.0 / 3.0).max(2.0 / 3.0 - 0.4)).abs() < 1e-15);
    }

    #[test]
    fn calibrated_on_normal_samples() {
        let std = Normal::standard();
        let n = 10_000;
        let mut exceed = 0;
        for seed in 0..40 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let xs: Vec<f64> = (0..n).map(|_| std.inverse_cdf(rng.random::<f64>())).collect();
            let r = ks_test_normal(&xs);
            if r.statistic >= 1.63 / (n as f64).sqrt() {
                exceed += 1;
            }
            assert!(r.p_value > 0.0 && r.p_value <= 1.0);
        }
        assert!(exceed <= 2);
    }

    #[test]
    fn wilson_interval() {
        let f = wilson(990, 1000, 1.96);
        assert!(f.lower < 0.99 && f.upper > 0.99);
        let all = wilson(100, 100, 1.96);
        assert!(all.upper > 1.0 - 1e-12);
        assert!((all.lower - 0.963).abs() < 1e-3);
    }
}
