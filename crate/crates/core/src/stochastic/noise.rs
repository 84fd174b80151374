//! Bounded iid noise laws.

use rand::RngExt;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    /// Uniform on [−a, a].
    Uniform { a: f64 },
    /// ±1 with equal probability.
    Rademacher,
    /// N(0, sd²) conditioned on |ξ| ≤ cut.
    TruncatedGaussian { sd: f64, cut: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    #[serde(flatten)]
    pub kind: NoiseKind,
    /// Moment order p > 2 used in the moment conditions.
    pub p: f64,
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, p: f64) -> Result<NoiseModel> {
        let m = NoiseModel { kind, p };
        m.validate()?;
        Ok(m)
    }

    pub fn uniform(a: f64) -> NoiseModel {
        NoiseModel {
            kind: NoiseKind::Uniform { a },
            p: 3.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 2.0) {
            return Err(Error::InvalidParameter(format!("moment order p = {} must exceed 2", self.p)));
        }
        let ok = match self.kind {
            NoiseKind::Uniform { a } => a > 0.0 && a.is_finite(),
            NoiseKind::Rademacher => true,
            NoiseKind::TruncatedGaussian { sd, cut } => sd > 0.0 && cut > 0.0 && cut.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("bad noise parameters {:?}", self.kind)))
        }
    }

    /// Every law here has compact support, so the tube event may be taken as the whole space.
    pub fn compact_support(&self) -> bool {
        true
    }

    pub fn support_bound(&self) -> f64 {
        match self.kind {
            NoiseKind::Uniform { a } => a,
            NoiseKind::Rademacher => 1.0,
            NoiseKind::TruncatedGaussian { cut, .. } => cut,
        }
    }

    pub fn sample<G: rand::Rng + ?Sized>(&self, rng: &mut G) -> f64 {
        let u: f64 = rng.random();
        match self.kind {
            NoiseKind::Uniform { a } => a * (2.0 * u - 1.0),
            NoiseKind::Rademacher => {
                if u < 0.5 {
                    -1.0
                } else {
                    1.0
                }
            }
            NoiseKind::TruncatedGaussian { sd, cut } => {
                let n = Normal::new(0.0, sd).expect("sd > 0");
                let lo = n.cdf(-cut);
                let hi = n.cdf(cut);
                n.inverse_cdf(lo + u * (hi - lo)).clamp(-cut, cut)
            }
        }
    }

    pub fn variance(&self) -> f64 {
        match self.kind {
            NoiseKind::Uniform { a } => a * a / 3.0,
            NoiseKind::Rademacher => 1.0,
            NoiseKind::TruncatedGaussian { sd, cut } => {
                let std = Normal::standard();
                let c = cut / sd;
                sd * sd * (1.0 - 2.0 * c * std.pdf(c) / (2.0 * std.cdf(c) - 1.0))
            }
        }
    }

    /// E|ξ|^q.
    pub fn abs_moment(&self, q: f64) -> f64 {
        match self.kind {
            NoiseKind::Uniform { a } => a.powf(q) / (q + 1.0),
            NoiseKind::Rademacher => 1.0,
            NoiseKind::TruncatedGaussian { sd, cut } => {
                let n = Normal::new(0.0, sd).expect("sd > 0");
                let mass = 2.0 * n.cdf(cut) - 1.0;
                2.0 * simpson(|x| x.powf(q) * n.pdf(x), 0.0, cut, 2000) / mass
            }
        }
    }

    /// E max_{i≤n} |ξ_i|^q for n iid draws.
    pub fn expected_max_moment(&self, n: u64, q: f64) -> f64 {
        let nf = n as f64;
        match self.kind {
            NoiseKind::Uniform { a } => a.powf(q) * nf / (nf + q),
            NoiseKind::Rademacher => 1.0,
            NoiseKind::TruncatedGaussian { sd, cut } => {
                let g = Normal::new(0.0, sd).expect("sd > 0");
                let mass = 2.0 * g.cdf(cut) - 1.0;
                // E M^q = ∫_0^c q x^{q−1} (1 − F(x)^n) dx with F the law of |ξ|.
                simpson(
                    |x| {
                        let f = ((2.0 * g.cdf(x) - 1.0) / mass).min(1.0);
                        q * x.powf(q - 1.0) * (1.0 - f.powf(nf))
                    },
                    0.0,
                    cut,
                    4000,
                )
            }
        }
    }
}

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}
