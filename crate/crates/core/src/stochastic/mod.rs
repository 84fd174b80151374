//! Noisy orbits z̄_{k+1} = T(z̄_k) + σξ_{k+1}, their linearization and the
//! Monte-Carlo CLT experiment.
//!
//! Orbits are carried as deviations e_k = z̄_k − z_k from the deterministic
//! orbit, so noise levels far below the spacing of doubles near z_k stay exact.

mod experiment;
mod ks;
mod noise;
mod tubes;

pub use experiment::{
    calibrate_c1, clt_experiment, noise_exponents, tube_event_frequency, CltConfig, CltLevel, CltReport, CltSamples, ExponentInputs,
    NoiseExponents, TubeEvents,
};
pub use ks::{kolmogorov_asymptotic, kolmogorov_cdf, ks_statistic, ks_statistic_normal, ks_test_normal, wilson, Frequency, KsResult};
pub use noise::{NoiseKind, NoiseModel};
pub use tubes::{build_tubes, ExtendedPartition, Tube, TubeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circle::wrap;
use crate::dd::DD;
use crate::error::{Error, Result};
use crate::map::{orbit_dd, BreakMap, CircleMap, Side};
use crate::real::{Precision, Real};

/// Per-replica generator: stream `replica` of the master seed.
pub fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// Deterministic orbit shared by all replicas.
#[derive(Debug, Clone)]
pub struct BaseOrbit {
    pub z: Vec<DD>,
    /// T′(z_k) from the right.
    pub deriv: Vec<f64>,
}

impl BaseOrbit {
    pub fn new(map: &BreakMap, z0: DD, n: usize) -> Result<BaseOrbit> {
        let z = orbit_dd(map, z0, n, Precision::Extended);
        let breaks: Vec<f64> = map.breaks().iter().map(|b| b.position).collect();
        let mut deriv = Vec::with_capacity(n + 1);
        for (step, x) in z.iter().enumerate() {
            let xf = x.to_f64();
            if breaks.iter().any(|&b| crate::circle::signed_offset(xf, b) == 0.0) {
                return Err(Error::OrbitHitsBreak { step });
            }
            deriv.push(map.deriv(xf, Side::Right));
        }
        Ok(BaseOrbit { z, deriv })
    }

    pub fn len(&self) -> usize {
        self.z.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticOrbit {
    pub seed: u64,
    pub replica: u64,
    pub sigma: f64,
    /// ξ_1..ξ_n (index 0 unused and zero).
    pub xi: Vec<f64>,
    /// e_k = z̄_k − z_k as a lift difference.
    pub deviation: Vec<f64>,
    /// z_k
    pub deterministic: Vec<f64>,
}

impl StochasticOrbit {
    pub fn noisy(&self, k: usize) -> f64 {
        wrap(self.deterministic[k] + self.deviation[k])
    }
}

/// One step of the deviation recursion e′ = T(z+e) − T(z) + σξ.
#[inline]
pub fn deviation_step(map: &BreakMap, z: DD, e: f64, sigma: f64, xi: f64) -> f64 {
    map.increment(z.to_f64(), e) + sigma * xi
}

pub fn simulate(map: &BreakMap, base: &BaseOrbit, sigma: f64, noise: &NoiseModel, seed: u64, replica: u64) -> Result<StochasticOrbit> {
    if !(sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!("σ = {sigma} must be nonnegative")));
    }
    let mut rng = replica_rng(seed, replica);
    let n = base.len();
    let mut xi = vec![0.0; n + 1];
    let mut e = vec![0.0; n + 1];
    for k in 0..n {
        xi[k + 1] = noise.sample(&mut rng);
        e[k + 1] = deviation_step(map, base.z[k], e[k], sigma, xi[k + 1]);
    }
    Ok(StochasticOrbit {
        seed,
        replica,
        sigma,
        xi,
        deviation: e,
        deterministic: base.z.iter().map(|z| z.to_f64()).collect(),
    })
}

/// L_n = ξ_n + Σ_{k=1}^{n−1} ξ_k ∏_{j=k}^{n−1} T′(z_j) via L_{k+1} = L_k T′(z_k) + ξ_{k+1}.
pub fn linearized_noise(base: &BaseOrbit, xi: &[f64], n: usize) -> f64 {
    let mut l = xi[1];
    for k in 1..n {
        l = l * base.deriv[k] + xi[k + 1];
    }
    l
}

/// Var(L_n) = Var(ξ)·Λ₂(z_0, n) for iid noise.
pub fn linearized_variance(base: &BaseOrbit, noise: &NoiseModel, n: usize) -> f64 {
    let log_d: Vec<f64> = base.deriv[..n].iter().map(|d| d.abs().ln()).collect();
    let l2 = crate::lyapunov::log_lambda_s_sequence(&log_d, 2.0);
    noise.variance() * l2[n - 1].exp()
}

/// Q_n with z̄_n − z_n = σL_n + σ²Q_n, propagated as Q_{k+1} = T′(z_k)Q_k + R_k(e_k)/σ².
pub fn remainder(map: &BreakMap, base: &BaseOrbit, orbit: &StochasticOrbit, n: usize) -> Result<f64> {
    let sigma = orbit.sigma;
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter("Q_n needs σ > 0".into()));
    }
    if let Some(step) = (1..=n).find(|&k| orbit.deviation[k].abs() > 0.25) {
        return Err(Error::UnwrapAmbiguity {
            step,
            deviation: orbit.deviation[step],
        });
    }
    let mut q = 0.0;
    for k in 0..n {
        q = base.deriv[k] * q + map.remainder(base.z[k].to_f64(), orbit.deviation[k]) / (sigma * sigma);
    }
    Ok(q)
}
