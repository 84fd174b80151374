use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point {point} is not a break point (derivative ratio {ratio})")]
    NotABreakPoint { point: f64, ratio: f64 },

    #[error("quartic for beta has no sign change on (0,1) for c = {c}")]
    RootNotBracketed { c: f64 },

    #[error("continued fraction unreliable after {reached} partial quotients")]
    DepthUnreliable { reached: usize, partial_quotients: Vec<u64> },

    #[error("rotation number error {error:e} exceeds tolerance {tol:e}")]
    ToleranceNotReached { estimate: f64, error: f64, tol: f64 },

    #[error("could not bracket target rotation number {target}")]
    BracketFailure { target: f64 },

    #[error("target rotation number {target} is rational")]
    RationalTarget { target: f64 },

    #[error("precision exhausted at level {level}: {detail}")]
    PrecisionExhausted { level: usize, detail: String },

    #[error("interval is not q_{n}-small")]
    NotQnSmall { n: usize },

    #[error("orbit hits a break point at step {step}")]
    OrbitHitsBreak { step: usize },

    #[error("pair is not in the renormalization domain: {0}")]
    DomainViolation(String),

    #[error("orbit of base point meets the break orbit: z_{k} = x_{j}")]
    OrbitCollision { k: usize, j: usize },

    #[error("point lies on the forward orbit of the break point (step {step})")]
    OrbitOfBreak { step: usize },

    #[error("power iteration did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("inequality inconclusive: margin {margin:e} within error bar {error_bar:e}")]
    InconclusiveWithinErrorBars { margin: f64, error_bar: f64 },

    #[error("noisy orbit left the unwrap window at step {step} (deviation {deviation:e})")]
    UnwrapAmbiguity { step: usize, deviation: f64 },

    #[error("tube construction failed: {0}")]
    ConstructionFailure(String),
}

pub type Result<T> = std::result::Result<T, Error>;
