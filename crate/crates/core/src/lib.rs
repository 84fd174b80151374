//! Circle homeomorphisms with break points: renormalization of
//! fractional-linear pairs, rotation numbers, dynamical partitions, symbolic
//! thermodynamics, Lyapunov functionals and small-noise statistics.

pub mod circle;
pub mod dd;
pub mod error;
pub mod lyapunov;
pub mod map;
pub mod mobius;
pub mod pair;
pub mod partition;
pub mod real;
pub mod rotation;
pub mod stochastic;
pub mod symbolic;
pub mod thermo;

pub use error::{Error, Result};
