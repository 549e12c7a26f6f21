//! Avalanche fragmentation–branching model: exact transition functions on
//! finite fractal supports, Monte Carlo simulators, and the statistics used
//! to check one against the other.
//!
//! Module map:
//!
//! * [`model`]: rupture ratio, thresholds, bands, lattice coordinates;
//! * [`kernels`]: jump kernel, step law, displacement form, offspring law;
//! * [`semigroup`]: reachable supports, `P_t`, generator, resolvent, cumulants;
//! * [`montecarlo`]: chain, Poisson-measure equation, branching system, size sequences;
//! * [`stats`]: empirical laws, chi-square and total-variation checks.

// `!(x > 0.0)` is how NaN gets rejected alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod kernels;
pub mod model;
pub mod montecarlo;
pub mod semigroup;
pub mod stats;

pub use kernels::ClipPolicy;
pub use model::{BandIndex, FractalCoord, Lattice, ModelError, ModelParams, Site};
