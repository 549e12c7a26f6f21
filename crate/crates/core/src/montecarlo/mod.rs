//! Exact stochastic simulation of the avalanche model.
//!
//! Three simulators share one event vocabulary:
//!
//! * [`simulate_chain`]: the uniformized jump chain, Poisson clock at rate λ₀;
//! * [`simulate_sde`]: the Poisson-measure equation driven atom by atom;
//! * [`simulate_branching`]: the binary branching particle system on finite
//!   configurations, with per-particle competing clocks.
//!
//! Replicas own their random stream (see [`RngStream`]) and [`run_replicas`]
//! returns results in replica order, so outputs do not depend on the worker count.

mod branching;
mod chain;
pub mod rng;
mod sde;
mod sizes;

use rayon::prelude::*;
use thiserror::Error;

use crate::kernels::KernelError;
use crate::model::{FractalCoord, Lattice, ModelError};

pub use branching::{simulate_branching, BranchingOutcome, DEFAULT_POPULATION_CAP};
pub use chain::simulate_chain;
pub use rng::RngStream;
pub use sde::{simulate_sde, SdeMode};
pub use sizes::{merge_sizes, project_sizes, simulate_sizes, SizeSequence, SizesOutcome};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("population exceeded the cap of {cap} particles at t = {time}")]
    PopulationCap { cap: usize, time: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventKind {
    /// Chain arrival that moved the particle.
    Jump,
    /// Chain arrival whose draw kept the particle in place.
    Hold,
    /// Atom of the driving Poisson measure (moving or not).
    SdeAtom,
    /// Particle replaced by two offspring at `coord_after`.
    Branch,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Jump => "jump",
            EventKind::Hold => "hold",
            EventKind::SdeAtom => "sde_atom",
            EventKind::Branch => "branch",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub particle: u64,
    pub size_before: f64,
    pub size_after: f64,
    pub coord_before: FractalCoord,
    pub coord_after: FractalCoord,
}

impl Event {
    pub fn is_monotone(&self) -> bool {
        self.size_after <= self.size_before
    }
}

/// Path of a single particle: start plus ordered events.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub start: FractalCoord,
    pub initial_size: f64,
    pub events: Vec<Event>,
}

impl Trajectory {
    pub fn terminal(&self) -> FractalCoord {
        self.events.last().map_or(self.start, |e| e.coord_after)
    }

    pub fn terminal_size(&self) -> f64 {
        self.events
            .last()
            .map_or(self.initial_size, |e| e.size_after)
    }

    /// Number of events that changed the size.
    pub fn moves(&self) -> usize {
        self.events
            .iter()
            .filter(|e| e.coord_after != e.coord_before)
            .count()
    }
}

/// A finite multiset of particles; the empty configuration is valid.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Configuration {
    pub particles: Vec<FractalCoord>,
}

impl Configuration {
    pub fn new(particles: Vec<FractalCoord>) -> Self {
        Self { particles }
    }

    /// One particle at each lattice root.
    pub fn roots(lattice: &Lattice) -> Self {
        Self::new((0..lattice.roots().len()).map(FractalCoord::root).collect())
    }

    pub fn count(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn sizes(&self, lattice: &Lattice) -> Vec<f64> {
        self.particles.iter().map(|c| lattice.value(c)).collect()
    }

    /// `Π φ(size)` over particles, `1` when empty.
    pub fn multiplicative(&self, lattice: &Lattice, phi: impl Fn(f64) -> f64) -> f64 {
        self.particles
            .iter()
            .map(|c| phi(lattice.value(c)))
            .product()
    }

    /// Orders particles by decreasing size, ties by coordinate.
    pub fn canonicalize(&mut self, lattice: &Lattice) {
        self.particles
            .sort_by(|a, b| lattice.value(b).total_cmp(&lattice.value(a)).then(a.cmp(b)));
    }
}

/// Runs `f(replica)` for every replica on `workers` threads (0 = all cores)
/// and returns results in replica order; the first failing replica's error wins.
pub fn run_replicas<T, F>(replicas: usize, workers: usize, f: F) -> Result<Vec<T>, SimError>
where
    T: Send,
    F: Fn(u64) -> Result<T, SimError> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| SimError::InvalidInput(format!("thread pool: {e}")))?;
    let results: Vec<Result<T, SimError>> =
        pool.install(|| (0..replicas as u64).into_par_iter().map(&f).collect());
    results.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replica_order_is_independent_of_workers() {
        let f = |i: u64| Ok(i * i);
        let one = run_replicas(100, 1, f).unwrap();
        let many = run_replicas(100, 8, f).unwrap();
        assert_eq!(one, many);
        assert_eq!(one[7], 49);
    }

    #[test]
    fn first_error_wins() {
        let r: Result<Vec<u64>, _> = run_replicas(50, 4, |i| {
            if i % 10 == 3 {
                Err(SimError::InvalidInput(format!("replica {i}")))
            } else {
                Ok(i)
            }
        });
        assert_eq!(r, Err(SimError::InvalidInput("replica 3".into())));
    }
}
