//! Fragmentation-size sequences and their finite projections.
//!
//! A decreasing sequence of sizes is identified with the point measure
//! `Σ δ_{x_k}`. The process on such sequences is only materialized through
//! its projection onto sizes `≥ d_level`, which is the branching system at
//! that level.

use rand::Rng;

use super::{simulate_branching, Configuration, Event, SimError};
use crate::kernels::ClipPolicy;
use crate::model::{FractalCoord, Lattice, ModelParams};

/// Positive sizes in decreasing order, each at most 1.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SizeSequence {
    sizes: Vec<f64>,
    /// Resolution level the sequence was materialized at, if any.
    pub level: Option<usize>,
}

impl SizeSequence {
    pub fn new(mut sizes: Vec<f64>) -> Result<Self, SimError> {
        if let Some(bad) = sizes.iter().find(|x| !(**x > 0.0 && **x <= 1.0)) {
            return Err(SimError::InvalidInput(format!(
                "size {bad} is not in (0, 1]"
            )));
        }
        sizes.sort_by(|a, b| b.total_cmp(a));
        Ok(Self { sizes, level: None })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn sizes(&self) -> &[f64] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn max(&self) -> Option<f64> {
        self.sizes.first().copied()
    }

    pub fn total_mass(&self) -> f64 {
        self.sizes.iter().sum()
    }

    pub fn multiplicative(&self, phi: impl Fn(f64) -> f64) -> f64 {
        self.sizes.iter().map(|&x| phi(x)).product()
    }

    /// A lattice with one root per distinct size, and the matching configuration.
    pub fn to_configuration(
        &self,
        params: &ModelParams,
    ) -> Result<(Lattice, Configuration), SimError> {
        let mut roots: Vec<f64> = Vec::new();
        let mut particles = Vec::with_capacity(self.sizes.len());
        for &x in &self.sizes {
            let root = match roots.iter().position(|&r| r == x) {
                Some(k) => k,
                None => {
                    roots.push(x);
                    roots.len() - 1
                }
            };
            particles.push(FractalCoord::root(root));
        }
        let lattice = Lattice::resolved(params.clone(), roots)?;
        Ok((lattice, Configuration::new(particles)))
    }
}

/// Keeps the sizes `≥ d_level`.
pub fn project_sizes(
    x: &SizeSequence,
    level: usize,
    params: &ModelParams,
) -> Result<SizeSequence, SimError> {
    if level == 0 || level > params.depth() {
        return Err(SimError::InvalidInput(format!(
            "level {level} must lie in 1..={}",
            params.depth()
        )));
    }
    let floor = params.thresholds()[level - 1];
    Ok(SizeSequence {
        sizes: x.sizes.iter().copied().filter(|&s| s >= floor).collect(),
        level: Some(level),
    })
}

/// Decreasing rearrangement of the union of two sequences.
pub fn merge_sizes(x: &SizeSequence, y: &SizeSequence) -> SizeSequence {
    let mut sizes = Vec::with_capacity(x.len() + y.len());
    let (mut a, mut b) = (x.sizes.iter().peekable(), y.sizes.iter().peekable());
    loop {
        match (a.peek(), b.peek()) {
            (Some(&&p), Some(&&q)) => {
                if p >= q {
                    sizes.push(p);
                    a.next();
                } else {
                    sizes.push(q);
                    b.next();
                }
            }
            (Some(_), None) => sizes.extend(a.by_ref()),
            (None, Some(_)) => sizes.extend(b.by_ref()),
            (None, None) => break,
        }
    }
    let level = match (x.level, y.level) {
        (Some(p), Some(q)) if p == q => Some(p),
        _ => None,
    };
    SizeSequence { sizes, level }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizesOutcome {
    pub lattice: Lattice,
    pub start: Configuration,
    pub terminal: Configuration,
    pub sizes: SizeSequence,
    pub events: Vec<Event>,
}

/// Level-`level` projection of the size process: the branching system run
/// from `project_sizes(x0, level)` with thresholds cut at `d_level`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_sizes<R: Rng + ?Sized>(
    x0: &SizeSequence,
    level: usize,
    t_end: f64,
    params: &ModelParams,
    policy: ClipPolicy,
    population_cap: usize,
    rng: &mut R,
) -> Result<SizesOutcome, SimError> {
    let projected = project_sizes(x0, level, params)?;
    let level_params = params.truncated(level)?;
    let (lattice, start) = projected.to_configuration(&level_params)?;
    let run = simulate_branching(&start, &lattice, t_end, policy, population_cap, rng)?;
    let mut sizes = SizeSequence::new(run.terminal.sizes(&lattice))?;
    sizes.level = Some(level);
    Ok(SizesOutcome {
        lattice,
        start,
        terminal: run.terminal,
        sizes,
        events: run.events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::rng::{tag, RngStream};
    use proptest::prelude::*;

    fn params() -> ModelParams {
        ModelParams::new(0.5, vec![0.25, 0.0625]).unwrap()
    }

    fn seq(v: &[f64]) -> SizeSequence {
        SizeSequence::new(v.to_vec()).unwrap()
    }

    #[test]
    fn projections() {
        let p = params();
        let x = seq(&[0.5, 0.2, 0.05]);
        assert_eq!(project_sizes(&x, 1, &p).unwrap().sizes(), &[0.5]);
        assert_eq!(project_sizes(&x, 2, &p).unwrap().sizes(), &[0.5, 0.2]);
        assert!(project_sizes(&SizeSequence::empty(), 2, &p)
            .unwrap()
            .is_empty());
        assert!(project_sizes(&x, 3, &p).is_err());
    }

    #[test]
    fn projection_is_idempotent() {
        let p = params();
        let x = seq(&[0.9, 0.3, 0.2, 0.1, 0.01]);
        let once = project_sizes(&x, 2, &p).unwrap();
        assert_eq!(project_sizes(&once, 2, &p).unwrap(), once);
        // projecting to level 1 after level 2 equals projecting to level 1
        assert_eq!(
            project_sizes(&once, 1, &p).unwrap().sizes(),
            project_sizes(&x, 1, &p).unwrap().sizes()
        );
    }

    #[test]
    fn merging() {
        let m = merge_sizes(&seq(&[0.5, 0.2]), &seq(&[0.3]));
        assert_eq!(m.sizes(), &[0.5, 0.3, 0.2]);
        let x = seq(&[0.7, 0.1]);
        assert_eq!(merge_sizes(&x, &SizeSequence::empty()).sizes(), x.sizes());
    }

    #[test]
    fn rejects_out_of_range_sizes() {
        assert!(SizeSequence::new(vec![0.5, 0.0]).is_err());
        assert!(SizeSequence::new(vec![1.5]).is_err());
    }

    proptest! {
        #[test]
        fn merge_is_commutative_and_associative(
            a in prop::collection::vec(0.001f64..=1.0, 0..12),
            b in prop::collection::vec(0.001f64..=1.0, 0..12),
            c in prop::collection::vec(0.001f64..=1.0, 0..12),
        ) {
            let (a, b, c) = (seq(&a), seq(&b), seq(&c));
            prop_assert_eq!(merge_sizes(&a, &b), merge_sizes(&b, &a));
            prop_assert_eq!(
                merge_sizes(&merge_sizes(&a, &b), &c),
                merge_sizes(&a, &merge_sizes(&b, &c))
            );
            let m = merge_sizes(&a, &b);
            prop_assert!(m.sizes().windows(2).all(|w| w[0] >= w[1]));
            prop_assert_eq!(m.len(), a.len() + b.len());
        }
    }

    #[test]
    fn level_run_respects_max_size() {
        let p = params();
        let x0 = seq(&[1.0, 0.2, 0.01]);
        for r in 0..100 {
            let mut rng = RngStream::new(6, r, tag::SIZES);
            let out = simulate_sizes(&x0, 2, 2.0, &p, ClipPolicy::Edge, 100_000, &mut rng).unwrap();
            assert!(out.sizes.max().unwrap() <= 1.0);
            assert!(out.sizes.sizes().iter().all(|&s| s >= 0.0625));
            assert_eq!(out.sizes.level, Some(2));
        }
    }
}
