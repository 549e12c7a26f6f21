//! Jump and branching kernels of the avalanche model.
//!
//! * the Lévy kernel `N_x = λ₀(βx δ_{βx} + (1-β)x δ_{(1-β)x})`,
//! * its band-filtered, normalized step law (the kernel of the embedded chain),
//! * the displacement form `K_x` used by the Poisson-driven equation,
//! * the binary offspring law with weights `y(x-y)` over `E_{β,x}`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    band_of, exponent_pairs_above, BandIndex, FractalCoord, Lattice, ModelError, ModelParams,
};

/// Proposals allowed per offspring draw before the sampler gives up.
pub const MAX_PROPOSALS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("offspring sampler exceeded {0} proposals")]
    RejectionLimit(usize),
}

/// A finite measure on sizes (or on displacements), as `(position, mass)` pairs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightedAtoms(pub Vec<(f64, f64)>);

impl WeightedAtoms {
    pub fn total_mass(&self) -> f64 {
        self.0.iter().map(|(_, m)| m).sum()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.0.iter().map(|&(p, m)| f(p) * m).sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn check_unit(x: f64) -> Result<(), ModelError> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(ModelError::OutOfUnit(x))
    }
}

/// Atoms of the Lévy kernel at `x`; the zero measure at `x = 0`.
pub fn levy_atoms(x: f64, params: &ModelParams) -> Result<WeightedAtoms, ModelError> {
    check_unit(x)?;
    if x == 0.0 {
        return Ok(WeightedAtoms::default());
    }
    let (b, l) = (params.beta(), params.lambda0());
    Ok(WeightedAtoms(vec![
        (b * x, l * b * x),
        ((1.0 - b) * x, l * (1.0 - b) * x),
    ]))
}

/// Which of the two fragments a jump keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum JumpBranch {
    /// `x -> βx`
    Small,
    /// `x -> (1-β)x`
    Big,
}

impl JumpBranch {
    pub fn apply(self, x: f64, beta: f64) -> f64 {
        match self {
            JumpBranch::Small => beta * x,
            JumpBranch::Big => (1.0 - beta) * x,
        }
    }

    pub fn descend(self, c: &FractalCoord) -> FractalCoord {
        match self {
            JumpBranch::Small => c.descend(1, 0),
            JumpBranch::Big => c.descend(0, 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepTarget {
    pub value: f64,
    pub probability: f64,
    pub in_band: bool,
}

/// One step of the embedded chain from `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDistribution {
    pub x: f64,
    pub band: BandIndex,
    pub small: StepTarget,
    pub big: StepTarget,
    pub hold: f64,
}

impl StepDistribution {
    pub fn target(&self, branch: JumpBranch) -> &StepTarget {
        match branch {
            JumpBranch::Small => &self.small,
            JumpBranch::Big => &self.big,
        }
    }

    /// Draw the outcome of one step; `None` means hold.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<JumpBranch> {
        let u: f64 = rng.random();
        if u < self.small.probability {
            Some(JumpBranch::Small)
        } else if u < self.small.probability + self.big.probability {
            Some(JumpBranch::Big)
        } else {
            None
        }
    }
}

pub fn step_distribution(x: f64, params: &ModelParams) -> Result<StepDistribution, ModelError> {
    let band = band_of(x, params)?;
    Ok(step_in_band(x, band, params))
}

/// Step law of a size already known to sit in `band`.
///
/// Targets leaving `[d_{k+1}, x]` are filtered and their mass is held.
pub(crate) fn step_in_band(x: f64, band: BandIndex, params: &ModelParams) -> StepDistribution {
    let beta = params.beta();
    let lower = params.band_lower(band);
    let target = |branch: JumpBranch| {
        let value = branch.apply(x, beta);
        let in_band = value >= lower;
        let weight = match branch {
            JumpBranch::Small => beta * x,
            JumpBranch::Big => (1.0 - beta) * x,
        };
        StepTarget {
            value,
            probability: if in_band { weight } else { 0.0 },
            in_band,
        }
    };
    let small = target(JumpBranch::Small);
    let big = target(JumpBranch::Big);
    let hold = 1.0 - small.probability - big.probability;
    StepDistribution {
        x,
        band,
        small,
        big,
        hold,
    }
}

/// Step law of the particle at coordinate `c`. Band edges are frozen.
pub fn step_for_coord(c: &FractalCoord, lattice: &Lattice) -> Result<StepDistribution, ModelError> {
    let x = lattice.try_value(c)?;
    let band = lattice.band(c)?;
    Ok(step_in_band(x, band, lattice.params()))
}

/// Inverts the distribution function of the Lévy kernel at `x` at level `s`.
///
/// `s < λ₀βx` selects the small fragment, `λ₀βx ≤ s < λ₀x` the big one, and
/// larger `s` produces no jump.
pub fn sde_branch(x: f64, s: f64, params: &ModelParams) -> Option<JumpBranch> {
    let l = params.lambda0();
    if s < l * params.beta() * x {
        Some(JumpBranch::Small)
    } else if s < l * x {
        Some(JumpBranch::Big)
    } else {
        None
    }
}

/// New size after a Poisson atom at level `s`, or `None` when the atom is inert.
pub fn sde_displacement(x: f64, s: f64, params: &ModelParams) -> Option<f64> {
    sde_branch(x, s, params).map(|b| b.apply(x, params.beta()))
}

/// Displacement kernel `K_x`: atoms at `(β-1)x` and `-βx`; zero outside `[0, 1]`.
pub fn sde_kernel(x: f64, params: &ModelParams) -> WeightedAtoms {
    if !(0.0..=1.0).contains(&x) || x == 0.0 {
        return WeightedAtoms::default();
    }
    let (b, l) = (params.beta(), params.lambda0());
    WeightedAtoms(vec![
        ((b - 1.0) * x, l * b * x),
        (-b * x, l * (1.0 - b) * x),
    ])
}

/// Drift `b(x) = ∫ y K_x(dy) = 2λ₀β(β-1)x²`.
pub fn drift(x: f64, params: &ModelParams) -> f64 {
    let b = params.beta();
    2.0 * params.lambda0() * b * (b - 1.0) * x * x
}

/// Compensator of the jump integral, integrated in closed form over `s`:
/// `∫₀^∞ ((1-β)x 1[s < βλ₀x] + βx 1[βλ₀x ≤ s < λ₀x]) ds = 2λ₀β(1-β)x²`.
pub fn compensator(x: f64, params: &ModelParams) -> f64 {
    let (b, l) = (params.beta(), params.lambda0());
    let small_window = b * l * x;
    let big_window = l * x - small_window;
    (1.0 - b) * x * small_window + b * x * big_window
}

/// `a(x) = Σ_{i,j} y(x-y)` over `y = β^i(1-β)^j x`, summed in closed form.
pub fn offspring_mass_a(x: f64, params: &ModelParams) -> f64 {
    let b = params.beta();
    let c = 1.0 - b;
    x * x * (1.0 / (b * c) - 1.0 / ((1.0 - b * b) * (1.0 - c * c)))
}

/// Where offspring proposed below the parent's band go.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClipPolicy {
    /// Placed at the lower edge of the parent's band.
    #[default]
    Edge,
    /// Redrawn until they land in band (renormalized over in-band atoms).
    Conditioned,
}

impl fmt::Display for ClipPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClipPolicy::Edge => "edge",
            ClipPolicy::Conditioned => "conditioned",
        })
    }
}

impl FromStr for ClipPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "edge" => Ok(ClipPolicy::Edge),
            "conditioned" => Ok(ClipPolicy::Conditioned),
            other => Err(format!(
                "unknown clip policy {other:?} (expected edge or conditioned)"
            )),
        }
    }
}

/// Law of the common position `y` of the two offspring of a particle at `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct OffspringDistribution {
    pub parent: FractalCoord,
    pub x: f64,
    pub band: BandIndex,
    /// In-band lattice points `y ∈ [d_{k+1}, x]`, largest first.
    pub atoms: Vec<(FractalCoord, f64)>,
    /// Mass placed at the band edge (Edge policy only).
    pub clip_atom: Option<(FractalCoord, f64)>,
    pub a_x: f64,
    pub policy: ClipPolicy,
}

impl OffspringDistribution {
    pub fn total_probability(&self) -> f64 {
        self.atoms.iter().map(|(_, p)| p).sum::<f64>() + self.clip_atom.map_or(0.0, |(_, p)| p)
    }

    /// All atoms with their values, the clip atom last.
    pub fn support(&self) -> impl Iterator<Item = &(FractalCoord, f64)> {
        self.atoms.iter().chain(self.clip_atom.iter())
    }

    pub fn probability_of_value(&self, value: f64, lattice: &Lattice) -> f64 {
        self.support()
            .filter(|(c, _)| (lattice.value(c) - value).abs() <= 1e-12 * value.abs())
            .map(|(_, p)| p)
            .sum()
    }
}

/// Lattice parents with no in-band point strictly below them carry no in-band
/// weight; `(1-β)x` is the largest lattice point below `x`.
fn has_inband_weight(x: f64, lower: f64, beta: f64) -> bool {
    (1.0 - beta) * x >= lower
}

pub fn offspring_distribution(
    parent: &FractalCoord,
    lattice: &Lattice,
    policy: ClipPolicy,
) -> Result<OffspringDistribution, KernelError> {
    let params = lattice.params();
    let x = lattice.try_value(parent)?;
    let band = lattice.band(parent)?;
    let lower = params.band_lower(band);
    let a_x = offspring_mass_a(x, params);

    // an edge particle has only itself (weight 0) in band
    let weighted: Vec<(FractalCoord, f64)> = if parent.is_clipped() {
        vec![(*parent, 0.0)]
    } else {
        exponent_pairs_above(x, lower, params.beta())
            .into_iter()
            .map(|(di, dj, y)| (parent.descend(di, dj), y * (x - y)))
            .collect()
    };
    let inband: f64 = weighted.iter().map(|(_, w)| w).sum();

    let (atoms, clip_atom) = match policy {
        ClipPolicy::Edge => {
            let atoms = weighted.iter().map(|&(c, w)| (c, w / a_x)).collect();
            let clip_mass = ((a_x - inband) / a_x).max(0.0);
            (atoms, Some((parent.clipped_to(band), clip_mass)))
        }
        ClipPolicy::Conditioned if inband > 0.0 => (
            weighted.iter().map(|&(c, w)| (c, w / inband)).collect(),
            None,
        ),
        // nothing in band below the parent: offspring stay where the parent is
        ClipPolicy::Conditioned => (
            weighted
                .iter()
                .map(|&(c, _)| (c, if c == *parent { 1.0 } else { 0.0 }))
                .collect(),
            None,
        ),
    };

    let mut atoms: Vec<(FractalCoord, f64)> = atoms;
    atoms.sort_by(|a, b| {
        lattice
            .value(&b.0)
            .total_cmp(&lattice.value(&a.0))
            .then(a.0.cmp(&b.0))
    });
    Ok(OffspringDistribution {
        parent: *parent,
        x,
        band,
        atoms,
        clip_atom,
        a_x,
        policy,
    })
}

/// Offspring law of a bare size `x`, using `x` itself as the lattice root.
pub fn offspring_distribution_at(
    x: f64,
    params: &ModelParams,
    policy: ClipPolicy,
) -> Result<(Lattice, OffspringDistribution), KernelError> {
    let lattice = Lattice::resolved(params.clone(), vec![x])?;
    let dist = offspring_distribution(&FractalCoord::root(0), &lattice, policy)?;
    Ok((lattice, dist))
}

/// Exact draw from [`offspring_distribution`] by rejection from a geometric
/// proposal.
///
/// `i ~ Geom(1-β)` and `j ~ Geom(β)` give proposal weights `∝ β^i (1-β)^j`;
/// accepting with probability `(x - v)/x` leaves a law `∝ v(x - v)`.
pub fn sample_offspring<R: Rng + ?Sized>(
    parent: &FractalCoord,
    lattice: &Lattice,
    policy: ClipPolicy,
    rng: &mut R,
) -> Result<FractalCoord, KernelError> {
    let params = lattice.params();
    let beta = params.beta();
    let x = lattice.try_value(parent)?;
    let band = lattice.band(parent)?;
    let lower = params.band_lower(band);

    if parent.is_clipped() {
        return Ok(*parent);
    }
    if policy == ClipPolicy::Conditioned && !has_inband_weight(x, lower, beta) {
        return Ok(*parent);
    }

    let small = Geometric::new(1.0 - beta).expect("beta in (0, 1/2)");
    let big = Geometric::new(beta).expect("beta in (0, 1/2)");
    for _ in 0..MAX_PROPOSALS {
        let i = small.sample(rng);
        let j = big.sample(rng);
        let (Ok(i), Ok(j)) = (u32::try_from(i), u32::try_from(j)) else {
            continue;
        };
        let v = crate::model::lattice_value(x, beta, i, j);
        let u: f64 = rng.random();
        if u * x >= x - v {
            continue;
        }
        let proposal = parent.descend(i, j);
        if v >= lower {
            return Ok(proposal);
        }
        match policy {
            ClipPolicy::Edge => return Ok(proposal.clipped_to(band)),
            ClipPolicy::Conditioned => continue,
        }
    }
    Err(KernelError::RejectionLimit(MAX_PROPOSALS))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> ModelParams {
        ModelParams::new(0.5, vec![0.25, 0.0625]).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn levy_atoms_at_one() {
        let p = params();
        let atoms = levy_atoms(1.0, &p).unwrap();
        assert!(close(atoms.0[0].0, 1.0 / 3.0, 1e-15));
        assert!(close(atoms.0[0].1, 5.0 / 108.0, 1e-15));
        assert!(close(atoms.0[1].0, 2.0 / 3.0, 1e-15));
        assert!(close(atoms.0[1].1, 5.0 / 54.0, 1e-15));
        assert!(levy_atoms(0.0, &p).unwrap().is_empty());
        assert!(close(
            levy_atoms(0.5, &p).unwrap().total_mass(),
            5.0 / 72.0,
            1e-15
        ));
        assert!(levy_atoms(1.2, &p).is_err());
    }

    #[test]
    fn step_laws() {
        let p = params();
        let s = step_distribution(1.0, &p).unwrap();
        assert!(close(s.small.probability, 1.0 / 3.0, 1e-15));
        assert!(close(s.big.probability, 2.0 / 3.0, 1e-15));
        assert!(close(s.hold, 0.0, 1e-15));

        let s = step_distribution(2.0 / 3.0, &p).unwrap();
        assert!(!s.small.in_band);
        assert_eq!(s.small.probability, 0.0);
        assert!(close(s.big.value, 4.0 / 9.0, 1e-15));
        assert!(close(s.big.probability, 4.0 / 9.0, 1e-15));
        assert!(close(s.hold, 5.0 / 9.0, 1e-15));

        let s = step_distribution(1.0 / 3.0, &p).unwrap();
        assert_eq!(s.hold, 1.0);
        assert!(step_distribution(0.03, &p).is_err());
    }

    #[test]
    fn sde_inversion() {
        let p = params();
        assert!(close(
            sde_displacement(1.0, 0.01, &p).unwrap(),
            1.0 / 3.0,
            1e-15
        ));
        assert!(close(
            sde_displacement(1.0, 0.1, &p).unwrap(),
            2.0 / 3.0,
            1e-15
        ));
        assert_eq!(sde_displacement(1.0, 0.2, &p), None);
    }

    #[test]
    fn kernel_k_is_shifted_levy_kernel() {
        let p = params();
        for x in [0.1, 0.37, 1.0] {
            let k = sde_kernel(x, &p);
            let n = levy_atoms(x, &p).unwrap();
            assert!(close(k.total_mass(), p.lambda0() * x, 1e-16));
            for ((d, mk), (y, mn)) in k.0.iter().zip(&n.0) {
                assert_eq!(mk, mn);
                assert!(close(x + d, *y, 1e-16));
            }
            assert!(close(k.integrate(|d| d), drift(x, &p), 1e-16));
        }
        assert!(sde_kernel(1.5, &p).is_empty());
    }

    #[test]
    fn a_of_x() {
        let p = params();
        assert!(close(offspring_mass_a(1.0, &p), 2.475, 1e-14));
        assert_eq!(offspring_mass_a(0.0, &p), 0.0);
        assert!(close(offspring_mass_a(0.5, &p), 2.475 / 4.0, 1e-14));
    }

    #[test]
    fn a_of_x_matches_truncated_sum() {
        let p = params();
        let b = p.beta();
        for x in [1.0, 0.3, 0.07] {
            let mut brute = 0.0;
            for i in 0..200 {
                for j in 0..(200 - i) {
                    let y = x * b.powi(i) * (1.0 - b).powi(j);
                    brute += y * (x - y);
                }
            }
            let closed = offspring_mass_a(x, &p);
            assert!((brute - closed).abs() <= 1e-12 * closed);
        }
    }

    #[test]
    fn offspring_edge_at_one() {
        let p = params();
        let (lattice, d) = offspring_distribution_at(1.0, &p, ClipPolicy::Edge).unwrap();
        assert!(close(d.a_x, 2.475, 1e-14));
        assert!(close(
            d.probability_of_value(2.0 / 3.0, &lattice),
            80.0 / 891.0,
            1e-15
        ));
        let (clip, pc) = d.clip_atom.unwrap();
        assert_eq!(clip.clipped_band, Some(0));
        assert!(close(pc, 1.0 - (656.0 / 729.0) / 2.475, 1e-14));
        assert!(close(d.total_probability(), 1.0, 1e-12));
        assert_eq!(d.atoms.len(), 5);
    }

    #[test]
    fn offspring_conditioned_renormalizes() {
        let p = params();
        let (lattice, d) = offspring_distribution_at(1.0, &p, ClipPolicy::Conditioned).unwrap();
        assert!(d.clip_atom.is_none());
        assert!(close(d.total_probability(), 1.0, 1e-12));
        let p23 = d.probability_of_value(2.0 / 3.0, &lattice);
        assert!(close(p23, (2.0 / 9.0) / (656.0 / 729.0), 1e-14));
    }

    #[test]
    fn offspring_degenerate_parent() {
        // 1/3 has no lattice point of its own in [1/4, 1/3)
        let p = params();
        let (_, edge) = offspring_distribution_at(1.0 / 3.0, &p, ClipPolicy::Edge).unwrap();
        assert!(close(edge.clip_atom.unwrap().1, 1.0, 1e-15));
        let (_, cond) = offspring_distribution_at(1.0 / 3.0, &p, ClipPolicy::Conditioned).unwrap();
        assert_eq!(cond.atoms, vec![(FractalCoord::root(0), 1.0)]);
    }

    #[test]
    fn offspring_sampler_is_deterministic() {
        let p = params();
        let lattice = Lattice::new(p, vec![1.0]).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20)
                .map(|_| {
                    sample_offspring(&FractalCoord::root(0), &lattice, ClipPolicy::Edge, &mut rng)
                        .unwrap()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(7), draw(7));
    }

    #[test]
    fn edge_parents_stay_put() {
        let p = params();
        let lattice = Lattice::new(p, vec![1.0]).unwrap();
        let edge = FractalCoord::lattice(0, 2, 1).clipped_to(BandIndex(0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for policy in [ClipPolicy::Edge, ClipPolicy::Conditioned] {
            assert_eq!(
                sample_offspring(&edge, &lattice, policy, &mut rng),
                Ok(edge)
            );
            let d = offspring_distribution(&edge, &lattice, policy).unwrap();
            assert!(close(d.total_probability(), 1.0, 1e-15));
        }
        let s = step_for_coord(&edge, &lattice).unwrap();
        assert_eq!(s.hold, 1.0);
    }

    #[test]
    fn policy_parsing() {
        assert_eq!("edge".parse(), Ok(ClipPolicy::Edge));
        assert_eq!("conditioned".parse(), Ok(ClipPolicy::Conditioned));
        assert!("other".parse::<ClipPolicy>().is_err());
        assert_eq!(ClipPolicy::Conditioned.to_string(), "conditioned");
    }
}
