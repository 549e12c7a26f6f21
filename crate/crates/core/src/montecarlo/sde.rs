//! The fragmentation equation driven by a Poisson random measure.
//!
//! Sizes never exceed 1 and never increase, so atoms with level `s ≥ λ₀`
//! cannot act: restricting the measure to `[0, t] × [0, 1] × [0, λ₀]` is
//! exact. On that window the atom count is `Poisson(λ₀ t)`, atom times are
//! uniform, and each atom moves `x` by inverting the Lévy kernel at `s`.
//! The drift `2λ₀β(β-1)x²` and the compensator of the small-jump integral
//! cancel identically, so no time stepping is involved.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use super::{Event, EventKind, SimError, Trajectory};
use crate::kernels::{sde_branch, step_for_coord};
use crate::model::{FractalCoord, Lattice};

/// Which jump kernel drives the equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SdeMode {
    /// Jumps leaving the particle's band are suppressed; the law matches the
    /// banded transition function on `[d_depth, 1]`.
    #[default]
    Banded,
    /// The unrestricted kernel on `[0, 1]`.
    Whole,
}

pub fn simulate_sde<R: Rng + ?Sized>(
    start: &FractalCoord,
    lattice: &Lattice,
    t_end: f64,
    mode: SdeMode,
    rng: &mut R,
) -> Result<Trajectory, SimError> {
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(SimError::InvalidInput(format!(
            "t_end {t_end} must be finite and >= 0"
        )));
    }
    let params = lattice.params();
    let initial_size = lattice.try_value(start)?;
    if mode == SdeMode::Banded {
        lattice.band(start)?;
    }
    let lambda0 = params.lambda0();

    let mean = lambda0 * t_end;
    let count = if mean > 0.0 {
        Poisson::new(mean).expect("positive mean").sample(rng) as usize
    } else {
        0
    };
    let mut atoms: Vec<(f64, f64, f64)> = (0..count)
        .map(|_| {
            let time = rng.random::<f64>() * t_end;
            // the u-coordinate of the driving measure; its indicator is always 1 here
            let u = rng.random::<f64>();
            let s = rng.random::<f64>() * lambda0;
            (time, u, s)
        })
        .collect();
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut coord = *start;
    let mut size = initial_size;
    let mut events = Vec::with_capacity(atoms.len());
    for (time, u, s) in atoms {
        debug_assert!((0.0..=1.0).contains(&u));
        let branch = sde_branch(size, s, params).filter(|b| match mode {
            SdeMode::Whole => true,
            SdeMode::Banded => {
                !coord.is_clipped()
                    && step_for_coord(&coord, lattice)
                        .map(|step| step.target(*b).in_band)
                        .unwrap_or(false)
            }
        });
        let next = branch.map_or(coord, |b| b.descend(&coord));
        let next_size = lattice.value(&next);
        events.push(Event {
            time,
            kind: EventKind::SdeAtom,
            particle: 0,
            size_before: size,
            size_after: next_size,
            coord_before: coord,
            coord_after: next,
        });
        coord = next;
        size = next_size;
    }
    Ok(Trajectory {
        start: *start,
        initial_size,
        events,
    })
}
