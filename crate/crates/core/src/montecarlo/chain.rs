use rand::Rng;
use rand_distr::{Distribution, Exp};

use super::{Event, EventKind, SimError, Trajectory};
use crate::kernels::step_for_coord;
use crate::model::{FractalCoord, Lattice};

/// Uniformized chain: Poisson arrivals at rate λ₀, one step draw per arrival.
/// Exact in time; holds are logged.
pub fn simulate_chain<R: Rng + ?Sized>(
    start: &FractalCoord,
    lattice: &Lattice,
    t_end: f64,
    rng: &mut R,
) -> Result<Trajectory, SimError> {
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(SimError::InvalidInput(format!(
            "t_end {t_end} must be finite and >= 0"
        )));
    }
    lattice.band(start)?;
    let params = lattice.params();
    let clock = Exp::new(params.lambda0()).expect("lambda0 > 0");

    let initial_size = lattice.try_value(start)?;
    let mut coord = *start;
    let mut size = initial_size;
    let mut t = 0.0;
    let mut events = Vec::new();
    loop {
        t += clock.sample(rng);
        if t > t_end {
            break;
        }
        let step = step_for_coord(&coord, lattice)?;
        let (kind, next) = match step.sample(rng) {
            Some(branch) => (EventKind::Jump, branch.descend(&coord)),
            None => (EventKind::Hold, coord),
        };
        let next_size = lattice.value(&next);
        events.push(Event {
            time: t,
            kind,
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;
    use crate::montecarlo::rng::{tag, RngStream};

    fn lattice() -> Lattice {
        Lattice::resolved(
            ModelParams::new(0.5, vec![0.25, 0.0625]).unwrap(),
            vec![1.0],
        )
        .unwrap()
    }

    #[test]
    fn no_arrival_before_t_end_keeps_start() {
        let l = lattice();
        let mut rng = RngStream::new(1, 0, tag::CHAIN);
        let traj = simulate_chain(&FractalCoord::root(0), &l, 0.0, &mut rng).unwrap();
        assert!(traj.events.is_empty());
        assert_eq!(traj.terminal(), FractalCoord::root(0));
        assert_eq!(traj.terminal_size(), 1.0);
    }

    #[test]
    fn paths_are_monotone_and_ordered() {
        let l = lattice();
        for replica in 0..200 {
            let mut rng = RngStream::new(9, replica, tag::CHAIN);
            let traj = simulate_chain(&FractalCoord::root(0), &l, 20.0, &mut rng).unwrap();
            assert!(traj.events.iter().all(Event::is_monotone));
            assert!(traj.events.windows(2).all(|w| w[0].time < w[1].time));
            assert!(traj.terminal_size() >= 0.25);
        }
    }

    #[test]
    fn arrival_count_has_poisson_mean() {
        let l = lattice();
        let t = 10.0;
        let n = 4000;
        let total: usize = (0..n)
            .map(|r| {
                let mut rng = RngStream::new(5, r, tag::CHAIN);
                simulate_chain(&FractalCoord::root(0), &l, t, &mut rng)
                    .unwrap()
                    .events
                    .len()
            })
            .sum();
        let mean = total as f64 / n as f64;
        let expected = l.params().lambda0() * t;
        // Poisson variance equals the mean
        assert!((mean - expected).abs() < 4.0 * (expected / n as f64).sqrt());
    }

    #[test]
    fn rejects_unresolved_start() {
        let l = Lattice::new(ModelParams::new(0.5, vec![0.25]).unwrap(), vec![0.1]).unwrap();
        let mut rng = RngStream::new(1, 0, tag::CHAIN);
        assert!(simulate_chain(&FractalCoord::root(0), &l, 1.0, &mut rng).is_err());
    }
}
