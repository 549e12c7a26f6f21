use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::Rng;
use rand_distr::{Distribution, Exp};

use super::{Configuration, Event, EventKind, SimError};
use crate::kernels::{sample_offspring, step_for_coord, ClipPolicy};
use crate::model::{FractalCoord, Lattice};

pub const DEFAULT_POPULATION_CAP: usize = 1_000_000;

/// Rate of the branching clock of every particle.
const BRANCHING_RATE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Clock {
    Motion,
    Branch,
}

#[derive(Debug, Clone, Copy)]
struct Scheduled {
    time: f64,
    particle: u64,
    clock: Clock,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.particle.cmp(&other.particle))
            .then(self.clock.cmp(&other.clock))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchingOutcome {
    pub terminal: Configuration,
    pub events: Vec<Event>,
    /// Largest number of particles alive at once.
    pub peak_population: usize,
}

struct Population<'a, R: Rng + ?Sized> {
    lattice: &'a Lattice,
    motion: Exp<f64>,
    branch: Exp<f64>,
    particles: Vec<Option<FractalCoord>>,
    alive: usize,
    queue: BinaryHeap<Reverse<Scheduled>>,
    rng: &'a mut R,
}

impl<R: Rng + ?Sized> Population<'_, R> {
    fn spawn(&mut self, coord: FractalCoord, now: f64) {
        let id = self.particles.len() as u64;
        self.particles.push(Some(coord));
        self.alive += 1;
        let motion = now + self.motion.sample(self.rng);
        let branch = now + self.branch.sample(self.rng);
        self.queue.push(Reverse(Scheduled {
            time: motion,
            particle: id,
            clock: Clock::Motion,
        }));
        self.queue.push(Reverse(Scheduled {
            time: branch,
            particle: id,
            clock: Clock::Branch,
        }));
    }
}

/// Branching particle system started from `start`.
///
/// Every particle moves as the banded jump process (clock rate λ₀) and carries
/// an independent rate-1 branching clock; at a branch it is replaced by two
/// particles sharing one offspring position. Nothing dies.
pub fn simulate_branching<R: Rng + ?Sized>(
    start: &Configuration,
    lattice: &Lattice,
    t_end: f64,
    policy: ClipPolicy,
    population_cap: usize,
    rng: &mut R,
) -> Result<BranchingOutcome, SimError> {
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(SimError::InvalidInput(format!(
            "t_end {t_end} must be finite and >= 0"
        )));
    }
    for c in &start.particles {
        lattice.band(c)?;
    }
    if start.count() > population_cap {
        return Err(SimError::PopulationCap {
            cap: population_cap,
            time: 0.0,
        });
    }

    let mut pop = Population {
        lattice,
        motion: Exp::new(lattice.params().lambda0()).expect("lambda0 > 0"),
        branch: Exp::new(BRANCHING_RATE).expect("positive rate"),
        particles: Vec::with_capacity(start.count() * 4),
        alive: 0,
        queue: BinaryHeap::new(),
        rng,
    };
    for c in &start.particles {
        pop.spawn(*c, 0.0);
    }

    let mut events = Vec::new();
    let mut peak = pop.alive;
    while let Some(Reverse(next)) = pop.queue.pop() {
        if next.time > t_end {
            break;
        }
        let Some(coord) = pop.particles[next.particle as usize] else {
            continue; // clock of a particle that already branched
        };
        let before = pop.lattice.value(&coord);
        match next.clock {
            Clock::Motion => {
                let step = step_for_coord(&coord, pop.lattice)?;
                let (kind, after) = match step.sample(pop.rng) {
                    Some(b) => (EventKind::Jump, b.descend(&coord)),
                    None => (EventKind::Hold, coord),
                };
                pop.particles[next.particle as usize] = Some(after);
                events.push(Event {
                    time: next.time,
                    kind,
                    particle: next.particle,
                    size_before: before,
                    size_after: pop.lattice.value(&after),
                    coord_before: coord,
                    coord_after: after,
                });
                let again = next.time + pop.motion.sample(pop.rng);
                pop.queue.push(Reverse(Scheduled {
                    time: again,
                    ..next
                }));
            }
            Clock::Branch => {
                let child = sample_offspring(&coord, pop.lattice, policy, pop.rng)?;
                pop.particles[next.particle as usize] = None;
                pop.alive -= 1;
                events.push(Event {
                    time: next.time,
                    kind: EventKind::Branch,
                    particle: next.particle,
                    size_before: before,
                    size_after: pop.lattice.value(&child),
                    coord_before: coord,
                    coord_after: child,
                });
                pop.spawn(child, next.time);
                pop.spawn(child, next.time);
                peak = peak.max(pop.alive);
                if pop.alive > population_cap {
                    return Err(SimError::PopulationCap {
                        cap: population_cap,
                        time: next.time,
                    });
                }
            }
        }
    }

    let mut terminal = Configuration::new(pop.particles.iter().flatten().copied().collect());
    terminal.canonicalize(lattice);
    Ok(BranchingOutcome {
        terminal,
        events,
        peak_population: peak,
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
    fn zero_time_is_identity() {
        let l = lattice();
        let start = Configuration::roots(&l);
        let mut rng = RngStream::new(1, 0, tag::BRANCHING);
        let out = simulate_branching(&start, &l, 0.0, ClipPolicy::Edge, 100, &mut rng).unwrap();
        assert_eq!(out.terminal, start);
        assert!(out.events.is_empty());
    }

    #[test]
    fn empty_configuration_stays_empty() {
        let l = lattice();
        let mut rng = RngStream::new(1, 0, tag::BRANCHING);
        let out = simulate_branching(
            &Configuration::default(),
            &l,
            5.0,
            ClipPolicy::Edge,
            100,
            &mut rng,
        )
        .unwrap();
        assert!(out.terminal.is_empty());
    }

    #[test]
    fn cap_is_an_error() {
        let l = lattice();
        let mut rng = RngStream::new(2, 0, tag::BRANCHING);
        let err = simulate_branching(
            &Configuration::roots(&l),
            &l,
            30.0,
            ClipPolicy::Edge,
            1000,
            &mut rng,
        )
        .unwrap_err();
        assert!(matches!(err, SimError::PopulationCap { cap: 1000, .. }));
    }

    #[test]
    fn particle_count_matches_branch_events() {
        let l = lattice();
        for r in 0..100 {
            let mut rng = RngStream::new(3, r, tag::BRANCHING);
            let out = simulate_branching(
                &Configuration::roots(&l),
                &l,
                1.5,
                ClipPolicy::Edge,
                10_000,
                &mut rng,
            )
            .unwrap();
            let branches = out
                .events
                .iter()
                .filter(|e| e.kind == EventKind::Branch)
                .count();
            assert_eq!(out.terminal.count(), 1 + branches);
            assert!(out.events.iter().all(Event::is_monotone));
            assert!(out.events.windows(2).all(|w| w[0].time <= w[1].time));
        }
    }

    #[test]
    fn replay_is_deterministic() {
        let l = lattice();
        let run = || {
            let mut rng = RngStream::new(11, 5, tag::BRANCHING);
            simulate_branching(
                &Configuration::roots(&l),
                &l,
                2.0,
                ClipPolicy::Conditioned,
                10_000,
                &mut rng,
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }
}
