//! Samplers against their exact laws, and invariants under random parameters.

use frag_avalanche::kernels::{
    compensator, drift, offspring_distribution, offspring_mass_a, sample_offspring,
    step_distribution, step_for_coord, ClipPolicy, JumpBranch,
};
use frag_avalanche::model::{FractalCoord, Lattice, ModelParams};
use frag_avalanche::montecarlo::rng::{tag, RngStream};
use frag_avalanche::semigroup::{reachable_support, transition_at, StateSpace};
use frag_avalanche::stats::{chisq_gof, EmpiricalPmf};
use proptest::prelude::*;

fn default_params() -> ModelParams {
    ModelParams::new(0.5, vec![0.25, 0.0625]).unwrap()
}

fn pmf(counts: Vec<u64>) -> EmpiricalPmf {
    EmpiricalPmf {
        support: vec![FractalCoord::root(0); counts.len()],
        total: counts.iter().sum(),
        counts,
    }
}

fn offspring_sampler_matches_law(policy: ClipPolicy, root: f64) {
    let lattice = Lattice::resolved(default_params(), vec![root]).unwrap();
    let parent = FractalCoord::root(0);
    let dist = offspring_distribution(&parent, &lattice, policy).unwrap();
    let mut support: Vec<(FractalCoord, f64)> =
        dist.support().copied().filter(|(_, p)| *p > 0.0).collect();
    support.sort_by_key(|(c, _)| c.site());

    let mut counts = vec![0u64; support.len()];
    let mut rng = RngStream::new(99, 0, tag::SAMPLER);
    for _ in 0..100_000 {
        let c = sample_offspring(&parent, &lattice, policy, &mut rng).unwrap();
        let k = support
            .iter()
            .position(|(s, _)| s.site() == c.site())
            .unwrap_or_else(|| panic!("{c:?} outside the offspring support"));
        counts[k] += 1;
    }
    let expected: Vec<f64> = support.iter().map(|(_, p)| *p).collect();
    let report = chisq_gof(&pmf(counts), &expected).unwrap();
    assert!(report.passes(0.001), "{policy}: {report:?}");
}

#[test]
fn offspring_sampler_edge() {
    offspring_sampler_matches_law(ClipPolicy::Edge, 1.0);
}

#[test]
fn offspring_sampler_conditioned() {
    offspring_sampler_matches_law(ClipPolicy::Conditioned, 1.0);
    offspring_sampler_matches_law(ClipPolicy::Conditioned, 0.9);
}

#[test]
fn step_sampler_matches_law() {
    let lattice = Lattice::resolved(default_params(), vec![0.8]).unwrap();
    let step = step_for_coord(&FractalCoord::root(0), &lattice).unwrap();
    let expected = [step.small.probability, step.big.probability, step.hold];
    let mut counts = [0u64; 3];
    let mut rng = RngStream::new(5, 0, tag::CHAIN);
    for _ in 0..100_000 {
        let k = match step.sample(&mut rng) {
            Some(JumpBranch::Small) => 0,
            Some(JumpBranch::Big) => 1,
            None => 2,
        };
        counts[k] += 1;
    }
    let nonzero: Vec<usize> = (0..3).filter(|&k| expected[k] > 0.0).collect();
    assert_eq!(
        (0..3)
            .filter(|k| !nonzero.contains(k))
            .map(|k| counts[k])
            .sum::<u64>(),
        0
    );
    let report = chisq_gof(
        &pmf(nonzero.iter().map(|&k| counts[k]).collect()),
        &nonzero.iter().map(|&k| expected[k]).collect::<Vec<_>>(),
    )
    .unwrap();
    assert!(report.passes(0.001), "{report:?}");
}

/// Parameters with `β ∈ (0.1, 0.45)` and two geometric thresholds below `β`.
fn params_strategy() -> impl Strategy<Value = ModelParams> {
    (0.12f64..0.8, 0.3f64..0.9, 0.2f64..0.6).prop_filter_map("valid parameters", |(r, f1, f2)| {
        let beta = r / (1.0 + r);
        let d1 = beta * f1;
        ModelParams::new(r, vec![d1, d1 * f2]).ok()
    })
}

fn space(params: &ModelParams, root: f64) -> Option<StateSpace> {
    let lattice = Lattice::resolved(params.clone(), vec![root]).ok()?;
    reachable_support(&lattice).ok()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn step_law_is_a_probability(params in params_strategy(), u in 0.0f64..1.0) {
        let x = params.floor() + u * (1.0 - params.floor());
        let s = step_distribution(x, &params).unwrap();
        let parts = [s.small.probability, s.big.probability, s.hold];
        prop_assert!(parts.iter().all(|p| (0.0..=1.0).contains(p)));
        prop_assert!((parts.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        for t in [s.small, s.big] {
            prop_assert!(t.value < x);
            prop_assert!(t.in_band || t.probability == 0.0);
        }
    }

    #[test]
    fn offspring_law_is_a_probability_below_the_parent(
        params in params_strategy(),
        u in 0.0f64..1.0,
        conditioned in any::<bool>(),
    ) {
        let x = params.floor() + u * (1.0 - params.floor());
        let policy = if conditioned { ClipPolicy::Conditioned } else { ClipPolicy::Edge };
        let lattice = Lattice::resolved(params.clone(), vec![x]).unwrap();
        let dist = offspring_distribution(&FractalCoord::root(0), &lattice, policy).unwrap();
        prop_assert!((dist.total_probability() - 1.0).abs() < 1e-12);
        let lower = params.band_lower(lattice.band(&FractalCoord::root(0)).unwrap());
        for (c, p) in dist.support() {
            prop_assert!(*p >= 0.0);
            let v = lattice.value(c);
            prop_assert!(v <= x && v >= lower);
        }
    }

    #[test]
    fn offspring_mass_scales_quadratically(params in params_strategy(), x in 0.01f64..1.0) {
        let a1 = offspring_mass_a(1.0, &params);
        prop_assert!((offspring_mass_a(x, &params) - x * x * a1).abs() <= 1e-14 * a1);
    }

    #[test]
    fn compensator_cancels_drift(params in params_strategy(), x in 0.0f64..=1.0) {
        let c = compensator(x, &params);
        prop_assert!((c + drift(x, &params)).abs() <= 1e-15 * c.abs().max(1e-300));
    }

    #[test]
    fn transition_rows_are_laws_on_absorbing_sets(params in params_strategy(), t in 0.0f64..4.0) {
        let Some(space) = space(&params, 1.0) else { return Ok(()) };
        let p = transition_at(t, &space, 1e-12).unwrap();
        let values = space.values();
        for k in 0..space.len() {
            let row = p.row(k);
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-11);
            prop_assert!(row.iter().all(|&v| v >= -1e-15));
            let above: f64 = (0..space.len()).filter(|&l| values[l] > values[k]).map(|l| row[l]).sum();
            prop_assert!(above <= 1e-12);
        }
    }

    #[test]
    fn chapman_kolmogorov(params in params_strategy(), s in 0.0f64..2.0, t in 0.0f64..2.0) {
        let Some(space) = space(&params, 1.0) else { return Ok(()) };
        let ps = transition_at(s, &space, 1e-12).unwrap();
        let pt = transition_at(t, &space, 1e-12).unwrap();
        let pst = transition_at(s + t, &space, 1e-12).unwrap();
        prop_assert!(pst.max_abs_diff(&(&ps.matrix * &pt.matrix)) <= 1e-10);
    }
}
