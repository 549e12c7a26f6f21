//! Turning equalities in law into pass/fail checks.
//!
//! Pearson statistics pool every bin whose expected count is below
//! [`POOLING_THRESHOLD`] into one bin (merged further with the smallest
//! remaining bin while that pool is still too small). A bin with zero expected
//! mass that received observations is a support violation and yields `p = 0`.

use serde::Serialize;
use statrs::function::gamma::gamma_ur;
use thiserror::Error;

use crate::model::FractalCoord;
use crate::semigroup::StateSpace;

pub const POOLING_THRESHOLD: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("coordinate {0:?} is outside the support")]
    UnknownCoordinate(FractalCoord),
    #[error("expected law needs all mass in one pooled bin; the test is vacuous")]
    DegenerateExpected,
    #[error("supports differ in size ({0} vs {1})")]
    SupportMismatch(usize, usize),
    #[error("probability vector sums to {0}, not 1")]
    NotNormalized(f64),
    #[error("{got} samples, at least {need} required")]
    TooFewSamples { got: usize, need: usize },
    #[error("confidence {0} not supported (use 0.95, 0.99 or 0.997)")]
    UnsupportedConfidence(f64),
}

/// Counts of samples per state of a support.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalPmf {
    pub support: Vec<FractalCoord>,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl EmpiricalPmf {
    pub fn probabilities(&self) -> Vec<f64> {
        let n = self.total.max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }
}

/// Tallies samples by coordinate identity against the states of `space`.
pub fn empirical_pmf(
    samples: &[FractalCoord],
    space: &StateSpace,
) -> Result<EmpiricalPmf, StatsError> {
    let mut counts = vec![0u64; space.len()];
    for c in samples {
        let k = space.index_of(c).ok_or(StatsError::UnknownCoordinate(*c))?;
        counts[k] += 1;
    }
    Ok(EmpiricalPmf {
        support: space.states().iter().map(|s| s.coord).collect(),
        counts,
        total: samples.len() as u64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GofReport {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
    /// Original bins folded into the pooled bin.
    pub pooled_bins: usize,
}

impl GofReport {
    pub fn passes(&self, alpha: f64) -> bool {
        self.p_value > alpha
    }
}

/// Upper tail of the chi-square law with `dof` degrees of freedom.
pub fn chisq_upper_tail(statistic: f64, dof: usize) -> f64 {
    if statistic.is_infinite() {
        return 0.0;
    }
    if statistic <= 0.0 {
        return 1.0;
    }
    gamma_ur(dof as f64 / 2.0, statistic / 2.0)
}

/// Groups bin indices so every group's weight reaches the pooling threshold.
fn pool_bins(weights: &[f64]) -> Result<(Vec<Vec<usize>>, usize), StatsError> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut pool = Vec::new();
    for (k, &w) in weights.iter().enumerate() {
        if w >= POOLING_THRESHOLD {
            groups.push(vec![k]);
        } else {
            pool.push(k);
        }
    }
    let pooled = pool.len();
    let weight = |g: &[usize]| g.iter().map(|&k| weights[k]).sum::<f64>();
    if !pool.is_empty() {
        while weight(&pool) < POOLING_THRESHOLD && !groups.is_empty() {
            let smallest = (0..groups.len())
                .min_by(|&a, &b| weight(&groups[a]).total_cmp(&weight(&groups[b])))
                .unwrap();
            pool.extend(groups.remove(smallest));
        }
        groups.push(pool);
    }
    if groups.len() < 2 {
        return Err(StatsError::DegenerateExpected);
    }
    Ok((groups, pooled))
}

fn check_normalized(p: &[f64]) -> Result<(), StatsError> {
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-9 || p.iter().any(|v| *v < 0.0) {
        return Err(StatsError::NotNormalized(s));
    }
    Ok(())
}

/// One-sample Pearson test of observed counts against a probability vector.
pub fn chisq_gof(observed: &EmpiricalPmf, expected: &[f64]) -> Result<GofReport, StatsError> {
    if observed.counts.len() != expected.len() {
        return Err(StatsError::SupportMismatch(
            observed.counts.len(),
            expected.len(),
        ));
    }
    check_normalized(expected)?;
    if observed.total < 100 {
        return Err(StatsError::TooFewSamples {
            got: observed.total as usize,
            need: 100,
        });
    }
    let n = observed.total as f64;
    let expected_counts: Vec<f64> = expected.iter().map(|p| p * n).collect();
    let (groups, pooled) = pool_bins(&expected_counts)?;
    let dof = groups.len() - 1;

    let violation = expected
        .iter()
        .zip(&observed.counts)
        .any(|(&p, &c)| p == 0.0 && c > 0);
    if violation {
        return Ok(GofReport {
            statistic: f64::INFINITY,
            degrees_of_freedom: dof,
            p_value: 0.0,
            pooled_bins: pooled,
        });
    }

    let statistic: f64 = groups
        .iter()
        .map(|g| {
            let o: f64 = g.iter().map(|&k| observed.counts[k] as f64).sum();
            let e: f64 = g.iter().map(|&k| expected_counts[k]).sum();
            (o - e).powi(2) / e
        })
        .sum();
    Ok(GofReport {
        statistic,
        degrees_of_freedom: dof,
        p_value: chisq_upper_tail(statistic, dof),
        pooled_bins: pooled,
    })
}

/// Two-sample Pearson homogeneity test on a shared support.
///
/// Expected counts come from the pooled proportions; `dof = bins - 1`.
pub fn chisq_two_sample(a: &[u64], b: &[u64]) -> Result<GofReport, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::SupportMismatch(a.len(), b.len()));
    }
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    if na.min(nb) < 100.0 {
        return Err(StatsError::TooFewSamples {
            got: na.min(nb) as usize,
            need: 100,
        });
    }
    let total = na + nb;
    let shares: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (x + y) as f64 / total)
        .collect();
    let weights: Vec<f64> = shares.iter().map(|p| p * na.min(nb)).collect();
    let (groups, pooled) = pool_bins(&weights)?;
    let statistic: f64 = groups
        .iter()
        .map(|g| {
            let p: f64 = g.iter().map(|&k| shares[k]).sum();
            let oa: f64 = g.iter().map(|&k| a[k] as f64).sum();
            let ob: f64 = g.iter().map(|&k| b[k] as f64).sum();
            let (ea, eb) = (na * p, nb * p);
            (oa - ea).powi(2) / ea + (ob - eb).powi(2) / eb
        })
        .sum();
    let dof = groups.len() - 1;
    Ok(GofReport {
        statistic,
        degrees_of_freedom: dof,
        p_value: chisq_upper_tail(statistic, dof),
        pooled_bins: pooled,
    })
}

pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64, StatsError> {
    if p.len() != q.len() {
        return Err(StatsError::SupportMismatch(p.len(), q.len()));
    }
    check_normalized(p)?;
    check_normalized(q)?;
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanCi {
    pub mean: f64,
    pub half_width: f64,
    pub std_error: f64,
    pub n: usize,
}

/// Sample mean and its standard error (`s/√n`, with the `n-1` variance).
pub fn mean_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Normal-approximation interval `mean ± z·s/√n`, `z ∈ {1.96, 2.576, 3.0}`.
pub fn mean_ci(samples: &[f64], confidence: f64) -> Result<MeanCi, StatsError> {
    let z = if confidence == 0.95 {
        1.96
    } else if confidence == 0.99 {
        2.576
    } else if confidence == 0.997 {
        3.0
    } else {
        return Err(StatsError::UnsupportedConfidence(confidence));
    };
    if samples.len() < 30 {
        return Err(StatsError::TooFewSamples {
            got: samples.len(),
            need: 30,
        });
    }
    let (mean, se) = mean_se(samples);
    Ok(MeanCi {
        mean,
        half_width: z * se,
        std_error: se,
        n: samples.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::rng::{tag, RngStream};
    use rand::Rng;

    fn pmf(counts: Vec<u64>) -> EmpiricalPmf {
        let total = counts.iter().sum();
        EmpiricalPmf {
            support: (0..counts.len()).map(FractalCoord::root).collect(),
            counts,
            total,
        }
    }

    #[test]
    fn fair_die() {
        let r = chisq_gof(&pmf(vec![10, 12, 8, 11, 9, 10]), &[1.0 / 6.0; 6]);
        // n = 60 is below the 100-sample floor
        assert!(matches!(r, Err(StatsError::TooFewSamples { .. })));

        // same proportions scaled: the statistic scales with n
        let report = chisq_gof(&pmf(vec![100, 120, 80, 110, 90, 100]), &[1.0 / 6.0; 6]).unwrap();
        assert!((report.statistic - 10.0).abs() < 1e-12);
        assert_eq!(report.degrees_of_freedom, 5);
    }

    #[test]
    fn fair_die_tail() {
        // (10,12,8,11,9,10) against uniform: statistic 1.0 on 5 dof
        assert!((chisq_upper_tail(1.0, 5) - 0.962565773247).abs() < 1e-9);
    }

    #[test]
    fn exact_proportions() {
        let report = chisq_gof(&pmf(vec![250, 250, 500]), &[0.25, 0.25, 0.5]).unwrap();
        assert_eq!(report.statistic, 0.0);
        assert_eq!(report.p_value, 1.0);
    }

    #[test]
    fn point_mass_far_from_expected() {
        let report = chisq_gof(&pmf(vec![1000, 0, 0]), &[0.1, 0.45, 0.45]).unwrap();
        assert!(report.p_value < 1e-6);
    }

    #[test]
    fn mass_on_impossible_bin_fails() {
        let report = chisq_gof(&pmf(vec![999, 1, 0]), &[0.5, 0.0, 0.5]).unwrap();
        assert_eq!(report.p_value, 0.0);
    }

    #[test]
    fn pooling_merges_small_bins() {
        let report = chisq_gof(&pmf(vec![497, 498, 3, 2]), &[0.497, 0.498, 0.003, 0.002]).unwrap();
        assert_eq!(report.pooled_bins, 2);
        assert_eq!(report.degrees_of_freedom, 2);
        assert!(matches!(
            chisq_gof(&pmf(vec![1000, 0]), &[0.999, 0.001]),
            Err(StatsError::DegenerateExpected)
        ));
    }

    #[test]
    fn two_sample_identical() {
        let r = chisq_two_sample(&[300, 200, 500], &[300, 200, 500]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        let r = chisq_two_sample(&[900, 100, 0], &[100, 900, 0]).unwrap();
        assert!(r.p_value < 1e-10);
    }

    #[test]
    fn calibration_at_one_per_mille() {
        // samples drawn from the expected law must reject rarely at alpha = 0.001
        let expected = [0.5, 0.2, 0.15, 0.1, 0.04, 0.01];
        let cdf: Vec<f64> = expected
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        let mut rejections = 0;
        for rep in 0..1000 {
            let mut rng = RngStream::new(2024, rep, tag::SAMPLER);
            let mut counts = vec![0u64; expected.len()];
            for _ in 0..2000 {
                let u: f64 = rng.random();
                let k = cdf
                    .iter()
                    .position(|&c| u < c)
                    .unwrap_or(expected.len() - 1);
                counts[k] += 1;
            }
            if !chisq_gof(&pmf(counts), &expected).unwrap().passes(0.001) {
                rejections += 1;
            }
        }
        assert!(rejections <= 5, "{rejections} rejections in 1000");
    }

    #[test]
    fn tv() {
        assert_eq!(tv_distance(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert!((tv_distance(&[0.6, 0.4], &[0.5, 0.5]).unwrap() - 0.1).abs() < 1e-15);
        assert!(matches!(
            tv_distance(&[1.0], &[0.5, 0.5]),
            Err(StatsError::SupportMismatch(1, 2))
        ));
    }

    #[test]
    fn tv_is_a_metric_on_random_triples() {
        let mut rng = RngStream::new(77, 0, tag::SAMPLER);
        let draw = |rng: &mut RngStream| {
            let raw: Vec<f64> = (0..5).map(|_| rng.random::<f64>()).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / s).collect::<Vec<_>>()
        };
        for _ in 0..200 {
            let (p, q, r) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
            let pq = tv_distance(&p, &q).unwrap();
            assert!((pq - tv_distance(&q, &p).unwrap()).abs() <= 1e-15);
            assert!(pq <= tv_distance(&p, &r).unwrap() + tv_distance(&r, &q).unwrap() + 1e-15);
            assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
        }
    }

    #[test]
    fn confidence_intervals() {
        let ci = mean_ci(&[2.5; 40], 0.95).unwrap();
        assert_eq!(ci.mean, 2.5);
        assert_eq!(ci.half_width, 0.0);

        // ±1 alternating: sample variance 100/99
        let xs: Vec<f64> = (0..100)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let ci = mean_ci(&xs, 0.997).unwrap();
        assert!((ci.half_width - 3.0 * (100.0f64 / 99.0 / 100.0).sqrt()).abs() < 1e-12);
        assert!((ci.half_width - 0.3).abs() < 0.002);

        let mut rev = xs.clone();
        rev.reverse();
        assert_eq!(mean_ci(&rev, 0.997).unwrap().half_width, ci.half_width);

        assert!(matches!(
            mean_ci(&[1.0; 10], 0.95),
            Err(StatsError::TooFewSamples { .. })
        ));
        assert!(matches!(
            mean_ci(&xs, 0.9),
            Err(StatsError::UnsupportedConfidence(_))
        ));
    }
}
