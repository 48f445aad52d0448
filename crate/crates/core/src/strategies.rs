//! Greedy coverage-based prioritization strategies.
//!
//! Three classic orderings over a coverage matrix:
//!
//! * random: a seeded shuffle, the usual baseline;
//! * total: tests sorted by their summed coverage, descending;
//! * additional: repeatedly pick the test adding the most not-yet-covered
//!   weight, tracking covered fractions as a per-unit running maximum.
//!
//! Each strategy optionally weights units by fault-proneness scores, which
//! turns the sums into weighted sums and leaves everything else unchanged.
//! Score comparisons are exact float comparisons; ties are resolved by the
//! configured rule, so a given input and seed always produce the same
//! order on every platform.

use rand_chacha::rand_core::RngCore;
use rayon::prelude::*;

use crate::coverage::{CoverageMatrix, FaultPronenessVector};
use crate::error::{Error, Result};
use crate::order::PrioritizedOrder;
use crate::rng::{rng_from_seed, shuffled_indices, uniform_index};

/// How equal scores are ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    /// Lower test index first. The default: fully deterministic without a
    /// seed, and what the closed-form examples in the tests assume.
    #[default]
    ByIndex,
    /// Uniformly random among the tied tests; requires a seed.
    Random,
}

/// Shared strategy knobs.
#[derive(Debug, Clone, Copy)]
pub struct StrategyConfig {
    pub tie_break: TieBreak,
    /// When the additional strategy runs out of residual coverage, treat
    /// everything as uncovered again and keep going (instead of appending
    /// the leftovers by tie rule).
    pub reset_on_full_coverage: bool,
    pub seed: Option<u64>,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            tie_break: TieBreak::ByIndex,
            reset_on_full_coverage: true,
            seed: None,
        }
    }
}

impl StrategyConfig {
    fn validate(&self) -> Result<()> {
        if self.tie_break == TieBreak::Random && self.seed.is_none() {
            return Err(Error::Domain(
                "random tie-break requires a seed in the strategy config".into(),
            ));
        }
        Ok(())
    }

    fn recorded_seed(&self) -> Option<u64> {
        match self.tie_break {
            TieBreak::Random => self.seed,
            TieBreak::ByIndex => None,
        }
    }
}

/// Seeded random baseline order.
pub fn prioritize_random(n_tests: usize, seed: u64) -> Result<PrioritizedOrder> {
    if n_tests == 0 {
        return Err(Error::Domain("cannot prioritize an empty suite".into()));
    }
    let mut rng = rng_from_seed(seed);
    PrioritizedOrder::new(shuffled_indices(n_tests, &mut rng), "random", Some(seed))
}

fn check_weights(matrix: &CoverageMatrix, weights: Option<&FaultPronenessVector>) -> Result<()> {
    if let Some(w) = weights {
        if w.len() != matrix.n_units() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for a matrix with {} units",
                w.len(),
                matrix.n_units()
            )));
        }
    }
    Ok(())
}

fn coverage_keys(
    matrix: &CoverageMatrix,
    weights: Option<&FaultPronenessVector>,
) -> Result<Vec<f64>> {
    (0..matrix.n_tests())
        .map(|i| match weights {
            Some(w) => matrix.fp_coverage(i, w),
            None => matrix.total_coverage(i),
        })
        .collect()
}

/// Sorts tests by (weighted) total coverage, descending.
pub fn prioritize_total(
    matrix: &CoverageMatrix,
    weights: Option<&FaultPronenessVector>,
    config: &StrategyConfig,
) -> Result<PrioritizedOrder> {
    config.validate()?;
    check_weights(matrix, weights)?;
    let keys = coverage_keys(matrix, weights)?;
    let mut order: Vec<usize> = (0..matrix.n_tests()).collect();
    match config.tie_break {
        TieBreak::ByIndex => {
            order.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]).then(a.cmp(&b)));
        }
        TieBreak::Random => {
            let mut rng = rng_from_seed(config.seed.unwrap());
            let draws: Vec<u64> = (0..matrix.n_tests()).map(|_| rng.next_u64()).collect();
            order.sort_by(|&a, &b| {
                keys[b]
                    .total_cmp(&keys[a])
                    .then(draws[a].cmp(&draws[b]))
                    .then(a.cmp(&b))
            });
        }
    }
    let name = if weights.is_some() { "total_fp" } else { "total" };
    PrioritizedOrder::new(order, name, config.recorded_seed())
}

fn residual(row: &[f64], covered: &[f64], weights: Option<&FaultPronenessVector>) -> f64 {
    match weights {
        Some(w) => row
            .iter()
            .zip(covered)
            .zip(w.scores())
            .map(|((c, done), p)| (c - done).max(0.0) * p)
            .sum(),
        None => row
            .iter()
            .zip(covered)
            .map(|(c, done)| (c - done).max(0.0))
            .sum(),
    }
}

/// Greedy additional-coverage order. Each step picks the remaining test
/// whose row adds the most residual (weighted) coverage over the running
/// per-unit maximum; when nothing adds anything and resets are enabled,
/// the covered state is cleared and the greedy loop continues.
pub fn prioritize_additional(
    matrix: &CoverageMatrix,
    weights: Option<&FaultPronenessVector>,
    config: &StrategyConfig,
) -> Result<PrioritizedOrder> {
    config.validate()?;
    check_weights(matrix, weights)?;
    let n = matrix.n_tests();
    let m = matrix.n_units();
    let mut covered = vec![0.0_f64; m];
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut order = Vec::with_capacity(n);
    let mut rng = match config.tie_break {
        TieBreak::Random => Some(rng_from_seed(config.seed.unwrap())),
        TieBreak::ByIndex => None,
    };

    let compute = |remaining: &[usize], covered: &[f64]| -> Vec<f64> {
        // Each entry only depends on its own row, so parallel evaluation
        // is bit-identical to the serial loop.
        if remaining.len() * m >= 1 << 14 {
            remaining
                .par_iter()
                .map(|&i| residual(matrix.row(i), covered, weights))
                .collect()
        } else {
            remaining
                .iter()
                .map(|&i| residual(matrix.row(i), covered, weights))
                .collect()
        }
    };

    while !remaining.is_empty() {
        let mut residuals = compute(&remaining, &covered);
        let mut best = residuals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if best == 0.0 && config.reset_on_full_coverage && covered.iter().any(|&c| c > 0.0) {
            covered.fill(0.0);
            residuals = compute(&remaining, &covered);
            best = residuals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        }

        let pos = match &mut rng {
            None => residuals.iter().position(|&r| r == best).unwrap(),
            Some(rng) => {
                let tied: Vec<usize> = residuals
                    .iter()
                    .enumerate()
                    .filter(|(_, &r)| r == best)
                    .map(|(p, _)| p)
                    .collect();
                tied[uniform_index(rng, tied.len())]
            }
        };
        let picked = remaining.remove(pos);
        for (done, c) in covered.iter_mut().zip(matrix.row(picked)) {
            if *c > *done {
                *done = *c;
            }
        }
        order.push(picked);
    }

    let name = if weights.is_some() {
        "additional_fp"
    } else {
        "additional"
    };
    PrioritizedOrder::new(order, name, config.recorded_seed())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix(rows: &[&[f64]]) -> CoverageMatrix {
        CoverageMatrix::new(
            (0..rows.len()).map(|i| format!("t{i}")).collect(),
            (0..rows[0].len()).map(|j| format!("u{j}")).collect(),
            rows.iter().map(|r| r.to_vec()).collect(),
        )
        .unwrap()
    }

    fn random_matrix(seed: u64, max_n: usize, max_m: usize) -> CoverageMatrix {
        let mut rng = rng_from_seed(seed);
        let n = 1 + uniform_index(&mut rng, max_n);
        let m = 1 + uniform_index(&mut rng, max_m);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..m)
                    .map(|_| (uniform_index(&mut rng, 5) as f64) * 0.25)
                    .collect()
            })
            .collect();
        CoverageMatrix::new(
            (0..n).map(|i| format!("t{i}")).collect(),
            (0..m).map(|j| format!("u{j}")).collect(),
            rows,
        )
        .unwrap()
    }

    #[test]
    fn random_is_reproducible_and_total_on_singleton() {
        let a = prioritize_random(8, 42).unwrap();
        let b = prioritize_random(8, 42).unwrap();
        assert_eq!(a.permutation(), b.permutation());
        assert_eq!(prioritize_random(1, 9).unwrap().permutation(), &[0]);
    }

    #[test]
    fn total_sorts_by_summed_coverage() {
        let m = matrix(&[&[1.0, 1.0, 0.0], &[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]]);
        let order = prioritize_total(&m, None, &StrategyConfig::default()).unwrap();
        assert_eq!(order.permutation(), &[0, 1, 2]);
        assert_eq!(order.strategy_name(), "total");
    }

    #[test]
    fn total_with_weights_reorders() {
        let m = matrix(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let fp = FaultPronenessVector::new(vec![0.1, 0.9]).unwrap();
        let order = prioritize_total(&m, Some(&fp), &StrategyConfig::default()).unwrap();
        assert_eq!(order.permutation(), &[1, 0]);
        assert_eq!(order.strategy_name(), "total_fp");
    }

    #[test]
    fn additional_prefers_residual_coverage() {
        let m = matrix(&[&[1.0, 1.0, 0.0], &[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]]);
        let order = prioritize_additional(&m, None, &StrategyConfig::default()).unwrap();
        assert_eq!(order.permutation(), &[0, 2, 1]);
    }

    #[test]
    fn additional_weighted_reset_revives_weighted_residuals() {
        let m = matrix(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]);
        let fp = FaultPronenessVector::new(vec![1.0, 0.0]).unwrap();
        let order = prioritize_additional(&m, Some(&fp), &StrategyConfig::default()).unwrap();
        assert_eq!(order.permutation(), &[0, 2, 1]);
    }

    #[test]
    fn reset_flag_changes_the_tail() {
        let m = matrix(&[&[1.0, 1.0], &[0.3, 0.0], &[1.0, 0.0]]);
        let with_reset = prioritize_additional(&m, None, &StrategyConfig::default()).unwrap();
        assert_eq!(with_reset.permutation(), &[0, 2, 1]);

        let cfg = StrategyConfig {
            reset_on_full_coverage: false,
            ..StrategyConfig::default()
        };
        let without = prioritize_additional(&m, None, &cfg).unwrap();
        assert_eq!(without.permutation(), &[0, 1, 2]);
    }

    #[test]
    fn random_tie_break_requires_seed() {
        let m = matrix(&[&[1.0]]);
        let cfg = StrategyConfig {
            tie_break: TieBreak::Random,
            ..StrategyConfig::default()
        };
        assert!(matches!(
            prioritize_total(&m, None, &cfg),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn random_tie_break_is_seed_deterministic() {
        let m = matrix(&[&[1.0], &[1.0], &[1.0], &[1.0]]);
        let cfg = StrategyConfig {
            tie_break: TieBreak::Random,
            seed: Some(3),
            ..StrategyConfig::default()
        };
        let a = prioritize_total(&m, None, &cfg).unwrap();
        let b = prioritize_total(&m, None, &cfg).unwrap();
        assert_eq!(a.permutation(), b.permutation());
        assert_eq!(a.seed(), Some(3));
    }

    proptest! {
        #[test]
        fn orders_are_permutations(seed in 0u64..400) {
            let m = random_matrix(seed, 8, 6);
            let cfg = StrategyConfig::default();
            prioritize_total(&m, None, &cfg).unwrap();
            prioritize_additional(&m, None, &cfg).unwrap();
            let rnd = StrategyConfig {
                tie_break: TieBreak::Random,
                seed: Some(seed),
                ..StrategyConfig::default()
            };
            prioritize_total(&m, None, &rnd).unwrap();
            prioritize_additional(&m, None, &rnd).unwrap();
            // PrioritizedOrder::new validates bijectivity, so reaching
            // this point is the assertion.
        }

        #[test]
        fn unit_weights_match_unweighted(seed in 0u64..400) {
            let m = random_matrix(seed, 8, 6);
            let ones = FaultPronenessVector::new(vec![1.0; m.n_units()]).unwrap();
            let cfg = StrategyConfig::default();
            let plain_total = prioritize_total(&m, None, &cfg).unwrap();
            let ones_total = prioritize_total(&m, Some(&ones), &cfg).unwrap();
            prop_assert_eq!(plain_total.permutation(), ones_total.permutation());
            let plain_add = prioritize_additional(&m, None, &cfg).unwrap();
            let ones_add = prioritize_additional(&m, Some(&ones), &cfg).unwrap();
            prop_assert_eq!(plain_add.permutation(), ones_add.permutation());
        }

        #[test]
        fn total_matches_stable_sort_oracle(seed in 0u64..400) {
            let m = random_matrix(seed, 8, 6);
            let order = prioritize_total(&m, None, &StrategyConfig::default()).unwrap();
            let mut oracle: Vec<usize> = (0..m.n_tests()).collect();
            let keys: Vec<f64> = (0..m.n_tests())
                .map(|i| m.row(i).iter().sum())
                .collect();
            oracle.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]));
            // sort_by is stable, so equal keys stay in index order.
            prop_assert_eq!(order.permutation(), oracle.as_slice());
        }

        #[test]
        fn additional_matches_per_step_argmax_oracle(seed in 400u64..800) {
            let mut rng = rng_from_seed(seed);
            let n = 1 + uniform_index(&mut rng, 7);
            let m_units = 1 + uniform_index(&mut rng, 7);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..m_units).map(|_| uniform_index(&mut rng, 2) as f64).collect())
                .collect();
            let m = CoverageMatrix::new(
                (0..n).map(|i| format!("t{i}")).collect(),
                (0..m_units).map(|j| format!("u{j}")).collect(),
                rows,
            ).unwrap();
            let got = prioritize_additional(&m, None, &StrategyConfig::default()).unwrap();

            let gain = |i: usize, covered: &[f64]| -> f64 {
                m.row(i).iter().zip(covered).map(|(c, d)| (c - d).max(0.0)).sum()
            };
            let argmax = |left: &[usize], covered: &[f64]| -> usize {
                let mut best = left[0];
                for &i in &left[1..] {
                    if gain(i, covered) > gain(best, covered) {
                        best = i;
                    }
                }
                best
            };
            let mut covered = vec![0.0_f64; m_units];
            let mut left: Vec<usize> = (0..n).collect();
            let mut oracle = Vec::new();
            while !left.is_empty() {
                let mut best = argmax(&left, &covered);
                if gain(best, &covered) == 0.0 && covered.iter().any(|&c| c > 0.0) {
                    covered.fill(0.0);
                    best = argmax(&left, &covered);
                }
                covered.iter_mut().zip(m.row(best)).for_each(|(d, c)| *d = d.max(*c));
                left.retain(|&i| i != best);
                oracle.push(best);
            }
            prop_assert_eq!(got.permutation(), oracle.as_slice());
        }

        #[test]
        fn total_is_stable_under_row_permutation_with_distinct_keys(seed in 0u64..400) {
            let mut rng = rng_from_seed(seed);
            let n = 2 + uniform_index(&mut rng, 6);
            // Distinct totals by construction: test i covers i+1 units.
            let m_units = n + 1;
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|i| (0..m_units).map(|j| if j <= i { 1.0 } else { 0.0 }).collect())
                .collect();
            let ids: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
            let m = CoverageMatrix::new(
                ids.clone(),
                (0..m_units).map(|j| format!("u{j}")).collect(),
                rows.clone(),
            ).unwrap();
            let base = prioritize_total(&m, None, &StrategyConfig::default()).unwrap()
                .to_ids(m.test_ids()).unwrap();

            let perm = shuffled_indices(n, &mut rng);
            let m2 = CoverageMatrix::new(
                perm.iter().map(|&i| ids[i].clone()).collect(),
                (0..m_units).map(|j| format!("u{j}")).collect(),
                perm.iter().map(|&i| rows[i].clone()).collect(),
            ).unwrap();
            let shuffled = prioritize_total(&m2, None, &StrategyConfig::default()).unwrap()
                .to_ids(m2.test_ids()).unwrap();
            prop_assert_eq!(base, shuffled);
        }
    }
}
