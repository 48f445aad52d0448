//! Cluster-based prioritization.
//!
//! The pipeline runs in four phases: score units (done upstream, optional
//! here), cluster the tests on their coverage profiles, order each cluster
//! internally, then interleave the clusters round-robin. Each round takes
//! the next unseen test from every cluster that still has one and sorts
//! that batch by plain total coverage, so early positions mix breadth
//! (within a round) with diversity (across clusters).
//!
//! With fault-proneness scores the distance override keeps suspicious
//! tests in separate clusters, and the internal ordering can rank by
//! weighted coverage instead of raw totals.

use std::collections::BTreeMap;

use rand_chacha::rand_core::RngCore;

use crate::clustering::{agglomerative_cluster, apply_fp_override, pairwise_distances, ClusterAssignment};
use crate::coverage::{CoverageMatrix, FaultPronenessVector};
use crate::error::{Error, Result};
use crate::order::PrioritizedOrder;
use crate::rng::rng_from_seed;
use crate::stats::percentile_nearest_rank;
use crate::strategies::TieBreak;

/// How tests are ranked inside a cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InternalMode {
    /// Total coverage, descending.
    #[default]
    Total,
    /// Fault-proneness weighted coverage, descending; requires scores.
    FpRank,
}

/// How the override threshold on weighted coverage is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdRule {
    /// Fixed cut on weighted coverage.
    Absolute(f64),
    /// Percentile (nearest-rank) of the suite's weighted coverages.
    Percentile(f64),
}

/// Knobs for [`prioritize_clustering`].
#[derive(Debug, Clone, Copy)]
pub struct ClusterStrategyConfig {
    /// Desired cluster count; clamped to the suite size.
    pub k: usize,
    pub threshold: ThresholdRule,
    pub internal_mode: InternalMode,
    pub tie_break: TieBreak,
    pub seed: Option<u64>,
    /// Sort round-robin batches by weighted rather than raw coverage.
    pub fp_weighted_batches: bool,
}

impl Default for ClusterStrategyConfig {
    fn default() -> Self {
        Self {
            k: 200,
            threshold: ThresholdRule::Percentile(90.0),
            internal_mode: InternalMode::Total,
            tie_break: TieBreak::ByIndex,
            seed: None,
            fp_weighted_batches: false,
        }
    }
}

/// One ordered test list per cluster, forming a partition of the suite.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InternalOrderSet {
    orders: BTreeMap<usize, Vec<usize>>,
}

impl InternalOrderSet {
    /// Validates that the per-cluster orders partition `0..n_tests`.
    pub fn new(orders: BTreeMap<usize, Vec<usize>>, n_tests: usize) -> Result<Self> {
        let mut seen = vec![false; n_tests];
        let mut count = 0usize;
        for (cluster, order) in &orders {
            if order.is_empty() {
                return Err(Error::InconsistentOrderSet(format!(
                    "cluster {cluster} has an empty order"
                )));
            }
            for &t in order {
                if t >= n_tests {
                    return Err(Error::InconsistentOrderSet(format!(
                        "cluster {cluster} references test {t}, suite has {n_tests}"
                    )));
                }
                if seen[t] {
                    return Err(Error::InconsistentOrderSet(format!(
                        "test {t} appears in more than one cluster order"
                    )));
                }
                seen[t] = true;
                count += 1;
            }
        }
        if count != n_tests {
            return Err(Error::InconsistentOrderSet(format!(
                "orders cover {count} of {n_tests} tests"
            )));
        }
        Ok(Self { orders })
    }

    pub fn orders(&self) -> &BTreeMap<usize, Vec<usize>> {
        &self.orders
    }
}

fn sort_desc(tests: &mut [usize], keys: &[f64], draws: Option<&[u64]>) {
    tests.sort_by(|&a, &b| {
        keys[b]
            .total_cmp(&keys[a])
            .then_with(|| match draws {
                Some(d) => d[a].cmp(&d[b]),
                None => std::cmp::Ordering::Equal,
            })
            .then(a.cmp(&b))
    });
}

fn internal_keys(
    matrix: &CoverageMatrix,
    fp: Option<&FaultPronenessVector>,
    mode: InternalMode,
) -> Result<Vec<f64>> {
    match mode {
        InternalMode::Total => (0..matrix.n_tests())
            .map(|i| matrix.total_coverage(i))
            .collect(),
        InternalMode::FpRank => {
            let fp = fp.ok_or_else(|| {
                Error::MissingFaultProneness("internal mode fp_rank needs scores".into())
            })?;
            (0..matrix.n_tests())
                .map(|i| matrix.fp_coverage(i, fp))
                .collect()
        }
    }
}

fn internal_prioritize_with(
    assignment: &ClusterAssignment,
    matrix: &CoverageMatrix,
    fp: Option<&FaultPronenessVector>,
    mode: InternalMode,
    draws: Option<&[u64]>,
) -> Result<InternalOrderSet> {
    if assignment.labels().len() != matrix.n_tests() {
        return Err(Error::DimensionMismatch(format!(
            "{} cluster labels for {} tests",
            assignment.labels().len(),
            matrix.n_tests()
        )));
    }
    let keys = internal_keys(matrix, fp, mode)?;
    let mut orders: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (test, &label) in assignment.labels().iter().enumerate() {
        orders.entry(label).or_default().push(test);
    }
    for order in orders.values_mut() {
        sort_desc(order, &keys, draws);
    }
    InternalOrderSet::new(orders, matrix.n_tests())
}

/// Orders every cluster by the selected key, descending, ties by index.
pub fn internal_prioritize(
    assignment: &ClusterAssignment,
    matrix: &CoverageMatrix,
    fp: Option<&FaultPronenessVector>,
    mode: InternalMode,
) -> Result<InternalOrderSet> {
    internal_prioritize_with(assignment, matrix, fp, mode, None)
}

fn round_robin_with(
    orders: &InternalOrderSet,
    matrix: &CoverageMatrix,
    batch_weights: Option<&FaultPronenessVector>,
    draws: Option<&[u64]>,
) -> Result<Vec<usize>> {
    let keys: Vec<f64> = match batch_weights {
        Some(w) => (0..matrix.n_tests())
            .map(|i| matrix.fp_coverage(i, w))
            .collect::<Result<_>>()?,
        None => (0..matrix.n_tests())
            .map(|i| matrix.total_coverage(i))
            .collect::<Result<_>>()?,
    };
    let mut merged = Vec::with_capacity(matrix.n_tests());
    let mut round = 0;
    loop {
        let mut batch: Vec<usize> = orders
            .orders()
            .values()
            .filter_map(|order| order.get(round).copied())
            .collect();
        if batch.is_empty() {
            break;
        }
        sort_desc(&mut batch, &keys, draws);
        merged.extend(batch);
        round += 1;
    }
    Ok(merged)
}

/// Interleaves per-cluster orders: round r gathers the r-th test of every
/// cluster that still has one, sorts the batch by total coverage
/// (descending, ties by index), and appends it.
pub fn round_robin_merge(
    orders: &InternalOrderSet,
    matrix: &CoverageMatrix,
) -> Result<PrioritizedOrder> {
    let merged = round_robin_with(orders, matrix, None, None)?;
    PrioritizedOrder::new(merged, "round_robin", None)
}

/// Full cluster-based prioritization over a coverage matrix.
///
/// Without scores this clusters on raw coverage distances and orders by
/// totals. With scores it applies the distance override above the
/// configured threshold, and the internal ordering and batch sorting
/// optionally use weighted coverage per the config.
pub fn prioritize_clustering(
    matrix: &CoverageMatrix,
    fp: Option<&FaultPronenessVector>,
    config: &ClusterStrategyConfig,
) -> Result<PrioritizedOrder> {
    if config.k == 0 {
        return Err(Error::InvalidK("k = 0".into()));
    }
    if config.tie_break == TieBreak::Random && config.seed.is_none() {
        return Err(Error::Domain(
            "random tie-break requires a seed in the cluster config".into(),
        ));
    }
    if fp.is_none() {
        if config.internal_mode == InternalMode::FpRank {
            return Err(Error::MissingFaultProneness(
                "internal mode fp_rank needs scores".into(),
            ));
        }
        if config.fp_weighted_batches {
            return Err(Error::MissingFaultProneness(
                "weighted batches need scores".into(),
            ));
        }
    }

    let n = matrix.n_tests();
    let k_eff = config.k.min(n);
    let mut distances = pairwise_distances(matrix);
    if let Some(fp) = fp {
        let fp_cover: Vec<f64> = (0..n)
            .map(|i| matrix.fp_coverage(i, fp))
            .collect::<Result<_>>()?;
        let threshold = match config.threshold {
            ThresholdRule::Absolute(v) => {
                if !v.is_finite() {
                    return Err(Error::Domain(format!("absolute threshold {v}")));
                }
                v
            }
            ThresholdRule::Percentile(p) => percentile_nearest_rank(&fp_cover, p)?,
        };
        distances = apply_fp_override(&distances, &fp_cover, threshold)?;
    }
    let assignment = agglomerative_cluster(&distances, k_eff)?;

    let draws: Option<Vec<u64>> = match config.tie_break {
        TieBreak::Random => {
            let mut rng = rng_from_seed(config.seed.unwrap());
            Some((0..n).map(|_| rng.next_u64()).collect())
        }
        TieBreak::ByIndex => None,
    };
    let orders =
        internal_prioritize_with(&assignment, matrix, fp, config.internal_mode, draws.as_deref())?;
    let merged = round_robin_with(
        &orders,
        matrix,
        if config.fp_weighted_batches { fp } else { None },
        draws.as_deref(),
    )?;

    let name = if fp.is_some() {
        "clustering_fp"
    } else {
        "clustering"
    };
    let seed = match config.tie_break {
        TieBreak::Random => config.seed,
        TieBreak::ByIndex => None,
    };
    PrioritizedOrder::new(merged, name, seed)
}
