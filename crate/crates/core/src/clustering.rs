//! Agglomerative clustering over test coverage profiles.
//!
//! Tests whose coverage rows are close in euclidean distance end up in the
//! same cluster; a diversity-aware prioritizer then samples across
//! clusters. Fault-proneness enters through a distance override: any two
//! tests whose weighted coverage both exceed a threshold are forced
//! infinitely far apart, so the clustering cannot hide two suspicious
//! tests in one cluster.
//!
//! Average linkage is computed exactly: the implementation carries the sum
//! of finite cross-pair distances and the count of infinite cross-pairs
//! per cluster pair, both of which merge additively, instead of applying
//! an update formula to the linkage values themselves. A cluster is named
//! by its smallest member index, which keeps merge records and tie-breaks
//! reproducible and independent of internal bookkeeping.

use std::io::Write;

use rayon::prelude::*;

use crate::coverage::CoverageMatrix;
use crate::error::{Error, Result};

/// Condensed symmetric distance matrix (upper triangle, zero diagonal).
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    entries: Vec<f64>,
}

fn condensed_offset(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

impl DistanceMatrix {
    /// Builds from a condensed upper-triangle slice of length n*(n-1)/2.
    pub fn from_condensed(n: usize, entries: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("distance matrix over zero points".into()));
        }
        let expected = n * (n - 1) / 2;
        if entries.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "{} condensed entries for {n} points, expected {expected}",
                entries.len()
            )));
        }
        for (pos, d) in entries.iter().enumerate() {
            if d.is_nan() || *d < 0.0 {
                return Err(Error::Domain(format!(
                    "distance at condensed position {pos} is {d}"
                )));
            }
        }
        Ok(Self { n, entries })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.n && j < self.n);
        if i == j {
            return 0.0;
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.entries[condensed_offset(self.n, a, b)]
    }

    fn set(&mut self, i: usize, j: usize, value: f64) {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.entries[condensed_offset(self.n, a, b)] = value;
    }
}

/// Euclidean distances between all coverage rows.
pub fn pairwise_distances(matrix: &CoverageMatrix) -> DistanceMatrix {
    let n = matrix.n_tests();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let a = matrix.row(i);
            ((i + 1)..n)
                .map(|j| {
                    let sq: f64 = a
                        .iter()
                        .zip(matrix.row(j))
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum();
                    sq.sqrt()
                })
                .collect()
        })
        .collect();
    DistanceMatrix {
        n,
        entries: rows.concat(),
    }
}

/// Returns a copy of `distances` where every pair of tests whose weighted
/// coverage strictly exceeds `threshold` on both sides is set to infinity.
pub fn apply_fp_override(
    distances: &DistanceMatrix,
    fp_cover: &[f64],
    threshold: f64,
) -> Result<DistanceMatrix> {
    if fp_cover.len() != distances.size() {
        return Err(Error::DimensionMismatch(format!(
            "{} weighted coverage values for {} tests",
            fp_cover.len(),
            distances.size()
        )));
    }
    if !threshold.is_finite() {
        return Err(Error::Domain(format!("override threshold {threshold}")));
    }
    let marked: Vec<bool> = fp_cover.iter().map(|&c| c > threshold).collect();
    let mut out = distances.clone();
    for i in 0..out.n {
        if !marked[i] {
            continue;
        }
        for j in (i + 1)..out.n {
            if marked[j] {
                out.set(i, j, f64::INFINITY);
            }
        }
    }
    Ok(out)
}

/// One merge step: the two cluster ids joined and the average-linkage
/// value between them at the time of the merge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeRecord {
    pub cluster_a: usize,
    pub cluster_b: usize,
    pub linkage: f64,
}

/// Result of agglomeration: a label per point plus the merge history.
/// Cluster labels are 0..k, assigned in order of each final cluster's
/// smallest member index. Ids inside [`MergeRecord`]s are the smallest
/// member index of the cluster at merge time.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    labels: Vec<usize>,
    k: usize,
    merge_trace: Vec<MergeRecord>,
}

impl ClusterAssignment {
    /// Wraps an externally produced labeling. Labels must use every value
    /// in 0..max+1 at least once; the merge trace is left empty.
    pub fn from_labels(labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Domain("empty cluster labeling".into()));
        }
        let k = labels.iter().max().unwrap() + 1;
        let mut seen = vec![false; k];
        for &l in &labels {
            seen[l] = true;
        }
        if let Some(gap) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidK(format!(
                "cluster {gap} is empty in a labeling with max label {}",
                k - 1
            )));
        }
        Ok(Self {
            labels,
            k,
            merge_trace: Vec::new(),
        })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn merge_trace(&self) -> &[MergeRecord] {
        &self.merge_trace
    }

    /// Member point indices of one cluster, ascending.
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == cluster)
            .map(|(i, _)| i)
            .collect()
    }

    /// Writes the `test_id,cluster_id` CSV.
    pub fn write_assignment_csv<W: Write>(&self, test_ids: &[String], writer: W) -> Result<()> {
        if test_ids.len() != self.labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} test ids for {} labels",
                test_ids.len(),
                self.labels.len()
            )));
        }
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record(["test_id", "cluster_id"])
            .map_err(|e| Error::Parse(e.to_string()))?;
        for (id, label) in test_ids.iter().zip(&self.labels) {
            csv.write_record([id.as_str(), &label.to_string()])
                .map_err(|e| Error::Parse(e.to_string()))?;
        }
        csv.flush()?;
        Ok(())
    }

    /// Writes the `step,cluster_a,cluster_b,linkage` CSV; infinite
    /// linkages appear as `inf`.
    pub fn write_trace_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record(["step", "cluster_a", "cluster_b", "linkage"])
            .map_err(|e| Error::Parse(e.to_string()))?;
        for (step, rec) in self.merge_trace.iter().enumerate() {
            let linkage = if rec.linkage.is_infinite() {
                "inf".to_owned()
            } else {
                format!("{}", rec.linkage)
            };
            csv.write_record([
                (step + 1).to_string(),
                rec.cluster_a.to_string(),
                rec.cluster_b.to_string(),
                linkage,
            ])
            .map_err(|e| Error::Parse(e.to_string()))?;
        }
        csv.flush()?;
        Ok(())
    }
}

/// Average-linkage agglomerative clustering down to `k` clusters.
///
/// Each step merges the pair with the smallest average linkage, breaking
/// ties toward the smallest id pair. Pairs separated by the infinity
/// override merge only when no finite pair is left; among those the pair
/// with the fewest infinite cross-distances goes first, so overridden
/// tests stay apart whenever `k` allows it.
pub fn agglomerative_cluster(distances: &DistanceMatrix, k: usize) -> Result<ClusterAssignment> {
    let n = distances.size();
    if k == 0 || k > n {
        return Err(Error::InvalidK(format!("k = {k} for {n} points")));
    }

    // Per slot pair: sum of finite cross distances and count of infinite
    // ones. A cluster lives in the slot of its smallest member, so slot
    // order is id order.
    let mut sums = vec![0.0_f64; n * (n - 1) / 2];
    let mut infs = vec![0u32; n * (n - 1) / 2];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = distances.get(i, j);
            let off = condensed_offset(n, i, j);
            if d.is_infinite() {
                infs[off] = 1;
            } else {
                sums[off] = d;
            }
        }
    }

    let mut alive = vec![true; n];
    let mut sizes = vec![1usize; n];
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut trace = Vec::with_capacity(n - k);
    let mut remaining = n;

    while remaining > k {
        let mut best_finite: Option<(f64, usize, usize)> = None;
        let mut best_inf: Option<(u32, usize, usize)> = None;
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            for j in (i + 1)..n {
                if !alive[j] {
                    continue;
                }
                let off = condensed_offset(n, i, j);
                if infs[off] > 0 {
                    if best_inf.is_none_or(|(c, _, _)| infs[off] < c) {
                        best_inf = Some((infs[off], i, j));
                    }
                } else {
                    let linkage = sums[off] / (sizes[i] * sizes[j]) as f64;
                    if best_finite.is_none_or(|(l, _, _)| linkage < l) {
                        best_finite = Some((linkage, i, j));
                    }
                }
            }
        }

        let (linkage, a, b) = match best_finite {
            Some((l, a, b)) => (l, a, b),
            None => {
                let (_, a, b) = best_inf.expect("at least one alive pair");
                (f64::INFINITY, a, b)
            }
        };

        trace.push(MergeRecord {
            cluster_a: a,
            cluster_b: b,
            linkage,
        });
        for c in 0..n {
            if !alive[c] || c == a || c == b {
                continue;
            }
            let (x, y) = if c < a { (c, a) } else { (a, c) };
            let (u, v) = if c < b { (c, b) } else { (b, c) };
            let to = condensed_offset(n, x, y);
            let from = condensed_offset(n, u, v);
            sums[to] += sums[from];
            infs[to] += infs[from];
        }
        sizes[a] += sizes[b];
        let moved = std::mem::take(&mut members[b]);
        members[a].extend(moved);
        alive[b] = false;
        remaining -= 1;
    }

    let mut labels = vec![0usize; n];
    let mut next = 0;
    for slot in 0..n {
        if alive[slot] {
            for &p in &members[slot] {
                labels[p] = next;
            }
            next += 1;
        }
    }
    Ok(ClusterAssignment {
        labels,
        k,
        merge_trace: trace,
    })
}
