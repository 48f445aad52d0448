//! Statistical helpers: the Wilcoxon signed-rank test used to compare
//! strategies, plus a nearest-rank percentile used for thresholding.
//!
//! The signed-rank test is two-sided. Zero differences are dropped, tied
//! magnitudes get average ranks, and the statistic is the smaller of the
//! positive and negative rank sums. For up to 25 nonzero pairs the p-value
//! comes from the exact null distribution (a subset-sum count over sign
//! assignments, feasible because doubled average ranks are integers); for
//! larger samples it uses the normal approximation with tie and continuity
//! corrections.

use crate::error::{Error, Result};

/// Outcome of a Wilcoxon signed-rank comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WilcoxonResult {
    /// min(W+, W-) over the nonzero differences.
    pub statistic: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    /// Number of nonzero pairs actually used.
    pub n_used: usize,
    /// Whether the exact distribution was enumerated.
    pub exact: bool,
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Average ranks (1-based) of `values` sorted ascending; ties share the
/// mean of the positions they occupy.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start;
        while end + 1 < n && values[idx[end + 1]] == values[idx[start]] {
            end += 1;
        }
        // Positions start+1 ..= end+1 share one average rank.
        let rank = (start + 1 + end + 1) as f64 / 2.0;
        for &i in &idx[start..=end] {
            ranks[i] = rank;
        }
        start = end + 1;
    }
    ranks
}

/// Two-sided Wilcoxon signed-rank test on paired samples.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "paired samples of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    if n < 5 {
        return Err(Error::InsufficientPairs(format!(
            "{n} nonzero differences, need at least 5"
        )));
    }

    let magnitudes: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&magnitudes);
    let w_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| *r)
        .sum();
    let rank_sum = (n * (n + 1)) as f64 / 2.0;
    let w_minus = rank_sum - w_plus;
    let statistic = w_plus.min(w_minus);

    if n <= 25 {
        // Doubled average ranks are exact integers, so the whole null
        // distribution fits in a subset-sum table.
        let scaled: Vec<u64> = ranks.iter().map(|r| (2.0 * r).round() as u64).collect();
        let total_sum: u64 = scaled.iter().sum();
        let mut dist = vec![0u64; total_sum as usize + 1];
        dist[0] = 1;
        let mut reach = 0usize;
        for &r in &scaled {
            let r = r as usize;
            reach += r;
            for s in (0..=reach.saturating_sub(r)).rev() {
                if dist[s] > 0 {
                    dist[s + r] += dist[s];
                }
            }
        }
        let w_scaled = (2.0 * statistic).round() as usize;
        let below: u64 = dist[..=w_scaled].iter().sum();
        let total = (1u64) << n;
        let p_value = (2.0 * below as f64 / total as f64).min(1.0);
        return Ok(WilcoxonResult {
            statistic,
            p_value,
            n_used: n,
            exact: true,
        });
    }

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut tie_term = 0.0;
    {
        let mut sorted = magnitudes.clone();
        sorted.sort_by(f64::total_cmp);
        let mut start = 0;
        while start < sorted.len() {
            let mut end = start;
            while end + 1 < sorted.len() && sorted[end + 1] == sorted[start] {
                end += 1;
            }
            let t = (end - start + 1) as f64;
            tie_term += t * t * t - t;
            start = end + 1;
        }
    }
    let variance = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    if variance <= 0.0 {
        return Ok(WilcoxonResult {
            statistic,
            p_value: 1.0,
            n_used: n,
            exact: false,
        });
    }
    let z = (statistic - mean + 0.5) / variance.sqrt();
    let p_value = (2.0 * normal_cdf(z)).min(1.0);
    Ok(WilcoxonResult {
        statistic,
        p_value,
        n_used: n,
        exact: false,
    })
}

/// Nearest-rank percentile: the smallest element such that at least
/// `p` percent of the data is at or below it. `p` must lie in [0, 100]
/// and `values` must be non-empty.
pub fn percentile_nearest_rank(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Domain("percentile of an empty slice".into()));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::Domain(format!("percentile {p} outside [0, 100]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (p / 100.0 * sorted.len() as f64).ceil() as usize;
    let idx = rank.saturating_sub(1).min(sorted.len() - 1);
    Ok(sorted[idx])
}
