//! Effectiveness measurement for prioritized orders.
//!
//! Ground truth per version is a [`VersionOutcome`]: which tests failed,
//! and which fault each failure traces to. Two metrics are computed
//! against an order:
//!
//! * first-fail position: the 1-based rank of the first failing test,
//!   as a percentage of suite size (lower is better);
//! * APFD: `1 - sum(TF_i) / (n * m) + 1 / (2n)` over `m` faults with
//!   first-detection ranks `TF_i` in a suite of `n` tests (higher is
//!   better).
//!
//! [`aggregate_report`] folds per-version scores into per-project and
//! overall means (weighted by version count, not by project) and runs a
//! paired two-sided Wilcoxon signed-rank test over every strategy pair,
//! pairing on (project, version). Pairs with fewer than five nonzero
//! differences are reported as degenerate rather than given a p-value.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::order::PrioritizedOrder;
use crate::stats::{wilcoxon_signed_rank, WilcoxonResult};

/// Observed failures of one version, with fault attribution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VersionOutcome {
    version_id: String,
    failing_tests: BTreeSet<String>,
    fault_map: BTreeMap<String, BTreeSet<String>>,
}

#[derive(Serialize, Deserialize)]
struct OutcomeJson {
    version_id: String,
    failing_tests: Vec<String>,
    fault_map: BTreeMap<String, Vec<String>>,
}

impl VersionOutcome {
    /// Builds an outcome from a fault-to-detecting-tests map; the failing
    /// set is the union. Every fault must have at least one detector.
    pub fn new(
        version_id: String,
        fault_map: BTreeMap<String, BTreeSet<String>>,
    ) -> Result<Self> {
        let mut failing = BTreeSet::new();
        for (fault, detectors) in &fault_map {
            if detectors.is_empty() {
                return Err(Error::UndetectedFault(fault.clone()));
            }
            failing.extend(detectors.iter().cloned());
        }
        Ok(Self {
            version_id,
            failing_tests: failing,
            fault_map,
        })
    }

    pub fn version_id(&self) -> &str {
        &self.version_id
    }

    pub fn failing_tests(&self) -> &BTreeSet<String> {
        &self.failing_tests
    }

    pub fn fault_map(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.fault_map
    }

    pub fn fault_count(&self) -> usize {
        self.fault_map.len()
    }

    /// Parses the outcome JSON, checking that `failing_tests` equals the
    /// union of the fault map's detector lists.
    pub fn from_json<R: Read>(reader: R) -> Result<Self> {
        let raw: OutcomeJson =
            serde_json::from_reader(reader).map_err(|e| Error::Parse(e.to_string()))?;
        let fault_map: BTreeMap<String, BTreeSet<String>> = raw
            .fault_map
            .into_iter()
            .map(|(f, ts)| (f, ts.into_iter().collect()))
            .collect();
        let outcome = VersionOutcome::new(raw.version_id, fault_map)?;
        let listed: BTreeSet<String> = raw.failing_tests.into_iter().collect();
        if listed != outcome.failing_tests {
            return Err(Error::Parse(format!(
                "failing_tests disagrees with the fault map union in version `{}`",
                outcome.version_id
            )));
        }
        Ok(outcome)
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        let raw = OutcomeJson {
            version_id: self.version_id.clone(),
            failing_tests: self.failing_tests.iter().cloned().collect(),
            fault_map: self
                .fault_map
                .iter()
                .map(|(f, ts)| (f.clone(), ts.iter().cloned().collect()))
                .collect(),
        };
        serde_json::to_writer_pretty(writer, &raw).map_err(|e| Error::Parse(e.to_string()))?;
        Ok(())
    }
}

/// First-fail position of an id sequence, as a percentage of its length.
pub fn first_fail_by_ids(order_ids: &[String], failing: &BTreeSet<String>) -> Result<f64> {
    if order_ids.is_empty() {
        return Err(Error::Domain("empty test order".into()));
    }
    if failing.is_empty() {
        return Err(Error::Domain("version has no failing tests".into()));
    }
    let in_order: BTreeSet<&str> = order_ids.iter().map(String::as_str).collect();
    for id in failing {
        if !in_order.contains(id.as_str()) {
            return Err(Error::UnknownTest(id.clone()));
        }
    }
    let rank = order_ids
        .iter()
        .position(|id| failing.contains(id))
        .expect("failing set verified nonempty within the order")
        + 1;
    Ok(100.0 * rank as f64 / order_ids.len() as f64)
}

/// APFD of an id sequence against a fault-to-detectors map.
pub fn apfd_by_ids(
    order_ids: &[String],
    fault_map: &BTreeMap<String, BTreeSet<String>>,
) -> Result<f64> {
    if order_ids.is_empty() {
        return Err(Error::Domain("empty test order".into()));
    }
    if fault_map.is_empty() {
        return Err(Error::Domain("version has no faults".into()));
    }
    let position: BTreeMap<&str, usize> = order_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i + 1))
        .collect();
    let n = order_ids.len() as f64;
    let m = fault_map.len() as f64;
    let mut tf_sum = 0.0;
    for (fault, detectors) in fault_map {
        if detectors.is_empty() {
            return Err(Error::UndetectedFault(fault.clone()));
        }
        let mut first = usize::MAX;
        for t in detectors {
            match position.get(t.as_str()) {
                Some(&rank) => first = first.min(rank),
                None => return Err(Error::UnknownTest(t.clone())),
            }
        }
        tf_sum += first as f64;
    }
    Ok(1.0 - tf_sum / (n * m) + 1.0 / (2.0 * n))
}

/// First-fail percentage of a prioritized order over the named suite.
pub fn first_fail(
    order: &PrioritizedOrder,
    test_ids: &[String],
    outcome: &VersionOutcome,
) -> Result<f64> {
    first_fail_by_ids(&order.to_ids(test_ids)?, &outcome.failing_tests)
}

/// APFD of a prioritized order over the named suite.
pub fn apfd(
    order: &PrioritizedOrder,
    test_ids: &[String],
    outcome: &VersionOutcome,
) -> Result<f64> {
    apfd_by_ids(&order.to_ids(test_ids)?, &outcome.fault_map)
}

/// One strategy's metrics on one version.
#[derive(Debug, Clone, PartialEq)]
pub struct VersionScore {
    pub project: String,
    pub version_id: String,
    pub strategy: String,
    pub first_fail_pct: f64,
    pub apfd: f64,
}

/// Mean first-fail per strategy over some group of versions.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub group: String,
    pub versions: usize,
    /// (strategy, mean first-fail pct) in grid order.
    pub means: Vec<(String, f64)>,
}

/// Paired signed-rank comparison of two strategies; `None` when fewer
/// than five version pairs differ.
#[derive(Debug, Clone)]
pub struct PairwiseComparison {
    pub strategy_a: String,
    pub strategy_b: String,
    pub result: Option<WilcoxonResult>,
}

/// All aggregates over a score table.
#[derive(Debug, Clone)]
pub struct EvaluationReport {
    pub strategies: Vec<String>,
    pub projects: Vec<GroupSummary>,
    pub overall: GroupSummary,
    pub pairwise: Vec<PairwiseComparison>,
    pub per_version: Vec<VersionScore>,
}

/// Folds per-version scores into the report. Every (project, version)
/// pair appearing anywhere must carry exactly one score for every listed
/// strategy; gaps and duplicates are rejected rather than papered over.
pub fn aggregate_report(
    scores: &[VersionScore],
    strategies: &[String],
) -> Result<EvaluationReport> {
    if strategies.is_empty() {
        return Err(Error::Domain("no strategies to aggregate".into()));
    }
    if scores.is_empty() {
        return Err(Error::Domain("no version scores to aggregate".into()));
    }
    let strategy_pos: BTreeMap<&str, usize> = strategies
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    if strategy_pos.len() != strategies.len() {
        return Err(Error::DuplicateId("repeated strategy in grid".into()));
    }

    // cells[(project, version)][strategy position] = score
    let mut cells: BTreeMap<(String, String), Vec<Option<&VersionScore>>> = BTreeMap::new();
    for score in scores {
        let pos = *strategy_pos
            .get(score.strategy.as_str())
            .ok_or_else(|| Error::Domain(format!("unlisted strategy `{}`", score.strategy)))?;
        let slot = cells
            .entry((score.project.clone(), score.version_id.clone()))
            .or_insert_with(|| vec![None; strategies.len()]);
        if slot[pos].is_some() {
            return Err(Error::DuplicateId(format!(
                "{}/{} scored twice by `{}`",
                score.project, score.version_id, score.strategy
            )));
        }
        slot[pos] = Some(score);
    }
    for ((project, version), slot) in &cells {
        for (pos, entry) in slot.iter().enumerate() {
            if entry.is_none() {
                return Err(Error::MissingCell(format!(
                    "{project}/{version} has no `{}` score",
                    strategies[pos]
                )));
            }
        }
    }

    let mut per_version: Vec<VersionScore> = Vec::with_capacity(cells.len() * strategies.len());
    for slot in cells.values() {
        for entry in slot {
            per_version.push((*entry.as_ref().unwrap()).clone());
        }
    }

    let mut projects = Vec::new();
    let project_names: BTreeSet<&str> = cells.keys().map(|(p, _)| p.as_str()).collect();
    let summarize = |keys: Vec<&(String, String)>, group: String| -> GroupSummary {
        let means = strategies
            .iter()
            .enumerate()
            .map(|(pos, s)| {
                let total: f64 = keys
                    .iter()
                    .map(|k| cells[*k][pos].unwrap().first_fail_pct)
                    .sum();
                (s.clone(), total / keys.len() as f64)
            })
            .collect();
        GroupSummary {
            group,
            versions: keys.len(),
            means,
        }
    };
    for name in &project_names {
        let keys: Vec<&(String, String)> =
            cells.keys().filter(|(p, _)| p == name).collect();
        projects.push(summarize(keys, (*name).to_owned()));
    }
    let overall = summarize(cells.keys().collect(), "Overall".to_owned());

    let mut pairwise = Vec::new();
    for (i, a) in strategies.iter().enumerate() {
        for b in strategies.iter().skip(i + 1) {
            let pos_a = strategy_pos[a.as_str()];
            let pos_b = strategy_pos[b.as_str()];
            let va: Vec<f64> = cells
                .values()
                .map(|slot| slot[pos_a].unwrap().first_fail_pct)
                .collect();
            let vb: Vec<f64> = cells
                .values()
                .map(|slot| slot[pos_b].unwrap().first_fail_pct)
                .collect();
            let result = match wilcoxon_signed_rank(&va, &vb) {
                Ok(r) => Some(r),
                Err(Error::InsufficientPairs(_)) => None,
                Err(e) => return Err(e),
            };
            pairwise.push(PairwiseComparison {
                strategy_a: a.clone(),
                strategy_b: b.clone(),
                result,
            });
        }
    }

    Ok(EvaluationReport {
        strategies: strategies.to_vec(),
        projects,
        overall,
        pairwise,
        per_version,
    })
}

/// Writes `project,versions,strategy,mean_first_fail` rows, projects
/// first, then the Overall block.
pub fn write_report_csv<W: Write>(report: &EvaluationReport, writer: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["project", "versions", "strategy", "mean_first_fail"])
        .map_err(|e| Error::Parse(e.to_string()))?;
    for group in report.projects.iter().chain(std::iter::once(&report.overall)) {
        for (strategy, mean) in &group.means {
            csv.write_record([
                group.group.as_str(),
                &group.versions.to_string(),
                strategy,
                &format!("{mean}"),
            ])
            .map_err(|e| Error::Parse(e.to_string()))?;
        }
    }
    csv.flush()?;
    Ok(())
}

/// Writes `strategy_a,strategy_b,statistic,p_value` rows; degenerate
/// comparisons carry the literal `degenerate` in both numeric columns.
pub fn write_pairwise_csv<W: Write>(report: &EvaluationReport, writer: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["strategy_a", "strategy_b", "statistic", "p_value"])
        .map_err(|e| Error::Parse(e.to_string()))?;
    for cmp in &report.pairwise {
        let (stat, p) = match &cmp.result {
            Some(r) => (format!("{}", r.statistic), format!("{}", r.p_value)),
            None => ("degenerate".to_owned(), "degenerate".to_owned()),
        };
        csv.write_record([cmp.strategy_a.as_str(), cmp.strategy_b.as_str(), &stat, &p])
            .map_err(|e| Error::Parse(e.to_string()))?;
    }
    csv.flush()?;
    Ok(())
}

/// Writes `project,version_id,strategy,first_fail_pct,apfd` rows.
pub fn write_per_version_csv<W: Write>(report: &EvaluationReport, writer: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["project", "version_id", "strategy", "first_fail_pct", "apfd"])
        .map_err(|e| Error::Parse(e.to_string()))?;
    for row in &report.per_version {
        csv.write_record([
            row.project.as_str(),
            row.version_id.as_str(),
            row.strategy.as_str(),
            &format!("{}", row.first_fail_pct),
            &format!("{}", row.apfd),
        ])
        .map_err(|e| Error::Parse(e.to_string()))?;
    }
    csv.flush()?;
    Ok(())
}
