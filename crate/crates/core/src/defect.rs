//! Fault-proneness estimation from bug history.
//!
//! Each code unit in each historical version carries a feature row
//! (process and code metrics) and a label: buggy if a fix later touched
//! it, clean otherwise. The pipeline is:
//!
//! 1. [`build_feature_deltas`]: widen each row with the change against the
//!    previous version, so the learner sees both state and churn;
//! 2. [`smote_oversample`]: synthesize minority (buggy) rows on segments
//!    between real minority neighbors until a target class ratio holds;
//! 3. [`tomek_link_removal`]: drop clean rows that form cross-class
//!    mutual-nearest-neighbor pairs, cleaning the class boundary;
//! 4. [`train_classifier`]: a class-weighted logistic model, with the
//!    buggy class weighted by a configurable factor on top of the
//!    resampling;
//! 5. [`predict_fault_proneness`]: per-unit scores in (0, 1) for a new
//!    version, which plug into the coverage strategies as unit weights.
//!
//! Determinism contract: resampling draws come from a caller seed, one
//! neighbor index then one interpolation factor per synthetic sample,
//! bases cycling through the minority rows in order. Training is plain
//! full-batch gradient descent with backtracking, so reruns are
//! bit-identical.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coverage::FaultPronenessVector;
use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, uniform_index, uniform_unit};

/// Sample label: was the unit touched by a fix after this version?
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Clean,
    Buggy,
}

/// One unit in one version.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSample {
    pub unit_id: String,
    pub version_id: String,
    pub features: Vec<f64>,
    pub label: Label,
}

/// A labeled feature table with a shared feature-name header.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    feature_names: Vec<String>,
    samples: Vec<FeatureSample>,
}

impl FeatureDataset {
    /// Builds a dataset, checking row width and feature finiteness.
    /// Samples may be empty (a version with no recorded units).
    pub fn new(feature_names: Vec<String>, samples: Vec<FeatureSample>) -> Result<Self> {
        if feature_names.is_empty() {
            return Err(Error::Parse("feature table has no feature columns".into()));
        }
        for sample in &samples {
            if sample.features.len() != feature_names.len() {
                return Err(Error::DimensionMismatch(format!(
                    "unit `{}` has {} features, expected {}",
                    sample.unit_id,
                    sample.features.len(),
                    feature_names.len()
                )));
            }
            for (name, v) in feature_names.iter().zip(&sample.features) {
                if !v.is_finite() {
                    return Err(Error::NonFiniteFeature(format!(
                        "{name} of `{}` is {v}",
                        sample.unit_id
                    )));
                }
            }
        }
        Ok(Self {
            feature_names,
            samples,
        })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn samples(&self) -> &[FeatureSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn count(&self, label: Label) -> usize {
        self.samples.iter().filter(|s| s.label == label).count()
    }

    /// Unit ids in row order.
    pub fn unit_ids(&self) -> Vec<String> {
        self.samples.iter().map(|s| s.unit_id.clone()).collect()
    }

    /// Unit ids labeled buggy, deduplicated.
    pub fn buggy_unit_ids(&self) -> BTreeSet<String> {
        self.samples
            .iter()
            .filter(|s| s.label == Label::Buggy)
            .map(|s| s.unit_id.clone())
            .collect()
    }

    /// Concatenates datasets sharing one feature header.
    pub fn concat(parts: &[&FeatureDataset]) -> Result<FeatureDataset> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Parse("no feature tables to concatenate".into()))?;
        let mut samples = Vec::new();
        for part in parts {
            if part.feature_names != first.feature_names {
                return Err(Error::FeatureNameMismatch(format!(
                    "{:?} vs {:?}",
                    part.feature_names, first.feature_names
                )));
            }
            samples.extend(part.samples.iter().cloned());
        }
        FeatureDataset::new(first.feature_names.clone(), samples)
    }

    /// Parses the `unit_id,version_id,label,<features...>` CSV. Labels are
    /// `1` for buggy and `0` for clean. A header-only file yields an empty
    /// dataset. Repeated (unit, version) pairs are rejected.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut csv = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(reader);
        let mut records = csv.records();

        let header = match records.next() {
            Some(rec) => rec.map_err(|e| Error::Parse(e.to_string()))?,
            None => return Err(Error::Parse("empty feature CSV".into())),
        };
        if header.len() < 4
            || &header[0] != "unit_id"
            || &header[1] != "version_id"
            || &header[2] != "label"
        {
            return Err(Error::Parse(
                "feature CSV header must start with `unit_id,version_id,label` \
                 and carry at least one feature column"
                    .into(),
            ));
        }
        let feature_names: Vec<String> = header.iter().skip(3).map(str::to_owned).collect();

        let mut seen: BTreeSet<(String, String)> = BTreeSet::new();
        let mut samples = Vec::new();
        for rec in records {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            if rec.len() != feature_names.len() + 3 {
                return Err(Error::Parse(format!(
                    "feature row has {} fields, expected {}",
                    rec.len(),
                    feature_names.len() + 3
                )));
            }
            let unit_id = rec[0].to_owned();
            let version_id = rec[1].to_owned();
            if !seen.insert((unit_id.clone(), version_id.clone())) {
                return Err(Error::DuplicateId(format!("{unit_id}@{version_id}")));
            }
            let label = match &rec[2] {
                "0" => Label::Clean,
                "1" => Label::Buggy,
                other => return Err(Error::Parse(format!("bad label `{other}`"))),
            };
            let mut features = Vec::with_capacity(feature_names.len());
            for field in rec.iter().skip(3) {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad feature value `{field}`")))?;
                features.push(v);
            }
            samples.push(FeatureSample {
                unit_id,
                version_id,
                features,
                label,
            });
        }
        FeatureDataset::new(feature_names, samples)
    }
}

/// Widens each current row with its change against the previous version:
/// output features are `[current..., current - previous...]`, the delta
/// falling back to the current value for units absent before (a new unit
/// changed by its full size). Labels and version ids come from `current`.
pub fn build_feature_deltas(
    current: &FeatureDataset,
    previous: &FeatureDataset,
) -> Result<FeatureDataset> {
    if current.feature_names != previous.feature_names {
        return Err(Error::FeatureNameMismatch(format!(
            "{:?} vs {:?}",
            current.feature_names, previous.feature_names
        )));
    }
    let mut prev_rows: BTreeMap<&str, &[f64]> = BTreeMap::new();
    for sample in &previous.samples {
        // Re-inserted ids keep the last row, matching file order.
        prev_rows.insert(sample.unit_id.as_str(), &sample.features);
    }

    let mut names = current.feature_names.clone();
    names.extend(
        current
            .feature_names
            .iter()
            .map(|n| format!("{n}_delta")),
    );

    let dim = current.dim();
    let samples = current
        .samples
        .iter()
        .map(|sample| {
            let mut features = Vec::with_capacity(dim * 2);
            features.extend_from_slice(&sample.features);
            match prev_rows.get(sample.unit_id.as_str()) {
                Some(prev) => {
                    features.extend(sample.features.iter().zip(*prev).map(|(c, p)| c - p))
                }
                None => features.extend_from_slice(&sample.features),
            }
            FeatureSample {
                unit_id: sample.unit_id.clone(),
                version_id: sample.version_id.clone(),
                features,
                label: sample.label,
            }
        })
        .collect();
    FeatureDataset::new(names, samples)
}

/// Frozen feature standardization: per-feature mean and scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardization {
    /// Fits means and population standard deviations; constant features
    /// get scale 1 so they standardize to zero.
    pub fn fit(rows: &[&[f64]], dim: usize) -> Self {
        let n = rows.len().max(1) as f64;
        let mut means = vec![0.0; dim];
        for row in rows {
            for (m, v) in means.iter_mut().zip(*row) {
                *m += v;
            }
        }
        for m in &mut means {
            *m /= n;
        }
        let mut scales = vec![0.0; dim];
        for row in rows {
            for ((s, v), m) in scales.iter_mut().zip(*row).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut scales {
            *s = (*s / n).sqrt();
            if *s == 0.0 {
                *s = 1.0;
            }
        }
        Self { means, scales }
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.means)
            .zip(&self.scales)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

fn standardized_rows(data: &FeatureDataset) -> (Standardization, Vec<Vec<f64>>) {
    let rows: Vec<&[f64]> = data.samples.iter().map(|s| s.features.as_slice()).collect();
    let std = Standardization::fit(&rows, data.dim());
    let transformed = rows.iter().map(|r| std.transform(r)).collect();
    (std, transformed)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// SMOTE oversampling of the buggy class.
///
/// Synthetic rows are `base + u * (neighbor - base)` with `u` uniform in
/// [0, 1), neighbors drawn among each base's `k` nearest minority rows
/// (standardized euclidean, ties by index). Enough synthetics are added
/// to bring the minority fraction up to `target_minority_ratio`; if the
/// input already satisfies it, the dataset is returned unchanged.
/// Original rows are preserved in order, synthetics appended.
pub fn smote_oversample(
    data: &FeatureDataset,
    k: usize,
    target_minority_ratio: f64,
    seed: u64,
) -> Result<FeatureDataset> {
    if k == 0 {
        return Err(Error::Domain("smote neighbor count k must be >= 1".into()));
    }
    if !(target_minority_ratio > 0.0 && target_minority_ratio <= 1.0) {
        return Err(Error::Domain(format!(
            "target minority ratio {target_minority_ratio} outside (0, 1]"
        )));
    }
    let minority: Vec<usize> = (0..data.len())
        .filter(|&i| data.samples[i].label == Label::Buggy)
        .collect();
    let n_min = minority.len();
    let n_maj = data.len() - n_min;
    if !data.is_empty() && n_min as f64 / data.len() as f64 >= target_minority_ratio {
        return Ok(data.clone());
    }
    if n_min < 2 {
        return Err(Error::InsufficientMinority(format!(
            "{n_min} buggy rows; need at least 2 to interpolate"
        )));
    }
    if target_minority_ratio == 1.0 {
        return Err(Error::Domain(
            "target minority ratio 1.0 is unreachable with a nonempty majority".into(),
        ));
    }

    let wanted_total =
        (target_minority_ratio * n_maj as f64 / (1.0 - target_minority_ratio)).ceil() as usize;
    let synth_count = wanted_total.saturating_sub(n_min);

    let (_, std_rows) = standardized_rows(data);
    let k_eff = k.min(n_min - 1);
    let neighbors: Vec<Vec<usize>> = minority
        .par_iter()
        .map(|&i| {
            let mut dists: Vec<(f64, usize)> = minority
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| (sq_dist(&std_rows[i], &std_rows[j]), j))
                .collect();
            dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            dists.truncate(k_eff);
            dists.into_iter().map(|(_, j)| j).collect()
        })
        .collect();

    let mut rng = rng_from_seed(seed);
    let mut samples = data.samples.clone();
    for s in 0..synth_count {
        let base_pos = s % n_min;
        let base = &data.samples[minority[base_pos]];
        let pick = uniform_index(&mut rng, k_eff);
        let neighbor = &data.samples[neighbors[base_pos][pick]];
        let u = uniform_unit(&mut rng);
        let features: Vec<f64> = base
            .features
            .iter()
            .zip(&neighbor.features)
            .map(|(b, n)| b + u * (n - b))
            .collect();
        samples.push(FeatureSample {
            unit_id: format!("{}~syn{s}", base.unit_id),
            version_id: base.version_id.clone(),
            features,
            label: Label::Buggy,
        });
    }
    FeatureDataset::new(data.feature_names.clone(), samples)
}

/// Removes the clean half of every Tomek link: a pair of rows that are
/// mutual nearest neighbors (standardized euclidean, ties by index) yet
/// carry opposite labels. Buggy rows are never removed; survivor order is
/// preserved.
pub fn tomek_link_removal(data: &FeatureDataset) -> FeatureDataset {
    if data.len() < 2 {
        return data.clone();
    }
    let (_, std_rows) = standardized_rows(data);
    let nearest: Vec<usize> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let mut best = usize::MAX;
            let mut best_d = f64::INFINITY;
            for j in 0..data.len() {
                if j == i {
                    continue;
                }
                let d = sq_dist(&std_rows[i], &std_rows[j]);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            best
        })
        .collect();

    let mut drop = vec![false; data.len()];
    for i in 0..data.len() {
        let j = nearest[i];
        if j > i && nearest[j] == i && data.samples[i].label != data.samples[j].label {
            let clean = if data.samples[i].label == Label::Clean {
                i
            } else {
                j
            };
            drop[clean] = true;
        }
    }
    let samples: Vec<FeatureSample> = data
        .samples
        .iter()
        .enumerate()
        .filter(|(i, _)| !drop[*i])
        .map(|(_, s)| s.clone())
        .collect();
    FeatureDataset {
        feature_names: data.feature_names.clone(),
        samples,
    }
}

/// A trained logistic model with its input standardization frozen in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub feature_names: Vec<String>,
    pub standardization: Standardization,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub lambda: f64,
}

// libm instead of std keeps exp/log bit-identical across platforms, so
// models and scores reproduce exactly everywhere.
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

impl ClassifierModel {
    /// Scores one raw (unstandardized) feature row. Output is clamped to
    /// the open interval (0, 1).
    pub fn score(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} features for a model with {} weights",
                features.len(),
                self.weights.len()
            )));
        }
        let x = self.standardization.transform(features);
        let z: f64 = x.iter().zip(&self.weights).map(|(v, w)| v * w).sum::<f64>() + self.bias;
        Ok(sigmoid(z).clamp(1e-12, 1.0 - 1e-12))
    }

    pub fn save_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self).map_err(|e| Error::Parse(e.to_string()))?;
        Ok(())
    }

    pub fn load_json<R: Read>(reader: R) -> Result<Self> {
        let model: ClassifierModel =
            serde_json::from_reader(reader).map_err(|e| Error::Parse(e.to_string()))?;
        let d = model.feature_names.len();
        if model.weights.len() != d
            || model.standardization.means.len() != d
            || model.standardization.scales.len() != d
        {
            return Err(Error::DimensionMismatch(
                "model field lengths disagree with feature_names".into(),
            ));
        }
        let finite = model.weights.iter().all(|w| w.is_finite())
            && model.bias.is_finite()
            && model.standardization.means.iter().all(|m| m.is_finite())
            && model.standardization.scales.iter().all(|s| s.is_finite() && *s > 0.0);
        if !finite || !(model.lambda > 0.0) {
            return Err(Error::Domain("model file carries non-finite or invalid values".into()));
        }
        Ok(model)
    }
}

/// Gradient descent knobs for [`train_classifier`].
#[derive(Debug, Clone, Copy)]
pub struct TrainingParams {
    /// Initial step size; backtracking halves it per rejected step.
    pub learning_rate: f64,
    pub max_iterations: usize,
    /// Relative loss-change threshold treated as convergence.
    pub tolerance: f64,
}

impl Default for TrainingParams {
    fn default() -> Self {
        Self {
            learning_rate: 1.0,
            max_iterations: 500,
            tolerance: 1e-9,
        }
    }
}

/// Training output: the model plus the descent trajectory.
#[derive(Debug, Clone)]
pub struct TrainedClassifier {
    pub model: ClassifierModel,
    /// Weighted mean loss before training and after each accepted step;
    /// non-increasing by construction.
    pub loss_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Fits a logistic model with the buggy class weighted by `lambda` and the
/// clean class by 1. Full-batch gradient descent with backtracking line
/// search on the weighted mean log-loss; deterministic from a zero start.
pub fn train_classifier(
    data: &FeatureDataset,
    lambda: f64,
    params: &TrainingParams,
) -> Result<TrainedClassifier> {
    if data.is_empty() {
        return Err(Error::Domain("empty training data".into()));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("class weight lambda {lambda}")));
    }
    if !(params.learning_rate > 0.0) || params.max_iterations == 0 || params.tolerance < 0.0 {
        return Err(Error::Domain("invalid training params".into()));
    }
    let n_buggy = data.count(Label::Buggy);
    if n_buggy == 0 || n_buggy == data.len() {
        return Err(Error::SingleClass);
    }

    let (standardization, x) = standardized_rows(data);
    let y: Vec<f64> = data
        .samples
        .iter()
        .map(|s| if s.label == Label::Buggy { 1.0 } else { 0.0 })
        .collect();
    let w: Vec<f64> = data
        .samples
        .iter()
        .map(|s| if s.label == Label::Buggy { lambda } else { 1.0 })
        .collect();
    let w_sum: f64 = w.iter().sum();
    let dim = data.dim();

    // max(z,0) - z*y + ln(1 + exp(-|z|)) is the stable per-sample log-loss.
    let loss = |theta: &[f64], bias: f64| -> f64 {
        let mut acc = 0.0;
        for i in 0..x.len() {
            let z: f64 = x[i].iter().zip(theta).map(|(v, t)| v * t).sum::<f64>() + bias;
            acc += w[i] * (z.max(0.0) - z * y[i] + libm::log1p(libm::exp(-z.abs())));
        }
        acc / w_sum
    };

    let mut theta = vec![0.0_f64; dim];
    let mut bias = 0.0_f64;
    let mut current = loss(&theta, bias);
    let mut trace = vec![current];
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..params.max_iterations {
        let mut grad = vec![0.0_f64; dim];
        let mut grad_bias = 0.0_f64;
        for i in 0..x.len() {
            let z: f64 = x[i].iter().zip(&theta).map(|(v, t)| v * t).sum::<f64>() + bias;
            let err = w[i] * (sigmoid(z) - y[i]);
            grad_bias += err;
            for (g, v) in grad.iter_mut().zip(&x[i]) {
                *g += err * v;
            }
        }
        for g in &mut grad {
            *g /= w_sum;
        }
        grad_bias /= w_sum;
        let grad_sq: f64 = grad.iter().map(|g| g * g).sum::<f64>() + grad_bias * grad_bias;

        let mut step = params.learning_rate;
        let mut accepted = None;
        while step >= 1e-14 {
            let cand: Vec<f64> = theta.iter().zip(&grad).map(|(t, g)| t - step * g).collect();
            let cand_bias = bias - step * grad_bias;
            let cand_loss = loss(&cand, cand_bias);
            if cand_loss <= current - 1e-4 * step * grad_sq {
                accepted = Some((cand, cand_bias, cand_loss));
                break;
            }
            step *= 0.5;
        }
        let Some((next, next_bias, next_loss)) = accepted else {
            // No step of any size decreases the loss: numerical optimum.
            converged = true;
            break;
        };
        theta = next;
        bias = next_bias;
        iterations += 1;
        trace.push(next_loss);
        if (current - next_loss).abs() <= params.tolerance * current.abs().max(1.0) {
            converged = true;
            break;
        }
        current = next_loss;
    }

    Ok(TrainedClassifier {
        model: ClassifierModel {
            feature_names: data.feature_names.clone(),
            standardization,
            weights: theta,
            bias,
            lambda,
        },
        loss_trace: trace,
        converged,
        iterations,
    })
}

/// Scores every row of `units`, in row order, as a fault-proneness vector.
pub fn predict_fault_proneness(
    model: &ClassifierModel,
    units: &FeatureDataset,
) -> Result<FaultPronenessVector> {
    if units.feature_names() != model.feature_names.as_slice() {
        return Err(Error::FeatureNameMismatch(format!(
            "{:?} vs {:?}",
            units.feature_names(),
            model.feature_names
        )));
    }
    let scores = units
        .samples
        .iter()
        .map(|s| model.score(&s.features))
        .collect::<Result<Vec<f64>>>()?;
    FaultPronenessVector::new(scores)
}

/// Did the prediction flag any actually-buggy unit above `threshold`?
/// The comparison is strict; an empty buggy set trivially misses.
pub fn bug_hit(
    fp: &FaultPronenessVector,
    unit_ids: &[String],
    buggy_units: &BTreeSet<String>,
    threshold: f64,
) -> Result<bool> {
    if unit_ids.len() != fp.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} unit ids for {} scores",
            unit_ids.len(),
            fp.len()
        )));
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Domain(format!("bug-hit threshold {threshold}")));
    }
    let index: BTreeMap<&str, usize> = unit_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut hit = false;
    for id in buggy_units {
        match index.get(id.as_str()) {
            Some(&i) => {
                if fp.get(i) > threshold {
                    hit = true;
                }
            }
            None => return Err(Error::UnknownUnit(id.clone())),
        }
    }
    Ok(hit)
}

/// One grid entry scored by [`tune_lambda`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaScore {
    pub lambda: f64,
    pub f_score: f64,
}

/// Outcome of the class-weight grid search.
#[derive(Debug, Clone)]
pub struct TuningReport {
    pub best_lambda: f64,
    pub best_f_score: f64,
    pub candidates: Vec<LambdaScore>,
    /// Model retrained on the full data with the best class weight.
    pub model: TrainedClassifier,
}

/// Grid search over class weights, maximizing F-score of the buggy class
/// on a stratified held-out split (threshold 0.5). Ties keep the earlier
/// grid entry. The split is seed-deterministic; resampling, if wanted,
/// should be applied by the caller beforehand.
pub fn tune_lambda(
    data: &FeatureDataset,
    lambdas: &[f64],
    params: &TrainingParams,
    holdout_fraction: f64,
    seed: u64,
) -> Result<TuningReport> {
    if lambdas.is_empty() {
        return Err(Error::Domain("empty lambda grid".into()));
    }
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(Error::Domain(format!(
            "holdout fraction {holdout_fraction} outside (0, 1)"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut train_idx = Vec::new();
    let mut held_idx = Vec::new();
    for label in [Label::Buggy, Label::Clean] {
        let class: Vec<usize> = (0..data.len())
            .filter(|&i| data.samples()[i].label == label)
            .collect();
        if class.len() < 2 {
            return Err(Error::InsufficientMinority(format!(
                "{} {label:?} rows; need at least 2 to split",
                class.len()
            )));
        }
        let shuffled = crate::rng::shuffled_indices(class.len(), &mut rng);
        let held = ((holdout_fraction * class.len() as f64).ceil() as usize)
            .clamp(1, class.len() - 1);
        for (pos, &slot) in shuffled.iter().enumerate() {
            if pos < held {
                held_idx.push(class[slot]);
            } else {
                train_idx.push(class[slot]);
            }
        }
    }
    train_idx.sort_unstable();
    held_idx.sort_unstable();

    let subset = |idx: &[usize]| -> Result<FeatureDataset> {
        FeatureDataset::new(
            data.feature_names().to_vec(),
            idx.iter().map(|&i| data.samples()[i].clone()).collect(),
        )
    };
    let train = subset(&train_idx)?;
    let held = subset(&held_idx)?;

    let mut candidates = Vec::with_capacity(lambdas.len());
    let mut best: Option<LambdaScore> = None;
    for &lambda in lambdas {
        let trained = train_classifier(&train, lambda, params)?;
        let mut tp = 0u32;
        let mut fp_count = 0u32;
        let mut fn_count = 0u32;
        for sample in held.samples() {
            let predicted = trained.model.score(&sample.features)? > 0.5;
            match (predicted, sample.label) {
                (true, Label::Buggy) => tp += 1,
                (true, Label::Clean) => fp_count += 1,
                (false, Label::Buggy) => fn_count += 1,
                (false, Label::Clean) => {}
            }
        }
        let denom = 2 * tp + fp_count + fn_count;
        let f_score = if denom == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        };
        let entry = LambdaScore { lambda, f_score };
        candidates.push(entry);
        if best.is_none_or(|b| entry.f_score > b.f_score) {
            best = Some(entry);
        }
    }
    let best = best.unwrap();
    let model = train_classifier(data, best.lambda, params)?;
    Ok(TuningReport {
        best_lambda: best.lambda,
        best_f_score: best.f_score,
        candidates,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dataset(names: &[&str], rows: &[(&str, &str, &[f64], Label)]) -> FeatureDataset {
        FeatureDataset::new(
            names.iter().map(|n| (*n).to_owned()).collect(),
            rows.iter()
                .map(|(u, v, f, l)| FeatureSample {
                    unit_id: (*u).to_owned(),
                    version_id: (*v).to_owned(),
                    features: f.to_vec(),
                    label: *l,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn feature_csv_parses_and_rejects_duplicates() {
        let text = "unit_id,version_id,label,churn,size\na,v1,1,2,10\nb,v1,0,0,4\n";
        let data = FeatureDataset::from_csv(text.as_bytes()).unwrap();
        assert_eq!(data.len(), 2);
        assert_eq!(data.feature_names(), &["churn", "size"]);
        assert_eq!(data.samples()[0].label, Label::Buggy);

        let dup = "unit_id,version_id,label,churn\na,v1,1,2\na,v1,0,3\n";
        assert!(matches!(
            FeatureDataset::from_csv(dup.as_bytes()),
            Err(Error::DuplicateId(_))
        ));

        let bad_label = "unit_id,version_id,label,churn\na,v1,2,1\n";
        assert!(matches!(
            FeatureDataset::from_csv(bad_label.as_bytes()),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn deltas_concatenate_current_and_change() {
        let prev = dataset(
            &["churn", "size"],
            &[("a", "v1", &[1.0, 2.0], Label::Clean)],
        );
        let cur = dataset(
            &["churn", "size"],
            &[
                ("a", "v2", &[2.0, 2.0], Label::Buggy),
                ("b", "v2", &[3.0, 1.0], Label::Clean),
            ],
        );
        let out = build_feature_deltas(&cur, &prev).unwrap();
        assert_eq!(
            out.feature_names(),
            &["churn", "size", "churn_delta", "size_delta"]
        );
        assert_eq!(out.samples()[0].features, vec![2.0, 2.0, 1.0, 0.0]);
        assert_eq!(out.samples()[0].label, Label::Buggy);
        // Unit `b` is new: its delta is its full current value.
        assert_eq!(out.samples()[1].features, vec![3.0, 1.0, 3.0, 1.0]);
    }

    #[test]
    fn deltas_require_matching_feature_names() {
        let a = dataset(&["churn"], &[("a", "v1", &[1.0], Label::Clean)]);
        let b = dataset(&["size"], &[("a", "v1", &[1.0], Label::Clean)]);
        assert!(matches!(
            build_feature_deltas(&a, &b),
            Err(Error::FeatureNameMismatch(_))
        ));
    }

    #[test]
    fn smote_hits_the_target_count() {
        let mut rows: Vec<(&str, &str, Vec<f64>, Label)> = Vec::new();
        for i in 0..3 {
            rows.push(("b", "v", vec![i as f64, 0.0], Label::Buggy));
        }
        for i in 0..12 {
            rows.push(("c", "v", vec![10.0 + i as f64, 5.0], Label::Clean));
        }
        let data = FeatureDataset::new(
            vec!["x".into(), "y".into()],
            rows.iter()
                .enumerate()
                .map(|(i, (u, v, f, l))| FeatureSample {
                    unit_id: format!("{u}{i}"),
                    version_id: (*v).to_owned(),
                    features: f.clone(),
                    label: *l,
                })
                .collect(),
        )
        .unwrap();

        let out = smote_oversample(&data, 5, 0.5, 99).unwrap();
        // ceil(0.5 * 12 / 0.5) = 12 minority wanted, 3 exist: 9 synthetic.
        assert_eq!(out.len(), 24);
        assert_eq!(out.count(Label::Buggy), 12);
        assert_eq!(&out.samples()[..15], data.samples());
        assert!(out.samples()[15..]
            .iter()
            .all(|s| s.label == Label::Buggy));
    }

    #[test]
    fn smote_interpolates_on_the_segment() {
        let data = dataset(
            &["x", "y"],
            &[
                ("b0", "v", &[0.0, 0.0], Label::Buggy),
                ("b1", "v", &[2.0, 2.0], Label::Buggy),
                ("c0", "v", &[9.0, 0.0], Label::Clean),
                ("c1", "v", &[9.0, 1.0], Label::Clean),
                ("c2", "v", &[8.0, 0.5], Label::Clean),
                ("c3", "v", &[8.5, 0.5], Label::Clean),
            ],
        );
        let out = smote_oversample(&data, 1, 0.5, 7).unwrap();
        for s in out.samples().iter().skip(data.len()) {
            // Segment between (0,0) and (2,2): exact equality holds
            // because the endpoint deltas are powers of two.
            assert_eq!(s.features[0], s.features[1]);
            assert!(s.features[0] >= 0.0 && s.features[0] < 2.0);
        }
    }

    #[test]
    fn smote_returns_input_when_ratio_already_met() {
        let data = dataset(
            &["x"],
            &[
                ("b", "v", &[0.0], Label::Buggy),
                ("c", "v", &[1.0], Label::Clean),
            ],
        );
        let out = smote_oversample(&data, 5, 0.5, 1).unwrap();
        assert_eq!(out, data);
    }

    #[test]
    fn smote_replays_its_documented_draw_order() {
        let data = dataset(
            &["x", "y"],
            &[
                ("b0", "v", &[0.0, 0.0], Label::Buggy),
                ("b1", "v", &[4.0, 0.0], Label::Buggy),
                ("b2", "v", &[0.0, 4.0], Label::Buggy),
                ("c0", "v", &[20.0, 20.0], Label::Clean),
                ("c1", "v", &[21.0, 20.0], Label::Clean),
                ("c2", "v", &[20.0, 21.0], Label::Clean),
                ("c3", "v", &[21.0, 21.0], Label::Clean),
                ("c4", "v", &[22.0, 20.0], Label::Clean),
                ("c5", "v", &[22.0, 21.0], Label::Clean),
            ],
        );
        let k = 2;
        let seed = 55;
        let out = smote_oversample(&data, k, 0.5, seed).unwrap();
        let synth: Vec<&FeatureSample> = out.samples().iter().skip(data.len()).collect();
        assert_eq!(synth.len(), 3);

        // Independent replay: same documented neighbor sets and the same
        // one-index-one-factor draw sequence.
        let minority = [0usize, 1, 2];
        let (_, std_rows) = standardized_rows(&data);
        let neighbor_sets: Vec<Vec<usize>> = minority
            .iter()
            .map(|&i| {
                let mut d: Vec<(f64, usize)> = minority
                    .iter()
                    .filter(|&&j| j != i)
                    .map(|&j| (sq_dist(&std_rows[i], &std_rows[j]), j))
                    .collect();
                d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                d.truncate(k);
                d.into_iter().map(|(_, j)| j).collect()
            })
            .collect();
        let mut rng = rng_from_seed(seed);
        for (s, sample) in synth.iter().enumerate() {
            let base = &data.samples()[minority[s % 3]];
            let pick = uniform_index(&mut rng, k);
            let neighbor = &data.samples()[neighbor_sets[s % 3][pick]];
            let u = uniform_unit(&mut rng);
            let expect: Vec<f64> = base
                .features
                .iter()
                .zip(&neighbor.features)
                .map(|(b, n)| b + u * (n - b))
                .collect();
            assert_eq!(sample.features, expect);
        }
    }

    #[test]
    fn smote_rejects_degenerate_requests() {
        let one_buggy = dataset(
            &["x"],
            &[
                ("b", "v", &[0.0], Label::Buggy),
                ("c", "v", &[1.0], Label::Clean),
                ("d", "v", &[2.0], Label::Clean),
            ],
        );
        assert!(matches!(
            smote_oversample(&one_buggy, 5, 0.5, 1),
            Err(Error::InsufficientMinority(_))
        ));
        assert!(matches!(
            smote_oversample(&one_buggy, 0, 0.5, 1),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            smote_oversample(&one_buggy, 5, 1.5, 1),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn tomek_removes_the_clean_half_of_links() {
        let data = dataset(
            &["x"],
            &[
                ("c0", "v", &[0.0], Label::Clean),
                ("b1", "v", &[0.1], Label::Buggy),
                ("c2", "v", &[5.0], Label::Clean),
                ("c3", "v", &[5.1], Label::Clean),
            ],
        );
        let out = tomek_link_removal(&data);
        let ids: Vec<&str> = out.samples().iter().map(|s| s.unit_id.as_str()).collect();
        assert_eq!(ids, vec!["b1", "c2", "c3"]);
    }

    #[test]
    fn tomek_keeps_linkless_data_intact() {
        let data = dataset(
            &["x"],
            &[
                ("c0", "v", &[0.0], Label::Clean),
                ("c1", "v", &[0.1], Label::Clean),
                ("b2", "v", &[9.0], Label::Buggy),
                ("b3", "v", &[9.1], Label::Buggy),
            ],
        );
        assert_eq!(tomek_link_removal(&data), data);
    }

    #[test]
    fn training_separates_a_linear_problem() {
        let mut rows = Vec::new();
        for i in 0..6 {
            rows.push(FeatureSample {
                unit_id: format!("c{i}"),
                version_id: "v".into(),
                features: vec![-2.0 + 0.1 * i as f64],
                label: Label::Clean,
            });
            rows.push(FeatureSample {
                unit_id: format!("b{i}"),
                version_id: "v".into(),
                features: vec![2.0 - 0.1 * i as f64],
                label: Label::Buggy,
            });
        }
        let data = FeatureDataset::new(vec!["x".into()], rows).unwrap();
        let trained = train_classifier(&data, 1.0, &TrainingParams::default()).unwrap();
        for s in data.samples() {
            let score = trained.model.score(&s.features).unwrap();
            match s.label {
                Label::Buggy => assert!(score > 0.5, "{score}"),
                Label::Clean => assert!(score < 0.5, "{score}"),
            }
        }
        for pair in trained.loss_trace.windows(2) {
            assert!(pair[1] <= pair[0]);
        }
        // Separable data never converges in the strict sense (weights keep
        // growing), but the loss must have fallen well below ln 2.
        assert!(*trained.loss_trace.last().unwrap() < 0.1);

        // Swapping labels mirrors the scores around one half.
        let swapped = FeatureDataset::new(
            vec!["x".into()],
            data.samples()
                .iter()
                .map(|s| FeatureSample {
                    label: match s.label {
                        Label::Buggy => Label::Clean,
                        Label::Clean => Label::Buggy,
                    },
                    ..s.clone()
                })
                .collect(),
        )
        .unwrap();
        let mirrored = train_classifier(&swapped, 1.0, &TrainingParams::default()).unwrap();
        for s in data.samples() {
            let a = trained.model.score(&s.features).unwrap();
            let b = mirrored.model.score(&s.features).unwrap();
            assert!((a + b - 1.0).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn training_rejects_degenerate_inputs() {
        let single = dataset(&["x"], &[("a", "v", &[1.0], Label::Clean)]);
        assert!(matches!(
            train_classifier(&single, 1.0, &TrainingParams::default()),
            Err(Error::SingleClass)
        ));
        let ok = dataset(
            &["x"],
            &[
                ("a", "v", &[0.0], Label::Clean),
                ("b", "v", &[1.0], Label::Buggy),
            ],
        );
        assert!(matches!(
            train_classifier(&ok, 0.0, &TrainingParams::default()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn zero_model_scores_one_half_and_round_trips() {
        let model = ClassifierModel {
            feature_names: vec!["x".into()],
            standardization: Standardization {
                means: vec![0.0],
                scales: vec![1.0],
            },
            weights: vec![0.0],
            bias: 0.0,
            lambda: 1.0,
        };
        assert_eq!(model.score(&[3.7]).unwrap(), 0.5);

        let sloped = ClassifierModel {
            weights: vec![2.0],
            bias: -1.0,
            ..model.clone()
        };
        let expect = 1.0 / (1.0 + (-1.0_f64).exp());
        assert!((sloped.score(&[1.0]).unwrap() - expect).abs() < 1e-12);

        let mut buf = Vec::new();
        sloped.save_json(&mut buf).unwrap();
        let back = ClassifierModel::load_json(buf.as_slice()).unwrap();
        assert_eq!(back, sloped);
    }

    #[test]
    fn prediction_checks_feature_names_and_stays_open_interval() {
        let data = dataset(
            &["x"],
            &[
                ("a", "v", &[-500.0], Label::Clean),
                ("b", "v", &[500.0], Label::Buggy),
                ("c", "v", &[400.0], Label::Buggy),
            ],
        );
        let trained = train_classifier(&data, 1.0, &TrainingParams::default()).unwrap();
        let fp = predict_fault_proneness(&trained.model, &data).unwrap();
        for &s in fp.scores() {
            assert!(s > 0.0 && s < 1.0);
        }

        let renamed = dataset(&["y"], &[("a", "v", &[1.0], Label::Clean)]);
        assert!(matches!(
            predict_fault_proneness(&trained.model, &renamed),
            Err(Error::FeatureNameMismatch(_))
        ));
    }

    #[test]
    fn bug_hit_is_a_strict_comparison() {
        let fp = FaultPronenessVector::new(vec![0.31, 0.3, 0.1]).unwrap();
        let ids = vec!["a".to_owned(), "b".to_owned(), "c".to_owned()];
        let hit: BTreeSet<String> = ["a".to_owned()].into();
        assert!(bug_hit(&fp, &ids, &hit, 0.3).unwrap());
        let miss: BTreeSet<String> = ["b".to_owned()].into();
        assert!(!bug_hit(&fp, &ids, &miss, 0.3).unwrap());
        let empty: BTreeSet<String> = BTreeSet::new();
        assert!(!bug_hit(&fp, &ids, &empty, 0.3).unwrap());
        let unknown: BTreeSet<String> = ["zz".to_owned()].into();
        assert!(matches!(
            bug_hit(&fp, &ids, &unknown, 0.3),
            Err(Error::UnknownUnit(_))
        ));
    }

    #[test]
    fn lambda_grid_search_returns_a_grid_member() {
        let mut rows = Vec::new();
        let mut rng = rng_from_seed(31);
        for i in 0..40 {
            let buggy = i % 4 == 0;
            let center = if buggy { 1.0 } else { -1.0 };
            rows.push(FeatureSample {
                unit_id: format!("u{i}"),
                version_id: "v".into(),
                features: vec![center + uniform_unit(&mut rng) * 2.0 - 1.0],
                label: if buggy { Label::Buggy } else { Label::Clean },
            });
        }
        let data = FeatureDataset::new(vec!["x".into()], rows).unwrap();
        let grid = [1.0, 3.0, 10.0];
        let report = tune_lambda(&data, &grid, &TrainingParams::default(), 0.25, 5).unwrap();
        assert!(grid.contains(&report.best_lambda));
        assert_eq!(report.candidates.len(), 3);
        assert!(report.best_f_score >= 0.0 && report.best_f_score <= 1.0);
        assert_eq!(report.model.model.lambda, report.best_lambda);
        let rerun = tune_lambda(&data, &grid, &TrainingParams::default(), 0.25, 5).unwrap();
        assert_eq!(rerun.best_lambda, report.best_lambda);
    }

    proptest! {
        #[test]
        fn smote_preserves_originals_and_adds_only_buggy(seed in 0u64..150) {
            let mut rng = rng_from_seed(seed);
            let n_min = 2 + uniform_index(&mut rng, 4);
            let n_maj = 4 + uniform_index(&mut rng, 8);
            let mut rows = Vec::new();
            for i in 0..n_min {
                rows.push(FeatureSample {
                    unit_id: format!("b{i}"),
                    version_id: "v".into(),
                    features: vec![uniform_unit(&mut rng), uniform_unit(&mut rng)],
                    label: Label::Buggy,
                });
            }
            for i in 0..n_maj {
                rows.push(FeatureSample {
                    unit_id: format!("c{i}"),
                    version_id: "v".into(),
                    features: vec![5.0 + uniform_unit(&mut rng), uniform_unit(&mut rng)],
                    label: Label::Clean,
                });
            }
            let data = FeatureDataset::new(vec!["x".into(), "y".into()], rows).unwrap();
            let out = smote_oversample(&data, 3, 0.5, seed).unwrap();
            prop_assert_eq!(&out.samples()[..data.len()], data.samples());
            for s in out.samples().iter().skip(data.len()) {
                prop_assert_eq!(s.label, Label::Buggy);
            }
            let ratio = out.count(Label::Buggy) as f64 / out.len() as f64;
            prop_assert!(ratio >= 0.5);
        }

        #[test]
        fn tomek_never_drops_buggy_rows(seed in 0u64..150) {
            let mut rng = rng_from_seed(seed);
            let n = 4 + uniform_index(&mut rng, 12);
            let rows: Vec<FeatureSample> = (0..n).map(|i| FeatureSample {
                unit_id: format!("u{i}"),
                version_id: "v".into(),
                features: vec![uniform_unit(&mut rng), uniform_unit(&mut rng)],
                label: if uniform_index(&mut rng, 3) == 0 { Label::Buggy } else { Label::Clean },
            }).collect();
            let data = FeatureDataset::new(vec!["x".into(), "y".into()], rows).unwrap();
            let out = tomek_link_removal(&data);
            prop_assert_eq!(out.count(Label::Buggy), data.count(Label::Buggy));
            prop_assert!(out.len() <= data.len());
            // Survivors keep their relative order.
            let mut cursor = data.samples().iter();
            for s in out.samples() {
                prop_assert!(cursor.any(|orig| orig == s));
            }
        }

        #[test]
        fn loss_trace_is_monotone_on_random_data(seed in 0u64..60) {
            let mut rng = rng_from_seed(seed);
            let n = 6 + uniform_index(&mut rng, 20);
            let rows: Vec<FeatureSample> = (0..n).map(|i| FeatureSample {
                unit_id: format!("u{i}"),
                version_id: "v".into(),
                features: vec![uniform_unit(&mut rng) * 4.0, uniform_unit(&mut rng) * 4.0],
                label: if i % 3 == 0 { Label::Buggy } else { Label::Clean },
            }).collect();
            let data = FeatureDataset::new(vec!["x".into(), "y".into()], rows).unwrap();
            let params = TrainingParams { max_iterations: 60, ..TrainingParams::default() };
            let trained = train_classifier(&data, 2.0, &params).unwrap();
            for pair in trained.loss_trace.windows(2) {
                prop_assert!(pair[1] <= pair[0]);
            }
        }
    }
}
