//! Pipeline configuration: one JSON file drives every subcommand.
//!
//! The config names the dataset root, the projects and strategies to run,
//! the clustering and classifier knobs, and a single seed from which all
//! per-cell randomness is derived. Command-line flags can narrow the
//! project list, swap the strategy list, or override seed and output
//! directory without editing the file.

use std::collections::BTreeSet;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use suiterank::defect::TrainingParams;
use suiterank::{InternalMode, ThresholdRule};

use crate::error::{CliError, Result};

/// Every strategy name the pipeline knows how to run.
pub const STRATEGY_NAMES: [&str; 7] = [
    "random",
    "total",
    "additional",
    "clustering",
    "total_fp",
    "additional_fp",
    "clustering_fp",
];

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Directory holding one subdirectory per project.
    pub dataset_root: PathBuf,
    pub projects: Vec<String>,
    pub strategies: Vec<StrategySpec>,
    /// Default cluster count for the clustering strategies.
    pub k: usize,
    pub threshold: ThresholdConfig,
    /// Class weight applied to buggy samples during training.
    pub lambda: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Evaluate only the last N versions of each project; all but the
    /// first when absent.
    #[serde(default)]
    pub eval_last_versions: Option<usize>,
    #[serde(default = "default_smote_k")]
    pub smote_k: usize,
    #[serde(default = "default_smote_ratio")]
    pub smote_target_ratio: f64,
    #[serde(default)]
    pub training: TrainingConfig,
}

fn default_smote_k() -> usize {
    5
}

fn default_smote_ratio() -> f64 {
    0.25
}

/// One strategy to run, with optional clustering overrides. The non-name
/// fields only apply to the clustering strategies and default to the
/// top-level `k`, plain total ordering inside clusters, and unweighted
/// round-robin batches.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySpec {
    pub name: String,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub internal_mode: Option<InternalModeConfig>,
    #[serde(default)]
    pub fp_weighted_batches: Option<bool>,
}

impl StrategySpec {
    pub fn bare(name: &str) -> Self {
        StrategySpec {
            name: name.to_owned(),
            k: None,
            internal_mode: None,
            fp_weighted_batches: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InternalModeConfig {
    Total,
    FpRank,
}

impl InternalModeConfig {
    pub fn to_mode(self) -> InternalMode {
        match self {
            InternalModeConfig::Total => InternalMode::Total,
            InternalModeConfig::FpRank => InternalMode::FpRank,
        }
    }
}

/// Override threshold on fault-proneness weighted coverage; tests at or
/// above it are forced into distinct clusters.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdConfig {
    pub mode: ThresholdMode,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    Absolute,
    Percentile,
}

impl ThresholdConfig {
    pub fn to_rule(self) -> ThresholdRule {
        match self.mode {
            ThresholdMode::Absolute => ThresholdRule::Absolute(self.value),
            ThresholdMode::Percentile => ThresholdRule::Percentile(self.value),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_learning_rate() -> f64 {
    1.0
}

fn default_max_iterations() -> usize {
    500
}

fn default_tolerance() -> f64 {
    1e-9
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: default_learning_rate(),
            max_iterations: default_max_iterations(),
            tolerance: default_tolerance(),
        }
    }
}

impl TrainingConfig {
    pub fn to_params(self) -> TrainingParams {
        TrainingParams {
            learning_rate: self.learning_rate,
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
        }
    }
}

impl PipelineConfig {
    /// Read and validate a config file. Relative `dataset_root` and
    /// `output_dir` stay relative to the working directory, not the
    /// config file, so fixtures can be copied wholesale.
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path)
            .map_err(|e| CliError::Config(format!("cannot open config {}: {e}", path.display())))?;
        let config: PipelineConfig = serde_json::from_reader(file)
            .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.projects.is_empty() {
            return Err(CliError::Config("at least one project is required".into()));
        }
        let unique: BTreeSet<&String> = self.projects.iter().collect();
        if unique.len() != self.projects.len() {
            return Err(CliError::Config("duplicate project names".into()));
        }
        if self.strategies.is_empty() {
            return Err(CliError::Config("at least one strategy is required".into()));
        }
        let mut seen = BTreeSet::new();
        for spec in &self.strategies {
            if !STRATEGY_NAMES.contains(&spec.name.as_str()) {
                return Err(CliError::Config(format!(
                    "unknown strategy `{}`; known: {}",
                    spec.name,
                    STRATEGY_NAMES.join(", ")
                )));
            }
            if !seen.insert(spec.name.clone()) {
                return Err(CliError::Config(format!("strategy `{}` listed twice", spec.name)));
            }
            if spec.k == Some(0) {
                return Err(CliError::Config(format!("strategy `{}` has k = 0", spec.name)));
            }
            let wants_scores = spec.internal_mode == Some(InternalModeConfig::FpRank)
                || spec.fp_weighted_batches == Some(true);
            if wants_scores && !spec.name.ends_with("_fp") {
                return Err(CliError::Config(format!(
                    "strategy `{}` asks for fault-proneness ordering but is not an _fp strategy",
                    spec.name
                )));
            }
        }
        if self.k == 0 {
            return Err(CliError::Config("k must be at least 1".into()));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(CliError::Config(format!("lambda must be finite and positive, got {}", self.lambda)));
        }
        match self.threshold.mode {
            ThresholdMode::Percentile => {
                if !(0.0..=100.0).contains(&self.threshold.value) {
                    return Err(CliError::Config(format!(
                        "percentile threshold must lie in [0, 100], got {}",
                        self.threshold.value
                    )));
                }
            }
            ThresholdMode::Absolute => {
                if !self.threshold.value.is_finite() {
                    return Err(CliError::Config("absolute threshold must be finite".into()));
                }
            }
        }
        if self.eval_last_versions == Some(0) {
            return Err(CliError::Config("eval_last_versions must be at least 1".into()));
        }
        if self.smote_k == 0 {
            return Err(CliError::Config("smote_k must be at least 1".into()));
        }
        if !(self.smote_target_ratio > 0.0 && self.smote_target_ratio < 1.0) {
            return Err(CliError::Config(format!(
                "smote_target_ratio must lie in (0, 1), got {}",
                self.smote_target_ratio
            )));
        }
        let t = &self.training;
        if !(t.learning_rate > 0.0 && t.learning_rate.is_finite()) {
            return Err(CliError::Config("training.learning_rate must be positive".into()));
        }
        if t.max_iterations == 0 {
            return Err(CliError::Config("training.max_iterations must be at least 1".into()));
        }
        if !(t.tolerance >= 0.0 && t.tolerance.is_finite()) {
            return Err(CliError::Config("training.tolerance must be non-negative".into()));
        }
        Ok(())
    }

    /// Apply command-line overrides, then re-validate.
    pub fn apply_overrides(
        &mut self,
        projects: &[String],
        strategies: Option<&[String]>,
        seed: Option<u64>,
        output_dir: Option<PathBuf>,
    ) -> Result<()> {
        if !projects.is_empty() {
            for name in projects {
                if !self.projects.contains(name) {
                    return Err(CliError::Config(format!(
                        "--project {name} is not in the configured project list"
                    )));
                }
            }
            // Keep config order; the flag only filters.
            self.projects.retain(|p| projects.contains(p));
        }
        if let Some(names) = strategies {
            self.strategies = names.iter().map(|n| StrategySpec::bare(n)).collect();
        }
        if let Some(seed) = seed {
            self.seed = seed;
        }
        if let Some(dir) = output_dir {
            self.output_dir = dir;
        }
        self.validate()
    }

    pub fn strategy_names(&self) -> Vec<String> {
        self.strategies.iter().map(|s| s.name.clone()).collect()
    }

    /// Does any configured strategy need fault-proneness scores?
    pub fn uses_fault_proneness(&self) -> bool {
        self.strategies.iter().any(|s| s.name.ends_with("_fp"))
    }
}
