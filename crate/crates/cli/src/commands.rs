//! The four pipeline subcommands.
//!
//! `predict` trains one fault-proneness model per evaluated version and
//! writes its scores; `prioritize` turns coverage plus optional scores
//! into one order file per strategy; `evaluate` scores the order files
//! against recorded outcomes and writes the report tables; `pipeline`
//! chains all three. Commands never modify the dataset: everything they
//! produce lands under the configured output directory, one
//! `<project>/<version>` subdirectory per evaluated cell, with fixed
//! file names so reruns overwrite their own artifacts.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use suiterank::defect::{
    build_feature_deltas, predict_fault_proneness, smote_oversample, tomek_link_removal,
    train_classifier, FeatureDataset,
};
use suiterank::evaluation::{
    apfd_by_ids, first_fail_by_ids, write_pairwise_csv, write_per_version_csv, write_report_csv,
    VersionScore,
};
use suiterank::order::read_order_csv;
use suiterank::rng::derive_seed;
use suiterank::strategies::TieBreak;
use suiterank::{
    aggregate_report, prioritize_additional, prioritize_clustering, prioritize_random,
    prioritize_total, ClusterStrategyConfig, CoverageMatrix, Error as CoreError,
    FaultPronenessVector, InternalMode, PrioritizedOrder, StrategyConfig,
};

use crate::config::{PipelineConfig, StrategySpec};
use crate::dataset::{
    self, discover, eval_range, training_plan, verify_no_leakage, ProjectData, VersionRef,
};
use crate::error::{CliError, Result};

/// Marker written instead of scores when a version cannot be trained for.
const SKIP_MARKER: &str = "skipped.txt";

fn cell_dir(config: &PipelineConfig, project: &str, version: &str) -> PathBuf {
    config.output_dir.join(project).join(version)
}

fn create_writer(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::Data(format!("cannot create {}: {e}", parent.display())))?;
    }
    let file = File::create(path)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
    Ok(BufWriter::new(file))
}

fn remove_if_present(path: &Path) -> Result<()> {
    if path.exists() {
        fs::remove_file(path)
            .map_err(|e| CliError::Data(format!("cannot remove {}: {e}", path.display())))?;
    }
    Ok(())
}

/// Feature deltas for one version: current features minus the previous
/// version's, with an empty baseline for a project's first version.
fn version_deltas(project: &ProjectData, index: usize) -> Result<FeatureDataset> {
    let current = dataset::load_features(&project.versions[index])?;
    let previous = if index > 0 {
        dataset::load_features(&project.versions[index - 1])?
    } else {
        FeatureDataset::new(current.feature_names().to_vec(), Vec::new())
            .map_err(CliError::from)?
    };
    build_feature_deltas(&current, &previous).map_err(|e| {
        CliError::Data(format!(
            "feature deltas for {}/{}: {e}",
            project.name, project.versions[index].id
        ))
    })
}

/// Train one model per evaluated version and write its unit scores.
///
/// Training data for version i of a project is every version of the
/// other configured projects plus versions 1..i of the project itself;
/// the evaluated version's labels are never read. Versions that cannot
/// be trained for (no sources, too few buggy samples, single-class
/// data) are skipped with a warning and a marker file so `prioritize`
/// can tell a skipped version from a forgotten `predict` run.
pub fn cmd_predict(config: &PipelineConfig) -> Result<()> {
    let projects = discover(&config.dataset_root, &config.projects)?;
    let params = config.training.to_params();

    for project in &projects {
        for vi in eval_range(project.versions.len(), config.eval_last_versions) {
            let version = &project.versions[vi];
            let cell = format!("{}/{}", project.name, version.id);
            let dir = cell_dir(config, &project.name, &version.id);

            let plan = training_plan(&projects, &project.name, vi);
            verify_no_leakage(&plan)?;

            if plan.sources.is_empty() {
                skip_cell(&dir, &cell, "no training sources (single project, first version)")?;
                continue;
            }

            let mut parts = Vec::with_capacity(plan.sources.len());
            for (source_project, source_index) in &plan.sources {
                // Plans only name configured projects, so the lookup cannot fail.
                let source = projects
                    .iter()
                    .find(|p| &p.name == source_project)
                    .ok_or_else(|| {
                        CliError::Internal(format!("plan names unknown project {source_project}"))
                    })?;
                parts.push(version_deltas(source, *source_index)?);
            }
            let refs: Vec<&FeatureDataset> = parts.iter().collect();
            let training = FeatureDataset::concat(&refs)
                .map_err(|e| CliError::Data(format!("training data for {cell}: {e}")))?;

            let smote_seed = derive_seed(config.seed, &format!("smote/{cell}"));
            let balanced =
                match smote_oversample(&training, config.smote_k, config.smote_target_ratio, smote_seed) {
                    Ok(balanced) => balanced,
                    Err(CoreError::InsufficientMinority(why)) => {
                        skip_cell(&dir, &cell, &format!("cannot oversample: {why}"))?;
                        continue;
                    }
                    Err(e) => return Err(CliError::Data(format!("oversampling for {cell}: {e}"))),
                };
            let cleaned = tomek_link_removal(&balanced);

            let trained = match train_classifier(&cleaned, config.lambda, &params) {
                Ok(trained) => trained,
                Err(CoreError::SingleClass) => {
                    skip_cell(&dir, &cell, "training data has a single label class")?;
                    continue;
                }
                Err(e) => return Err(CliError::Data(format!("training for {cell}: {e}"))),
            };

            let target = version_deltas(project, vi)?;
            let scores = predict_fault_proneness(&trained.model, &target)
                .map_err(|e| CliError::Data(format!("scoring {cell}: {e}")))?;

            remove_if_present(&dir.join(SKIP_MARKER))?;
            let scores_path = dir.join("scores.csv");
            scores
                .write_csv(&target.unit_ids(), create_writer(&scores_path)?)
                .map_err(|e| CliError::Data(format!("{}: {e}", scores_path.display())))?;
            let model_path = dir.join("model.json");
            trained
                .model
                .save_json(create_writer(&model_path)?)
                .map_err(|e| CliError::Data(format!("{}: {e}", model_path.display())))?;
        }
    }
    Ok(())
}

/// Record why a cell has no scores and clear any stale artifacts.
fn skip_cell(dir: &Path, cell: &str, reason: &str) -> Result<()> {
    eprintln!("warning: skipping prediction for {cell}: {reason}");
    remove_if_present(&dir.join("scores.csv"))?;
    remove_if_present(&dir.join("model.json"))?;
    let mut writer = create_writer(&dir.join(SKIP_MARKER))?;
    use std::io::Write as _;
    writeln!(writer, "prediction skipped: {reason}")
        .map_err(|e| CliError::Data(format!("cannot write skip marker for {cell}: {e}")))?;
    Ok(())
}

/// Write one order file per configured strategy for every evaluated
/// version. Cells are independent, so they run in parallel; file names
/// are fixed (`order_<strategy>.csv`), so the layout is deterministic
/// regardless of scheduling.
pub fn cmd_prioritize(config: &PipelineConfig) -> Result<()> {
    let projects = discover(&config.dataset_root, &config.projects)?;
    let needs_fp = config.uses_fault_proneness();

    let mut cells = Vec::new();
    for project in &projects {
        for vi in eval_range(project.versions.len(), config.eval_last_versions) {
            cells.push((project.name.clone(), project.versions[vi].clone()));
        }
    }

    let warnings: Vec<Vec<String>> = cells
        .par_iter()
        .map(|(project, version)| prioritize_cell(config, project, version, needs_fp))
        .collect::<Result<_>>()?;
    for warning in warnings.into_iter().flatten() {
        eprintln!("warning: {warning}");
    }
    Ok(())
}

fn prioritize_cell(
    config: &PipelineConfig,
    project: &str,
    version: &VersionRef,
    needs_fp: bool,
) -> Result<Vec<String>> {
    let cell = format!("{project}/{}", version.id);
    let dir = cell_dir(config, project, &version.id);
    let matrix = dataset::load_coverage(version)?;

    let fp = if needs_fp {
        let scores_path = dir.join("scores.csv");
        if !scores_path.exists() {
            if dir.join(SKIP_MARKER).exists() {
                // Prediction was skipped on purpose; drop the whole cell so
                // the evaluation grid stays rectangular across strategies.
                return Ok(vec![format!(
                    "skipping {cell}: prediction was skipped, no order files written"
                )]);
            }
            return Err(CliError::Data(format!(
                "no fault-proneness scores for {cell} (expected {}); \
                 run `suiterank predict` first",
                scores_path.display()
            )));
        }
        let file = File::open(&scores_path)
            .map_err(|e| CliError::Data(format!("cannot open {}: {e}", scores_path.display())))?;
        Some(
            FaultPronenessVector::from_csv_reconciled(BufReader::new(file), matrix.unit_ids())
                .map_err(|e| CliError::Data(format!("{}: {e}", scores_path.display())))?,
        )
    } else {
        None
    };

    for spec in &config.strategies {
        let order = run_strategy(spec, config, &matrix, fp.as_ref(), &cell)?;
        let path = dir.join(format!("order_{}.csv", spec.name));
        order
            .write_csv(matrix.test_ids(), create_writer(&path)?)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    }
    Ok(Vec::new())
}

fn run_strategy(
    spec: &StrategySpec,
    config: &PipelineConfig,
    matrix: &CoverageMatrix,
    fp: Option<&FaultPronenessVector>,
    cell: &str,
) -> Result<PrioritizedOrder> {
    let plain = StrategyConfig::default();
    let weights = |name: &str| {
        fp.ok_or_else(|| {
            CliError::Internal(format!("{name} for {cell} reached without scores"))
        })
    };
    let order = match spec.name.as_str() {
        "random" => prioritize_random(
            matrix.n_tests(),
            derive_seed(config.seed, &format!("random/{cell}")),
        ),
        "total" => prioritize_total(matrix, None, &plain),
        "additional" => prioritize_additional(matrix, None, &plain),
        "total_fp" => prioritize_total(matrix, Some(weights("total_fp")?), &plain),
        "additional_fp" => prioritize_additional(matrix, Some(weights("additional_fp")?), &plain),
        "clustering" => prioritize_clustering(matrix, None, &cluster_config(spec, config)),
        "clustering_fp" => prioritize_clustering(
            matrix,
            Some(weights("clustering_fp")?),
            &cluster_config(spec, config),
        ),
        other => {
            return Err(CliError::Internal(format!(
                "unvalidated strategy `{other}` reached the runner"
            )))
        }
    };
    order.map_err(|e| CliError::Data(format!("strategy {} on {cell}: {e}", spec.name)))
}

fn cluster_config(spec: &StrategySpec, config: &PipelineConfig) -> ClusterStrategyConfig {
    ClusterStrategyConfig {
        k: spec.k.unwrap_or(config.k),
        threshold: config.threshold.to_rule(),
        internal_mode: spec
            .internal_mode
            .map(|m| m.to_mode())
            .unwrap_or(InternalMode::Total),
        tie_break: TieBreak::ByIndex,
        seed: None,
        fp_weighted_batches: spec.fp_weighted_batches.unwrap_or(false),
    }
}

/// Score every order file against the recorded outcomes and write the
/// report tables: per-project and overall mean first-fail positions,
/// pairwise significance tests, and the raw per-version grid.
pub fn cmd_evaluate(config: &PipelineConfig) -> Result<()> {
    let projects = discover(&config.dataset_root, &config.projects)?;
    let names = config.strategy_names();
    let mut scores = Vec::new();

    for project in &projects {
        for vi in eval_range(project.versions.len(), config.eval_last_versions) {
            let version = &project.versions[vi];
            let cell = format!("{}/{}", project.name, version.id);
            let dir = cell_dir(config, &project.name, &version.id);

            let present: Vec<bool> = names
                .iter()
                .map(|name| dir.join(format!("order_{name}.csv")).exists())
                .collect();
            if present.iter().all(|p| !p) {
                eprintln!(
                    "warning: skipping {cell}: no order files under {} \
                     (was the version skipped by predict?)",
                    dir.display()
                );
                continue;
            }
            if let Some(missing) = present.iter().position(|p| !p) {
                return Err(CliError::Data(format!(
                    "order file for strategy `{}` is missing in {}; \
                     run `suiterank prioritize` with the same strategy list",
                    names[missing],
                    dir.display()
                )));
            }

            let outcome = dataset::load_outcome(version)?;
            if outcome.fault_count() == 0 {
                eprintln!("warning: skipping {cell}: no faults recorded");
                continue;
            }
            let matrix = dataset::load_coverage(version)?;
            let suite: BTreeSet<&str> = matrix.test_ids().iter().map(String::as_str).collect();

            for name in &names {
                let path = dir.join(format!("order_{name}.csv"));
                let file = File::open(&path)
                    .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
                let order_ids = read_order_csv(BufReader::new(file))
                    .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
                let ordered: BTreeSet<&str> = order_ids.iter().map(String::as_str).collect();
                if ordered != suite {
                    return Err(CliError::Data(format!(
                        "{} does not cover the test suite in {}; \
                         rerun `suiterank prioritize` against the current dataset",
                        path.display(),
                        cell
                    )));
                }
                let first_fail_pct = first_fail_by_ids(&order_ids, outcome.failing_tests())
                    .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
                let apfd = apfd_by_ids(&order_ids, outcome.fault_map())
                    .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
                scores.push(VersionScore {
                    project: project.name.clone(),
                    version_id: version.id.clone(),
                    strategy: name.clone(),
                    first_fail_pct,
                    apfd,
                });
            }
        }
    }

    let report = aggregate_report(&scores, &names)
        .map_err(|e| CliError::Data(format!("aggregating results: {e}")))?;

    let report_path = config.output_dir.join("report.csv");
    write_report_csv(&report, create_writer(&report_path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", report_path.display())))?;
    let pairwise_path = config.output_dir.join("pairwise.csv");
    write_pairwise_csv(&report, create_writer(&pairwise_path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", pairwise_path.display())))?;
    let per_version_path = config.output_dir.join("per_version.csv");
    write_per_version_csv(&report, create_writer(&per_version_path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", per_version_path.display())))?;

    println!(
        "wrote {}, {}, {}",
        report_path.display(),
        pairwise_path.display(),
        per_version_path.display()
    );
    Ok(())
}

/// Predict, prioritize, and evaluate in one go.
pub fn cmd_pipeline(config: &PipelineConfig) -> Result<()> {
    cmd_predict(config)?;
    cmd_prioritize(config)?;
    cmd_evaluate(config)
}
