//! Dataset discovery and training-plan construction.
//!
//! A dataset is a directory tree: one subdirectory per project, one
//! subdirectory per version inside it, and three files per version
//! (`coverage.csv`, `features.csv`, `outcome.json`). Version directories
//! are ordered numerically when every name parses as an integer and
//! lexicographically otherwise, so `1, 2, ..., 10` and `v1.2.0`-style
//! names both come out in a stable, intentional order.
//!
//! Training for a target version may use every version of *other*
//! projects plus the target project's *earlier* versions, never the
//! target version itself or anything after it. The plan builder encodes
//! that rule and [`verify_no_leakage`] re-checks it independently before
//! any file is read; a violation is a pipeline bug, not a data problem.

use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use suiterank::defect::FeatureDataset;
use suiterank::{CoverageFormat, CoverageMatrix, VersionOutcome};

use crate::error::{CliError, Result};

#[derive(Debug, Clone)]
pub struct VersionRef {
    pub id: String,
    pub dir: PathBuf,
}

#[derive(Debug, Clone)]
pub struct ProjectData {
    pub name: String,
    pub versions: Vec<VersionRef>,
}

/// Locate every configured project and enumerate its versions in order.
pub fn discover(dataset_root: &Path, projects: &[String]) -> Result<Vec<ProjectData>> {
    projects
        .iter()
        .map(|name| {
            let dir = dataset_root.join(name);
            if !dir.is_dir() {
                return Err(CliError::Data(format!(
                    "project `{name}` not found at {}",
                    dir.display()
                )));
            }
            let mut ids = Vec::new();
            let entries = fs::read_dir(&dir)
                .map_err(|e| CliError::Data(format!("cannot list {}: {e}", dir.display())))?;
            for entry in entries {
                let entry = entry
                    .map_err(|e| CliError::Data(format!("cannot list {}: {e}", dir.display())))?;
                if entry.path().is_dir() {
                    ids.push(entry.file_name().to_string_lossy().into_owned());
                }
            }
            if ids.is_empty() {
                return Err(CliError::Data(format!(
                    "project `{name}` has no version directories under {}",
                    dir.display()
                )));
            }
            order_versions(&mut ids);
            let versions = ids
                .into_iter()
                .map(|id| VersionRef {
                    dir: dir.join(&id),
                    id,
                })
                .collect();
            Ok(ProjectData {
                name: name.clone(),
                versions,
            })
        })
        .collect()
}

/// Numeric order when every id is an integer, lexicographic otherwise.
fn order_versions(ids: &mut [String]) {
    if let Ok(mut numeric) = ids
        .iter()
        .map(|id| id.parse::<u64>().map(|n| (n, id.clone())))
        .collect::<std::result::Result<Vec<_>, _>>()
    {
        numeric.sort();
        for (slot, (_, id)) in ids.iter_mut().zip(numeric) {
            *slot = id;
        }
    } else {
        ids.sort();
    }
}

/// Which version indices of a project get evaluated. The window covers
/// the last `window` versions when given, otherwise every version after
/// the first (the first has no prior history of its own).
pub fn eval_range(n_versions: usize, window: Option<usize>) -> std::ops::Range<usize> {
    let w = match window {
        Some(w) => w.min(n_versions),
        None => n_versions.saturating_sub(1).max(usize::from(n_versions == 1)),
    };
    (n_versions - w)..n_versions
}

/// The labeled versions a target version may train on, as
/// (project name, version index) pairs in configured project order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingPlan {
    pub target_project: String,
    pub target_index: usize,
    pub sources: Vec<(String, usize)>,
}

pub fn training_plan(
    projects: &[ProjectData],
    target_project: &str,
    target_index: usize,
) -> TrainingPlan {
    let mut sources = Vec::new();
    for project in projects {
        let limit = if project.name == target_project {
            target_index
        } else {
            project.versions.len()
        };
        for index in 0..limit {
            sources.push((project.name.clone(), index));
        }
    }
    TrainingPlan {
        target_project: target_project.to_owned(),
        target_index,
        sources,
    }
}

/// Independent re-check of the temporal hygiene rule: no source may be
/// the target version or any later version of the target's project.
pub fn verify_no_leakage(plan: &TrainingPlan) -> Result<()> {
    for (project, index) in &plan.sources {
        if project == &plan.target_project && *index >= plan.target_index {
            return Err(CliError::Internal(format!(
                "training plan for {}[{}] includes its own version index {index}; \
                 labels from the evaluated version or its future must never be read",
                plan.target_project, plan.target_index
            )));
        }
    }
    Ok(())
}

pub fn load_coverage(version: &VersionRef) -> Result<CoverageMatrix> {
    let path = version.dir.join("coverage.csv");
    let file = File::open(&path)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    CoverageMatrix::load(BufReader::new(file), CoverageFormat::Csv)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn load_features(version: &VersionRef) -> Result<FeatureDataset> {
    let path = version.dir.join("features.csv");
    let file = File::open(&path)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    FeatureDataset::from_csv(BufReader::new(file))
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn load_outcome(version: &VersionRef) -> Result<VersionOutcome> {
    let path = version.dir.join("outcome.json");
    let file = File::open(&path)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    VersionOutcome::from_json(BufReader::new(file))
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}
