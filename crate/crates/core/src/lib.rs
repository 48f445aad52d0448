//! Regression test prioritization from coverage and bug history.
//!
//! The pipeline runs in three stages, each usable on its own:
//!
//! 1. [`defect`] learns per-unit fault proneness from labeled feature
//!    history (deltas, minority oversampling, boundary cleaning, a
//!    class-weighted logistic model);
//! 2. [`strategies`] and [`cluster_strategy`] turn a coverage matrix,
//!    optionally weighted by those scores, into a test order: greedy
//!    total/additional coverage, a random baseline, and a clustering
//!    variant that spreads early picks across dissimilar tests;
//! 3. [`evaluation`] scores orders against observed failures (first-fail
//!    position, APFD) and compares strategies with a paired signed-rank
//!    test.
//!
//! Everything downstream of a seed is deterministic: reruns with the same
//! inputs and seed produce byte-identical artifacts.

pub mod cluster_strategy;
pub mod clustering;
pub mod coverage;
pub mod defect;
pub mod error;
pub mod evaluation;
pub mod order;
pub mod rng;
pub mod stats;
pub mod strategies;

pub use cluster_strategy::{
    prioritize_clustering, ClusterStrategyConfig, InternalMode, ThresholdRule,
};
pub use clustering::{agglomerative_cluster, pairwise_distances, ClusterAssignment};
pub use coverage::{CoverageFormat, CoverageMatrix, FaultPronenessVector};
pub use defect::{
    build_feature_deltas, predict_fault_proneness, smote_oversample, tomek_link_removal,
    train_classifier, tune_lambda, ClassifierModel, FeatureDataset, Label, TrainingParams,
};
pub use error::{Error, Result};
pub use evaluation::{aggregate_report, apfd, first_fail, EvaluationReport, VersionOutcome};
pub use order::PrioritizedOrder;
pub use stats::{percentile_nearest_rank, wilcoxon_signed_rank, WilcoxonResult};
pub use strategies::{
    prioritize_additional, prioritize_random, prioritize_total, StrategyConfig, TieBreak,
};
