//! JSON result schema shared by the three verbs.
//!
//! One schema, versioned; everything except the `timing` block is a
//! deterministic function of the configuration, so two runs with the same
//! config and seed produce byte-identical payloads modulo timing.

use std::io::Write;
use std::path::Path;

use meda::alignment::ADistanceReport;
use meda::learner::AdaptationOutcome;
use meda::{MedaError, Result};
use serde::Serialize;

use crate::config::RunConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub mu: f64,
    /// Fraction of target labels unchanged from the previous iteration.
    pub label_agreement: f64,
    /// Pseudo-label accuracy (when target truth labels are available).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    /// A-distance breakdown (absent under fixed μ).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_distance: Option<ADistanceReport>,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct Timing {
    pub load_seconds: f64,
    pub manifold_seconds: f64,
    pub fit_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MuGridEntry {
    pub mu: f64,
    pub final_accuracy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub artifact: &'static str,
    pub artifact_version: &'static str,
    pub schema_version: u32,
    pub task: String,
    pub config: RunConfig,
    pub source_samples: usize,
    pub target_samples: usize,
    pub classes: usize,
    pub iterations: Vec<IterationRecord>,
    pub iterations_run: usize,
    pub converged: bool,
    pub mu_final: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_1nn_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_accuracy: Option<f64>,
    /// Per-μ accuracies when mu-mode = grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_grid: Option<Vec<MuGridEntry>>,
    pub timing: Timing,
}

impl RunResult {
    pub fn from_outcome(
        config: &RunConfig,
        task: String,
        outcome: &AdaptationOutcome,
        mu_grid: Option<Vec<MuGridEntry>>,
        timing: Timing,
    ) -> Self {
        let model = &outcome.model;
        let iterations: Vec<IterationRecord> = (0..model.iterations_run())
            .map(|i| IterationRecord {
                iteration: i + 1,
                mu: model.mu_history[i],
                label_agreement: model.label_history[i],
                accuracy: outcome.accuracy_history.as_ref().map(|h| h[i]),
                a_distance: model.report_history[i].clone(),
            })
            .collect();
        RunResult {
            artifact: "meda",
            artifact_version: env!("CARGO_PKG_VERSION"),
            schema_version: SCHEMA_VERSION,
            task,
            config: config.clone(),
            source_samples: model.source_count,
            target_samples: model.train_features.nrows() - model.source_count,
            classes: model.class_count,
            iterations,
            iterations_run: model.iterations_run(),
            converged: model.converged(),
            mu_final: *model.mu_history.last().expect("≥1 iteration"),
            baseline_1nn_accuracy: outcome.baseline_accuracy,
            final_accuracy: outcome.final_accuracy,
            mu_grid,
            timing,
        }
    }
}

/// Serializes any result value and writes it to `path`, or stdout when
/// no path is given.
pub fn emit<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| MedaError::InvalidParameter(format!("serialization failed: {e}")))?;
    match path {
        Some(path) => {
            std::fs::write(path, json.as_bytes())?;
            Ok(())
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(json.as_bytes())?;
            out.write_all(b"\n")?;
            Ok(())
        }
    }
}

pub fn fmt_acc(acc: Option<f64>) -> String {
    match acc {
        Some(a) => format!("{:6.2}%", a * 100.0),
        None => "     -".into(),
    }
}
