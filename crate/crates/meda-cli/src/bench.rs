//! The `bench` verb: run a suite of tasks with shared settings and print
//! per-task and average accuracy.
//!
//! Two suite kinds:
//! * `synthetic` — a fixed roster of seeded generator presets;
//! * a directory — either `<name>_source.*`/`<name>_target.*` pairs, or
//!   two-plus plain feature files benched as all ordered pairs (so four
//!   domain files yield the full 12-task cross-domain table).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use meda::{MedaError, Result, SyntheticTaskSpec};
use serde::Serialize;

use crate::config::{self, RunConfig, TaskSource};
use crate::output::{self, fmt_acc};
use crate::BenchArgs;

#[derive(Debug, Clone, Serialize)]
pub struct TaskRow {
    pub task: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_1nn_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_final: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations_run: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct BenchSummary {
    pub artifact: &'static str,
    pub artifact_version: &'static str,
    pub schema_version: u32,
    pub suite: String,
    pub seed: u64,
    pub tasks: Vec<TaskRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub average_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub average_baseline_accuracy: Option<f64>,
    pub total_seconds: f64,
}

/// The fixed synthetic roster. Geometry is 3 classes in 10 dimensions.
pub fn synthetic_suite(seed: u64) -> Vec<(String, SyntheticTaskSpec)> {
    vec![
        ("noshift".into(), SyntheticTaskSpec::no_shift(3, 10, 80, seed)),
        (
            "marginal-mild".into(),
            SyntheticTaskSpec::marginal_shift_task(3, 10, 80, 1.2, seed),
        ),
        (
            "marginal-strong".into(),
            SyntheticTaskSpec::marginal_shift_task(3, 10, 80, 2.2, seed),
        ),
        (
            "conditional-drift".into(),
            SyntheticTaskSpec::conditional_drift_task(3, 10, 80, 0.2, seed),
        ),
        ("moderate".into(), SyntheticTaskSpec::moderate_shift(seed)),
    ]
}

pub fn execute(args: &BenchArgs) -> Result<()> {
    let base = config::resolve_for_bench(&args.common)?;
    let started = Instant::now();

    let configs: Vec<(String, RunConfig)> = if args.suite == "synthetic" {
        synthetic_suite(base.seed)
            .into_iter()
            .map(|(name, spec)| {
                let mut config = base.clone();
                // Small synthetic geometry: cap d at D/2 like `run` does.
                config.hyper.d = config.hyper.d.min((spec.dim / 2).max(1));
                config.task = TaskSource::Synthetic {
                    preset: name.clone(),
                    spec,
                };
                (name, config)
            })
            .collect()
    } else {
        let format: meda::data::DataFormat = match &args.common.format {
            None => Default::default(),
            Some(s) => s.parse()?,
        };
        let target_format = match &args.common.target_format {
            None => format,
            Some(s) => s.parse()?,
        };
        directory_tasks(Path::new(&args.suite), &base, format, target_format)?
    };

    if configs.is_empty() {
        eprintln!("warning: no benchmark tasks found in '{}'", args.suite);
    }

    let mut rows: Vec<TaskRow> = Vec::with_capacity(configs.len());
    for (name, config) in &configs {
        match crate::run::run_task(config) {
            Ok((result, _)) => rows.push(TaskRow {
                task: name.clone(),
                baseline_1nn_accuracy: result.baseline_1nn_accuracy,
                final_accuracy: result.final_accuracy,
                mu_final: Some(result.mu_final),
                iterations_run: Some(result.iterations_run),
                error: None,
            }),
            Err(err) => {
                eprintln!("warning: task {name} failed: {err}");
                rows.push(TaskRow {
                    task: name.clone(),
                    baseline_1nn_accuracy: None,
                    final_accuracy: None,
                    mu_final: None,
                    iterations_run: None,
                    error: Some(err.to_string()),
                });
            }
        }
    }

    eprintln!("task                     1nn      meda     iters  mu");
    for row in &rows {
        match &row.error {
            None => eprintln!(
                "{:<22} {} {}  {:>5}  {:.3}",
                row.task,
                fmt_acc(row.baseline_1nn_accuracy),
                fmt_acc(row.final_accuracy),
                row.iterations_run.unwrap_or(0),
                row.mu_final.unwrap_or(f64::NAN)
            ),
            Some(err) => eprintln!("{:<22} failed: {err}", row.task),
        }
    }

    let finals: Vec<f64> = rows.iter().filter_map(|r| r.final_accuracy).collect();
    let baselines: Vec<f64> = rows.iter().filter_map(|r| r.baseline_1nn_accuracy).collect();
    let average_accuracy = mean(&finals);
    let average_baseline_accuracy = mean(&baselines);
    if let (Some(avg), Some(base_avg)) = (average_accuracy, average_baseline_accuracy) {
        eprintln!(
            "average                {} {}",
            fmt_acc(Some(base_avg)),
            fmt_acc(Some(avg))
        );
    }

    let summary = BenchSummary {
        artifact: "meda",
        artifact_version: env!("CARGO_PKG_VERSION"),
        schema_version: output::SCHEMA_VERSION,
        suite: args.suite.clone(),
        seed: base.seed,
        tasks: rows.clone(),
        average_accuracy,
        average_baseline_accuracy,
        total_seconds: started.elapsed().as_secs_f64(),
    };
    output::emit(&summary, base.output.as_deref())?;

    let all_failed = !rows.is_empty() && rows.iter().all(|r| r.error.is_some());
    if all_failed {
        return Err(MedaError::Degenerate(format!(
            "all {} benchmark tasks failed",
            rows.len()
        )));
    }
    Ok(())
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

const DATA_EXTENSIONS: &[&str] = &["txt", "csv", "dat", "data"];

/// Scans a directory for tasks. Explicit `<name>_source.*` pairs win;
/// otherwise every ordered pair of plain feature files becomes a task
/// named `SRC2TGT`.
fn directory_tasks(
    dir: &Path,
    base: &RunConfig,
    format: meda::data::DataFormat,
    target_format: meda::data::DataFormat,
) -> Result<Vec<(String, RunConfig)>> {
    if !dir.is_dir() {
        return Err(MedaError::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("suite directory '{}' not found", dir.display()),
        )));
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .map(|e| DATA_EXTENSIONS.contains(&e))
                    .unwrap_or(false)
        })
        .collect();
    files.sort();

    let make = |name: String, source: PathBuf, target: PathBuf| -> (String, RunConfig) {
        let mut config = base.clone();
        config.task = TaskSource::Files {
            source,
            target,
            format,
            target_format,
        };
        (name, config)
    };

    // Explicit *_source / *_target pairs.
    let mut pairs: BTreeMap<String, (Option<PathBuf>, Option<PathBuf>)> = BTreeMap::new();
    for path in &files {
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        if let Some(name) = stem.strip_suffix("_source") {
            pairs.entry(name.to_string()).or_default().0 = Some(path.clone());
        } else if let Some(name) = stem.strip_suffix("_target") {
            pairs.entry(name.to_string()).or_default().1 = Some(path.clone());
        }
    }
    let mut tasks = Vec::new();
    for (name, (source, target)) in &pairs {
        match (source, target) {
            (Some(s), Some(t)) => tasks.push(make(name.clone(), s.clone(), t.clone())),
            _ => eprintln!("warning: task {name} is missing its source or target file; skipped"),
        }
    }
    if !tasks.is_empty() {
        return Ok(tasks);
    }

    // Plain domain files: all ordered pairs.
    if files.len() >= 2 {
        for source in &files {
            for target in &files {
                if source == target {
                    continue;
                }
                let name = format!(
                    "{}2{}",
                    source.file_stem().unwrap().to_string_lossy(),
                    target.file_stem().unwrap().to_string_lossy()
                );
                tasks.push(make(name, source.clone(), target.clone()));
            }
        }
    }
    Ok(tasks)
}
