//! The `run` verb: load → normalize → manifold transform → fit →
//! evaluate → emit.

use std::time::Instant;

use meda::learner::{self, AdaptationOutcome, FitOptions, MuMode};
use meda::manifold;
use meda::{DatasetPair, MedaError, MedaModel, Result};

use crate::config::{self, MuModeConfig, RunConfig};
use crate::output::{self, MuGridEntry, RunResult, Timing};
use crate::RunArgs;

pub fn execute(args: &RunArgs) -> Result<()> {
    let config = config::resolve(&args.common)?;
    let (result, model) = run_task(&config)?;
    if let Some(path) = &config.save_model {
        model.save(path)?;
    }
    output::emit(&result, config.output.as_deref())?;
    if config.output.is_some() {
        println!(
            "task {} finished: accuracy {} after {} iteration(s)",
            result.task,
            output::fmt_acc(result.final_accuracy).trim(),
            result.iterations_run
        );
    }
    Ok(())
}

/// Runs one configured task end to end. Shared with `sweep` and `bench`.
pub fn run_task(config: &RunConfig) -> Result<(RunResult, MedaModel)> {
    let started = Instant::now();
    let pair = config.load_task()?;
    let (pair, _stats) = pair.normalized(config.normalization)?;
    let load_seconds = started.elapsed().as_secs_f64();

    let manifold_started = Instant::now();
    let s_src = manifold::pca_subspace(&pair.source, config.hyper.d)?;
    let s_tgt = manifold::pca_subspace(&pair.target, config.hyper.d)?;
    let geodesic = manifold::geodesic_flow_kernel(&s_src, &s_tgt)?;
    let z_src = manifold::manifold_transform(&geodesic, &pair.source)?;
    let z_tgt = manifold::manifold_transform(&geodesic, &pair.target)?;
    let manifold_seconds = manifold_started.elapsed().as_secs_f64();

    let fit_started = Instant::now();
    let (outcome, mu_grid) = match config.mu_mode {
        MuModeConfig::Estimate => {
            let outcome = fit_outcome(config, &pair, &z_src, &z_tgt, MuMode::Estimate, &geodesic)?;
            (outcome, None)
        }
        MuModeConfig::Fixed(mu) => {
            let outcome = fit_outcome(config, &pair, &z_src, &z_tgt, MuMode::Fixed(mu), &geodesic)?;
            (outcome, None)
        }
        MuModeConfig::Grid => {
            if pair.target.labels().is_none() {
                return Err(MedaError::InvalidParameter(
                    "mu-mode grid needs target truth labels to rank the grid".into(),
                ));
            }
            let mut entries = Vec::with_capacity(11);
            let mut best: Option<(f64, AdaptationOutcome)> = None;
            for step in 0..=10 {
                let mu = step as f64 / 10.0;
                let outcome =
                    fit_outcome(config, &pair, &z_src, &z_tgt, MuMode::Fixed(mu), &geodesic)?;
                let acc = outcome.final_accuracy.expect("labels checked above");
                entries.push(MuGridEntry {
                    mu,
                    final_accuracy: acc,
                });
                let better = match &best {
                    None => true,
                    Some((best_acc, _)) => acc > *best_acc,
                };
                if better {
                    best = Some((acc, outcome));
                }
            }
            let (_, outcome) = best.expect("grid has 11 entries");
            (outcome, Some(entries))
        }
    };
    let fit_seconds = fit_started.elapsed().as_secs_f64();

    let timing = Timing {
        load_seconds,
        manifold_seconds,
        fit_seconds,
        total_seconds: started.elapsed().as_secs_f64(),
    };
    let result = RunResult::from_outcome(config, config.task_name(), &outcome, mu_grid, timing);
    Ok((result, outcome.model))
}

fn fit_outcome(
    config: &RunConfig,
    pair: &DatasetPair,
    z_src: &meda::FeatureMatrix,
    z_tgt: &meda::FeatureMatrix,
    mu_mode: MuMode,
    geodesic: &manifold::GeodesicKernel,
) -> Result<AdaptationOutcome> {
    let options = FitOptions {
        mu_mode,
        kernel: config.kernel,
        seed: config.seed,
    };
    let mut model = learner::fit(z_src, z_tgt, &config.hyper, &options)?;
    model.sqrt_g = Some(geodesic.sqrt_g().clone());
    learner::outcome_from_model(model, geodesic.clone(), pair)
}
