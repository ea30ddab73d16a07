//! The `sweep` verb: Cartesian product over hyperparameter lists, every
//! cell seeded identically. Cells run in the worker pool; output order is
//! the grid order regardless of completion order.

use std::time::Instant;

use meda::{MedaError, Result};
use serde::Serialize;

use crate::config::{self, MuModeConfig, RunConfig};
use crate::output::{self, fmt_acc};
use crate::SweepArgs;

#[derive(Debug, Clone, Serialize)]
pub struct CellParams {
    pub d: usize,
    pub p: usize,
    pub lambda: f64,
    pub eta: f64,
    pub rho: f64,
    /// Fixed μ for this cell; absent when the base μ mode is used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellResult {
    pub index: usize,
    pub params: CellParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_1nn_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_final: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations_run: Option<usize>,
    /// Populated when this cell failed; the sweep continues.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct SweepResult {
    pub artifact: &'static str,
    pub artifact_version: &'static str,
    pub schema_version: u32,
    pub task: String,
    pub base_config: RunConfig,
    pub cells: Vec<CellResult>,
    pub total_seconds: f64,
}

fn parse_list<T: std::str::FromStr>(raw: &Option<String>, flag: &str) -> Result<Option<Vec<T>>>
where
    T::Err: std::fmt::Display,
{
    let Some(raw) = raw else { return Ok(None) };
    let values = raw
        .split(',')
        .map(|tok| tok.trim())
        .filter(|tok| !tok.is_empty())
        .map(|tok| {
            tok.parse::<T>().map_err(|e| MedaError::Parse {
                path: "<config>".into(),
                line: 0,
                message: format!("bad {flag} entry '{tok}': {e}"),
            })
        })
        .collect::<Result<Vec<T>>>()?;
    if values.is_empty() {
        return Err(MedaError::Parse {
            path: "<config>".into(),
            line: 0,
            message: format!("{flag} list is empty"),
        });
    }
    Ok(Some(values))
}

pub fn execute(args: &SweepArgs) -> Result<()> {
    let base = config::resolve(&args.common)?;
    let started = Instant::now();

    let ds = parse_list::<usize>(&args.grid_d, "--grid-d")?.unwrap_or(vec![base.hyper.d]);
    let ps = parse_list::<usize>(&args.grid_p, "--grid-p")?.unwrap_or(vec![base.hyper.p]);
    let lambdas =
        parse_list::<f64>(&args.grid_lambda, "--grid-lambda")?.unwrap_or(vec![base.hyper.lambda]);
    let etas = parse_list::<f64>(&args.grid_eta, "--grid-eta")?.unwrap_or(vec![base.hyper.eta]);
    let rhos = parse_list::<f64>(&args.grid_rho, "--grid-rho")?.unwrap_or(vec![base.hyper.rho]);
    let mus: Vec<Option<f64>> = match parse_list::<f64>(&args.grid_mu, "--grid-mu")? {
        Some(values) => {
            for &mu in &values {
                if !(0.0..=1.0).contains(&mu) {
                    return Err(MedaError::Parse {
                        path: "<config>".into(),
                        line: 0,
                        message: format!("--grid-mu entry {mu} outside [0, 1]"),
                    });
                }
            }
            values.into_iter().map(Some).collect()
        }
        None => vec![None],
    };

    let mut grid: Vec<CellParams> = Vec::new();
    for &d in &ds {
        for &p in &ps {
            for &lambda in &lambdas {
                for &eta in &etas {
                    for &rho in &rhos {
                        for &mu in &mus {
                            grid.push(CellParams {
                                d,
                                p,
                                lambda,
                                eta,
                                rho,
                                mu,
                            });
                        }
                    }
                }
            }
        }
    }

    let run_cell = |(index, params): (usize, &CellParams)| -> CellResult {
        let mut config = base.clone();
        config.hyper.d = params.d;
        config.hyper.p = params.p;
        config.hyper.lambda = params.lambda;
        config.hyper.eta = params.eta;
        config.hyper.rho = params.rho;
        if let Some(mu) = params.mu {
            config.mu_mode = MuModeConfig::Fixed(mu);
        }
        config.output = None;
        config.save_model = None;
        match crate::run::run_task(&config) {
            Ok((result, _)) => CellResult {
                index,
                params: params.clone(),
                final_accuracy: result.final_accuracy,
                baseline_1nn_accuracy: result.baseline_1nn_accuracy,
                mu_final: Some(result.mu_final),
                iterations_run: Some(result.iterations_run),
                error: None,
            },
            Err(err) => CellResult {
                index,
                params: params.clone(),
                final_accuracy: None,
                baseline_1nn_accuracy: None,
                mu_final: None,
                iterations_run: None,
                error: Some(err.to_string()),
            },
        }
    };

    #[cfg(feature = "parallel")]
    let cells: Vec<CellResult> = {
        use rayon::prelude::*;
        grid.par_iter().enumerate().map(run_cell).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let cells: Vec<CellResult> = grid.iter().enumerate().map(run_cell).collect();

    eprintln!("index     d     p   lambda      eta      rho     mu    accuracy");
    for cell in &cells {
        let mu = cell
            .params
            .mu
            .map(|m| format!("{m:5.2}"))
            .unwrap_or_else(|| " est ".into());
        match &cell.error {
            None => eprintln!(
                "{:5} {:5} {:5} {:8.3} {:8.3} {:8.3}  {}  {}",
                cell.index,
                cell.params.d,
                cell.params.p,
                cell.params.lambda,
                cell.params.eta,
                cell.params.rho,
                mu,
                fmt_acc(cell.final_accuracy)
            ),
            Some(err) => eprintln!(
                "{:5} {:5} {:5} {:8.3} {:8.3} {:8.3}  {}  failed: {err}",
                cell.index, cell.params.d, cell.params.p, cell.params.lambda, cell.params.eta,
                cell.params.rho, mu
            ),
        }
    }

    let result = SweepResult {
        artifact: "meda",
        artifact_version: env!("CARGO_PKG_VERSION"),
        schema_version: output::SCHEMA_VERSION,
        task: base.task_name(),
        base_config: base.clone(),
        cells,
        total_seconds: started.elapsed().as_secs_f64(),
    };
    output::emit(&result, base.output.as_deref())
}
