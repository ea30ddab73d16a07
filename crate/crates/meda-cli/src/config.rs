//! Resolution of run configuration from defaults, an optional key-value
//! config file, and command-line flags (highest precedence).

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use meda::data::DataFormat;
use meda::{
    Bandwidth, HyperParams, KernelKind, KernelSpec, MedaError, NormMode, Result, SyntheticTaskSpec,
};
use serde::Serialize;

use crate::CommonArgs;

/// Fixed default seed so the quickstart is reproducible.
pub const DEFAULT_SEED: u64 = 7;

fn config_err(message: impl Into<String>) -> MedaError {
    MedaError::Parse {
        path: "<config>".into(),
        line: 0,
        message: message.into(),
    }
}

/// Where the task's data comes from.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskSource {
    Files {
        source: PathBuf,
        target: PathBuf,
        format: DataFormat,
        target_format: DataFormat,
    },
    Synthetic {
        preset: String,
        spec: SyntheticTaskSpec,
    },
}

/// How μ is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MuModeConfig {
    Estimate,
    Fixed(f64),
    Grid,
}

/// Fully resolved configuration, echoed verbatim into every result so a
/// run can be reproduced from its output alone.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub task: TaskSource,
    pub normalization: NormMode,
    pub hyper: HyperParams,
    pub mu_mode: MuModeConfig,
    pub kernel: KernelSpec,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub save_model: Option<PathBuf>,
}

impl RunConfig {
    pub fn task_name(&self) -> String {
        match &self.task {
            TaskSource::Files { source, target, .. } => format!(
                "{}->{}",
                stem(source),
                stem(target)
            ),
            TaskSource::Synthetic { preset, .. } => format!("synthetic-{preset}"),
        }
    }

    /// Loads (or generates) the dataset pair.
    pub fn load_task(&self) -> Result<meda::DatasetPair> {
        match &self.task {
            TaskSource::Files {
                source,
                target,
                format,
                target_format,
            } => meda::data::load_pair(source, target, *format, *target_format, self.task_name()),
            TaskSource::Synthetic { spec, .. } => spec.generate(),
        }
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Parses a `key = value` config file (`#` starts a comment). Keys use
/// the long flag names.
fn parse_config_file(path: &Path) -> Result<HashMap<String, String>> {
    let text = std::fs::read_to_string(path)?;
    let mut map = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| MedaError::Parse {
            path: path.display().to_string(),
            line: idx + 1,
            message: format!("expected 'key = value', got '{line}'"),
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

const KNOWN_KEYS: &[&str] = &[
    "source",
    "target",
    "format",
    "target-format",
    "synthetic",
    "syn-classes",
    "syn-dim",
    "syn-n",
    "syn-noise",
    "syn-shift",
    "normalization",
    "d",
    "p",
    "lambda",
    "eta",
    "rho",
    "t-max",
    "mu-mode",
    "kernel",
    "bandwidth",
    "seed",
    "output",
    "save-model",
];

fn parse_from<T: std::str::FromStr>(map: &HashMap<String, String>, key: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    match map.get(key) {
        None => Ok(None),
        Some(raw) => raw
            .parse::<T>()
            .map(Some)
            .map_err(|e| config_err(format!("bad value for '{key}': {e}"))),
    }
}

pub fn resolve(args: &CommonArgs) -> Result<RunConfig> {
    resolve_impl(args, None, false)
}

/// Bench supplies its own tasks, so a missing task source falls back to a
/// synthetic placeholder, and the default subspace dimension stays at the
/// file-task value (directory suites are real feature files).
pub fn resolve_for_bench(args: &CommonArgs) -> Result<RunConfig> {
    resolve_impl(args, Some(20), true)
}

fn resolve_impl(
    args: &CommonArgs,
    d_default_override: Option<usize>,
    allow_missing_task: bool,
) -> Result<RunConfig> {
    let file = match &args.config {
        Some(path) => {
            let map = parse_config_file(path)?;
            for key in map.keys() {
                if !KNOWN_KEYS.contains(&key.as_str()) {
                    return Err(config_err(format!("unknown config key '{key}'")));
                }
            }
            map
        }
        None => HashMap::new(),
    };

    // Flags override file entries, which override defaults.
    let source = args
        .source
        .clone()
        .or(parse_from::<PathBuf>(&file, "source")?);
    let target = args
        .target
        .clone()
        .or(parse_from::<PathBuf>(&file, "target")?);
    let format_str = args.format.clone().or(file.get("format").cloned());
    let target_format_str = args
        .target_format
        .clone()
        .or(file.get("target-format").cloned());
    let synthetic = args.synthetic.clone().or(file.get("synthetic").cloned());
    let syn_classes = args.syn_classes.or(parse_from(&file, "syn-classes")?);
    let syn_dim = args.syn_dim.or(parse_from(&file, "syn-dim")?);
    let syn_n = args.syn_n.or(parse_from(&file, "syn-n")?);
    let syn_noise = args.syn_noise.or(parse_from(&file, "syn-noise")?);
    let syn_shift = args.syn_shift.or(parse_from(&file, "syn-shift")?);
    let normalization_str = args
        .normalization
        .clone()
        .or(file.get("normalization").cloned());
    let d = args.d.or(parse_from(&file, "d")?);
    let p = args.p.or(parse_from(&file, "p")?).unwrap_or(10);
    let lambda = args.lambda.or(parse_from(&file, "lambda")?).unwrap_or(10.0);
    let eta = args.eta.or(parse_from(&file, "eta")?).unwrap_or(0.1);
    let rho = args.rho.or(parse_from(&file, "rho")?).unwrap_or(1.0);
    let t_max = args.t_max.or(parse_from(&file, "t-max")?).unwrap_or(10);
    let mu_mode_str = args.mu_mode.clone().or(file.get("mu-mode").cloned());
    let kernel_str = args.kernel.clone().or(file.get("kernel").cloned());
    let bandwidth_str = args.bandwidth.clone().or(file.get("bandwidth").cloned());
    let seed = args
        .seed
        .or(parse_from(&file, "seed")?)
        .unwrap_or(DEFAULT_SEED);
    let output = args
        .output
        .clone()
        .or(parse_from::<PathBuf>(&file, "output")?);
    let save_model = args
        .save_model
        .clone()
        .or(parse_from::<PathBuf>(&file, "save-model")?);

    let task = match build_task(
        source,
        target,
        format_str,
        target_format_str,
        synthetic,
        syn_classes,
        syn_dim,
        syn_n,
        syn_noise,
        syn_shift,
        seed,
    )? {
        Some(task) => task,
        None if allow_missing_task => TaskSource::Synthetic {
            preset: "noshift".into(),
            spec: SyntheticTaskSpec::no_shift(3, 10, 80, seed),
        },
        None => {
            return Err(config_err(
                "no task: give --source and --target, or --synthetic",
            ))
        }
    };

    // The full-scale default d = 20 would violate d ≤ D/2 on the small
    // synthetic geometries, so synthetic tasks cap the default at D/2.
    let d = d.unwrap_or(match (&task, d_default_override) {
        (_, Some(dd)) => dd,
        (TaskSource::Files { .. }, None) => 20,
        (TaskSource::Synthetic { spec, .. }, None) => 20.min((spec.dim / 2).max(1)),
    });

    let normalization = match normalization_str {
        None => NormMode::Zscore,
        Some(s) => s.parse().map_err(|e| config_err(format!("{e}")))?,
    };

    let mu_mode = match mu_mode_str.as_deref() {
        None | Some("estimate") => MuModeConfig::Estimate,
        Some("grid") => MuModeConfig::Grid,
        Some(other) => {
            let raw = other.strip_prefix("fixed:").unwrap_or(other);
            let value: f64 = raw.parse().map_err(|_| {
                config_err(format!(
                    "mu-mode must be estimate, grid, or fixed:<v>, got '{other}'"
                ))
            })?;
            if !(0.0..=1.0).contains(&value) {
                return Err(config_err(format!("fixed μ = {value} outside [0, 1]")));
            }
            MuModeConfig::Fixed(value)
        }
    };

    let kind = match kernel_str.as_deref() {
        None | Some("rbf") => KernelKind::Rbf,
        Some("linear") => KernelKind::Linear,
        Some(other) => return Err(config_err(format!("unknown kernel '{other}'"))),
    };
    let bandwidth = match bandwidth_str.as_deref() {
        None | Some("auto") => Bandwidth::Auto,
        Some(raw) => {
            let value: f64 = raw
                .parse()
                .map_err(|_| config_err(format!("bandwidth must be auto or a float, got '{raw}'")))?;
            if value <= 0.0 {
                return Err(config_err(format!("bandwidth must be positive, got {value}")));
            }
            Bandwidth::Fixed(value)
        }
    };

    let hyper = HyperParams {
        lambda,
        eta,
        rho,
        p,
        d,
        t_max,
    };
    hyper
        .validate()
        .map_err(|e| config_err(format!("{e}")))?;

    Ok(RunConfig {
        task,
        normalization,
        hyper,
        mu_mode,
        kernel: KernelSpec { kind, bandwidth },
        seed,
        output,
        save_model,
    })
}

#[allow(clippy::too_many_arguments)]
fn build_task(
    source: Option<PathBuf>,
    target: Option<PathBuf>,
    format_str: Option<String>,
    target_format_str: Option<String>,
    synthetic: Option<String>,
    syn_classes: Option<usize>,
    syn_dim: Option<usize>,
    syn_n: Option<usize>,
    syn_noise: Option<f64>,
    syn_shift: Option<f64>,
    seed: u64,
) -> Result<Option<TaskSource>> {
    match (source, target, synthetic) {
        (Some(_), Some(_), Some(_)) => Err(config_err(
            "give either --source/--target or --synthetic, not both",
        )),
        (Some(source), Some(target), None) => {
            let format: DataFormat = match format_str {
                None => DataFormat::Dense,
                Some(s) => s.parse().map_err(|e| config_err(format!("{e}")))?,
            };
            let target_format = match target_format_str {
                None => format,
                Some(s) => s.parse().map_err(|e| config_err(format!("{e}")))?,
            };
            Ok(Some(TaskSource::Files {
                source,
                target,
                format,
                target_format,
            }))
        }
        (None, None, Some(preset)) => {
            let classes = syn_classes.unwrap_or(3);
            let dim = syn_dim.unwrap_or(10);
            let n = syn_n.unwrap_or(100);
            let mut spec = match preset.as_str() {
                "noshift" => SyntheticTaskSpec::no_shift(classes, dim, n, seed),
                "marginal" => SyntheticTaskSpec::marginal_shift_task(
                    classes,
                    dim,
                    n,
                    syn_shift.unwrap_or(1.7),
                    seed,
                ),
                "conditional" => SyntheticTaskSpec::conditional_drift_task(
                    classes,
                    dim,
                    n,
                    syn_shift.unwrap_or(1.0),
                    seed,
                ),
                "moderate" => {
                    if syn_classes.is_some() || syn_dim.is_some() || syn_n.is_some() || syn_shift.is_some() {
                        return Err(config_err(
                            "the moderate preset has fixed geometry; only syn-noise may be overridden",
                        ));
                    }
                    SyntheticTaskSpec::moderate_shift(seed)
                }
                other => {
                    return Err(config_err(format!(
                        "unknown synthetic preset '{other}' (noshift|marginal|conditional|moderate)"
                    )))
                }
            };
            if let Some(noise) = syn_noise {
                spec.noise_sigma = noise;
            }
            Ok(Some(TaskSource::Synthetic { preset, spec }))
        }
        (None, None, None) => Ok(None),
        _ => Err(config_err("--source and --target must be given together")),
    }
}
