//! Closed-form classifier learning with iterative pseudo-label
//! refinement.
//!
//! The classifier is a kernel expansion over all source and target
//! samples, `f(z) = Σ_i β_i K(z_i, z)`, whose coefficients minimize a
//! square-loss objective on the labeled source block plus three
//! regularizers: a ridge term, the μ-weighted MMD alignment penalty, and
//! the graph-Laplacian smoothness penalty. Zeroing the gradient gives the
//! linear system
//!
//! ```text
//! ((A + λM + ρL)·K + ηI) β = A Yᵀ
//! ```
//!
//! solved directly — no explicit inverse and no gradient descent. The
//! refinement loop alternates between re-estimating the adaptive factor,
//! rebuilding the alignment matrix from the current target pseudo-labels,
//! solving for β, and re-predicting the target labels, until the labels
//! stop changing or `t_max` rounds have run.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::alignment::{self, ADistanceReport};
use crate::data::{DatasetPair, FeatureMatrix};
use crate::error::{MedaError, Result};
use crate::graph::GraphLaplacian;
use crate::linalg;
use crate::manifold::{self, GeodesicKernel};
use crate::parallel;

/// Relative-residual contract for the β solve.
const SOLVE_TOLERANCE: f64 = 1e-8;
/// Iterative-refinement passes allowed to reach the contract.
const SOLVE_MAX_REFINE: usize = 4;

/// Kernel family for the classifier expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    #[default]
    Rbf,
    Linear,
}

/// RBF bandwidth: a fixed value, or resolved from the data as the mean
/// over features of the per-feature variance of the combined inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Bandwidth {
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub bandwidth: Bandwidth,
}

impl KernelSpec {
    pub fn rbf_auto() -> Self {
        Self::default()
    }

    pub fn linear() -> Self {
        Self {
            kind: KernelKind::Linear,
            bandwidth: Bandwidth::Auto,
        }
    }

    /// Pins the bandwidth against the combined feature matrix. For the
    /// RBF kernel `Auto` resolves to `σ² =` mean per-feature variance;
    /// all-identical inputs make that zero, which is degenerate.
    pub fn resolve(&self, z: &DMatrix<f64>) -> Result<KernelSpec> {
        match (self.kind, self.bandwidth) {
            (KernelKind::Linear, _) => Ok(*self),
            (KernelKind::Rbf, Bandwidth::Fixed(b)) => {
                if b <= 0.0 || !b.is_finite() {
                    return Err(MedaError::InvalidParameter(format!(
                        "RBF bandwidth must be positive, got {b}"
                    )));
                }
                Ok(*self)
            }
            (KernelKind::Rbf, Bandwidth::Auto) => {
                let n = z.nrows();
                if n == 0 {
                    return Err(MedaError::EmptyInput("cannot resolve bandwidth on 0 rows".into()));
                }
                let mut total = 0.0;
                for j in 0..z.ncols() {
                    let col = z.column(j);
                    let mu = col.sum() / n as f64;
                    total += col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n as f64;
                }
                let sigma_sq = total / z.ncols() as f64;
                if sigma_sq <= 0.0 || !sigma_sq.is_finite() {
                    return Err(MedaError::Degenerate(
                        "auto bandwidth is zero: all inputs identical".into(),
                    ));
                }
                Ok(KernelSpec {
                    kind: KernelKind::Rbf,
                    bandwidth: Bandwidth::Fixed(sigma_sq),
                })
            }
        }
    }

    fn sigma_sq(&self) -> Result<f64> {
        match self.bandwidth {
            Bandwidth::Fixed(v) => Ok(v),
            Bandwidth::Auto => Err(MedaError::InvalidParameter(
                "kernel bandwidth is unresolved; call resolve() first".into(),
            )),
        }
    }
}

fn rbf_entry(a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize, sigma_sq: f64) -> f64 {
    let mut dist_sq = 0.0;
    for k in 0..a.ncols() {
        let diff = a[(i, k)] - b[(j, k)];
        dist_sq += diff * diff;
    }
    (-dist_sq / (2.0 * sigma_sq)).exp()
}

/// Symmetric kernel Gram matrix over sample rows. RBF diagonals are
/// exactly 1.
pub fn kernel_matrix(z: &DMatrix<f64>, spec: &KernelSpec) -> Result<DMatrix<f64>> {
    let n = z.nrows();
    match spec.kind {
        KernelKind::Linear => Ok(z * z.transpose()),
        KernelKind::Rbf => {
            let sigma_sq = spec.sigma_sq()?;
            let upper: Vec<Vec<f64>> = parallel::map_indexed(n, |i| {
                ((i + 1)..n)
                    .map(|j| rbf_entry(z, i, z, j, sigma_sq))
                    .collect()
            });
            let mut k = DMatrix::identity(n, n);
            for (i, row) in upper.iter().enumerate() {
                for (offset, &v) in row.iter().enumerate() {
                    let j = i + 1 + offset;
                    k[(i, j)] = v;
                    k[(j, i)] = v;
                }
            }
            Ok(k)
        }
    }
}

/// Cross-kernel between query rows and training rows.
pub fn cross_kernel(
    query: &DMatrix<f64>,
    train: &DMatrix<f64>,
    spec: &KernelSpec,
) -> Result<DMatrix<f64>> {
    if query.ncols() != train.ncols() {
        return Err(MedaError::Dimension(format!(
            "query has {} features but training rows have {}",
            query.ncols(),
            train.ncols()
        )));
    }
    match spec.kind {
        KernelKind::Linear => Ok(query * train.transpose()),
        KernelKind::Rbf => {
            let sigma_sq = spec.sigma_sq()?;
            let n_train = train.nrows();
            let rows: Vec<Vec<f64>> = parallel::map_indexed(query.nrows(), |i| {
                (0..n_train)
                    .map(|j| rbf_entry(query, i, train, j, sigma_sq))
                    .collect()
            });
            Ok(DMatrix::from_fn(query.nrows(), n_train, |i, j| rows[i][j]))
        }
    }
}

/// Diagonal domain indicator: 1 on the first `n` (source) diagonal
/// entries, 0 on the `m` target entries.
pub fn build_indicator(n: usize, m: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n + m, n + m);
    for i in 0..n {
        a[(i, i)] = 1.0;
    }
    a
}

/// Solver hyperparameters and their defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// MMD alignment weight λ.
    pub lambda: f64,
    /// Ridge weight η (must be positive: it guarantees invertibility).
    pub eta: f64,
    /// Laplacian weight ρ.
    pub rho: f64,
    /// Neighbor count for the affinity graph.
    pub p: usize,
    /// Manifold subspace dimension.
    pub d: usize,
    /// Maximum refinement iterations.
    pub t_max: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            lambda: 10.0,
            eta: 0.1,
            rho: 1.0,
            p: 10,
            d: 20,
            t_max: 10,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if self.eta <= 0.0 || !self.eta.is_finite() {
            return Err(MedaError::InvalidParameter(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        for (name, v) in [("lambda", self.lambda), ("rho", self.rho)] {
            if v < 0.0 || !v.is_finite() {
                return Err(MedaError::InvalidParameter(format!(
                    "{name} must be finite and ≥ 0, got {v}"
                )));
            }
        }
        if self.p == 0 {
            return Err(MedaError::InvalidParameter("p must be ≥ 1".into()));
        }
        if self.d == 0 {
            return Err(MedaError::InvalidParameter("d must be ≥ 1".into()));
        }
        if self.t_max == 0 {
            return Err(MedaError::InvalidParameter("t_max must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// How the adaptive factor is chosen each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MuMode {
    /// Re-estimate μ̂ from proxy A-distances every iteration.
    #[default]
    Estimate,
    /// Use a fixed μ, bypassing estimation.
    Fixed(f64),
}

/// Knobs for [`fit`] beyond the hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub mu_mode: MuMode,
    pub kernel: KernelSpec,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            mu_mode: MuMode::Estimate,
            kernel: KernelSpec::rbf_auto(),
            seed: 7,
        }
    }
}

/// Solves `((A + λM + ρL)K + ηI) β = A Yᵀ` as a linear system.
///
/// `y` is the C×(n+m) one-hot label matrix (target columns zero). The
/// returned β satisfies the stationarity residual contract
/// `‖S·β − AYᵀ‖_F / ‖AYᵀ‖_F < 1e-8`.
pub fn solve_beta(
    k: &DMatrix<f64>,
    a: &DMatrix<f64>,
    y: &DMatrix<f64>,
    m: &DMatrix<f64>,
    l: &DMatrix<f64>,
    hyper: &HyperParams,
) -> Result<DMatrix<f64>> {
    hyper.validate()?;
    let size = k.nrows();
    for (name, mat) in [("kernel", k), ("indicator", a), ("mmd", m), ("laplacian", l)] {
        if mat.nrows() != size || mat.ncols() != size {
            return Err(MedaError::Dimension(format!(
                "{name} matrix is {}x{}, expected {size}x{size}",
                mat.nrows(),
                mat.ncols()
            )));
        }
    }
    if y.ncols() != size {
        return Err(MedaError::Dimension(format!(
            "label matrix has {} columns, expected {size}",
            y.ncols()
        )));
    }

    let mut weight = a + m * hyper.lambda;
    weight += l * hyper.rho;
    let mut system = weight * k;
    for i in 0..size {
        system[(i, i)] += hyper.eta;
    }
    let rhs = a * y.transpose();
    linalg::solve_refined(&system, &rhs, SOLVE_TOLERANCE, SOLVE_MAX_REFINE)
}

/// A fitted model: coefficients, the manifold training features, the
/// resolved kernel, and per-iteration traces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MedaModel {
    /// (n+m)×C coefficient matrix.
    pub beta: DMatrix<f64>,
    /// (n+m)×D manifold features the kernel expansion is anchored on.
    pub train_features: DMatrix<f64>,
    /// Resolved kernel specification.
    pub kernel: KernelSpec,
    pub hyper: HyperParams,
    pub mu_mode: MuMode,
    pub seed: u64,
    pub source_count: usize,
    pub class_count: usize,
    /// Square root of the geodesic flow kernel, kept so raw query
    /// features can be mapped onto the manifold before prediction.
    pub sqrt_g: Option<DMatrix<f64>>,
    /// μ̂ (or the fixed μ) per iteration.
    pub mu_history: Vec<f64>,
    /// Fraction of target labels unchanged from the previous iteration.
    pub label_history: Vec<f64>,
    /// A-distance breakdown per iteration (absent under fixed μ).
    pub report_history: Vec<Option<ADistanceReport>>,
    /// Target pseudo-labels after each iteration.
    pub pseudo_label_history: Vec<Vec<i64>>,
}

const MODEL_FORMAT: &str = "meda-model";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelContainer {
    format: String,
    version: u32,
    model: MedaModel,
}

impl MedaModel {
    /// Final target pseudo-labels.
    pub fn target_labels(&self) -> &[i64] {
        self.pseudo_label_history
            .last()
            .expect("fit records at least one iteration")
    }

    pub fn iterations_run(&self) -> usize {
        self.mu_history.len()
    }

    /// Whether the loop stopped because labels stabilized (rather than
    /// hitting `t_max`).
    pub fn converged(&self) -> bool {
        self.label_history.last().is_some_and(|&a| a == 1.0)
    }

    /// Writes the model as a versioned JSON container. All floats use
    /// shortest-round-trip encoding, so a load reproduces the model
    /// bit-identically.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let container = ModelContainer {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            model: self.clone(),
        };
        let json = serde_json::to_string(&container)
            .map_err(|e| MedaError::InvalidParameter(format!("model serialization failed: {e}")))?;
        fs::write(path.as_ref(), json)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let container: ModelContainer = serde_json::from_str(&text).map_err(|e| MedaError::Parse {
            path: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })?;
        if container.format != MODEL_FORMAT || container.version != MODEL_VERSION {
            return Err(MedaError::Parse {
                path: path.display().to_string(),
                line: 0,
                message: format!(
                    "unsupported container {}@{}, expected {MODEL_FORMAT}@{MODEL_VERSION}",
                    container.format, container.version
                ),
            });
        }
        Ok(container.model)
    }
}

/// Scores and labels for query rows already mapped onto the manifold.
///
/// Scores are `K_query · β`; labels take the per-row argmax with ties
/// broken toward the lowest class index.
pub fn predict(model: &MedaModel, z_query: &FeatureMatrix) -> Result<(Vec<i64>, DMatrix<f64>)> {
    if z_query.dim() != model.train_features.ncols() {
        return Err(MedaError::Dimension(format!(
            "query features have {} columns but the model was trained on {}",
            z_query.dim(),
            model.train_features.ncols()
        )));
    }
    let k_query = cross_kernel(z_query.data(), &model.train_features, &model.kernel)?;
    let scores = &k_query * &model.beta;
    Ok((argmax_labels(&scores), scores))
}

fn argmax_labels(scores: &DMatrix<f64>) -> Vec<i64> {
    (0..scores.nrows())
        .map(|i| {
            let mut best = 0usize;
            for c in 1..scores.ncols() {
                if scores[(i, c)] > scores[(i, best)] {
                    best = c;
                }
            }
            best as i64 + 1
        })
        .collect()
}

/// 1-nearest-neighbor labels for the target under Euclidean distance,
/// used to seed the first refinement iteration. Distance ties resolve to
/// the lower source index.
pub fn base_classifier_labels(z_src: &FeatureMatrix, z_tgt: &FeatureMatrix) -> Result<Vec<i64>> {
    let labels = z_src
        .labels()
        .ok_or_else(|| MedaError::InvalidParameter("source domain must be labeled".into()))?;
    if z_src.dim() != z_tgt.dim() {
        return Err(MedaError::Dimension(format!(
            "source dim {} != target dim {}",
            z_src.dim(),
            z_tgt.dim()
        )));
    }
    let src = z_src.data();
    let tgt = z_tgt.data();
    Ok(parallel::map_indexed(tgt.nrows(), |i| {
        let mut best = 0usize;
        let mut best_dist = f64::INFINITY;
        for j in 0..src.nrows() {
            let mut dist = 0.0;
            for k in 0..src.ncols() {
                let diff = tgt[(i, k)] - src[(j, k)];
                dist += diff * diff;
            }
            if dist < best_dist {
                best_dist = dist;
                best = j;
            }
        }
        labels[best]
    }))
}

/// Fraction of positions where `predicted` matches `truth`.
pub fn accuracy(predicted: &[i64], truth: &[i64]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(MedaError::Dimension(format!(
            "{} predictions for {} truths",
            predicted.len(),
            truth.len()
        )));
    }
    if predicted.is_empty() {
        return Err(MedaError::EmptyInput("accuracy of zero samples is undefined".into()));
    }
    let hits = predicted
        .iter()
        .zip(truth)
        .filter(|(a, b)| a == b)
        .count();
    Ok(hits as f64 / predicted.len() as f64)
}

/// Runs the refinement loop on manifold-transformed features.
///
/// Expects a labeled source and any target; `hyper.p` must be smaller
/// than the combined sample count. Iterations stop as soon as target
/// pseudo-labels repeat, and never exceed `hyper.t_max`.
pub fn fit(
    z_src: &FeatureMatrix,
    z_tgt: &FeatureMatrix,
    hyper: &HyperParams,
    options: &FitOptions,
) -> Result<MedaModel> {
    hyper.validate()?;
    if let MuMode::Fixed(mu) = options.mu_mode {
        if !(0.0..=1.0).contains(&mu) {
            return Err(MedaError::InvalidParameter(format!(
                "fixed μ = {mu} outside [0, 1]"
            )));
        }
    }
    let labels_src = z_src
        .labels()
        .ok_or_else(|| MedaError::InvalidParameter("source domain must be labeled".into()))?
        .to_vec();
    let (n, m) = (z_src.n_samples(), z_tgt.n_samples());
    if n == 0 || m == 0 {
        return Err(MedaError::EmptyInput("both domains need samples".into()));
    }
    let class_count = labels_src.iter().copied().max().unwrap_or(0);
    if class_count < 1 || labels_src.iter().any(|&l| l < 1) {
        return Err(MedaError::InvalidParameter(
            "source labels must be re-indexed to 1..=C".into(),
        ));
    }
    let class_count = class_count as usize;

    let z_all = z_src.stack_data(z_tgt)?;
    let kernel_spec = options.kernel.resolve(&z_all)?;
    let k = kernel_matrix(&z_all, &kernel_spec)?;
    let graph = GraphLaplacian::build(&z_all, hyper.p)?;
    let a = build_indicator(n, m);

    let mut y = DMatrix::zeros(class_count, n + m);
    for (i, &l) in labels_src.iter().enumerate() {
        y[(l as usize - 1, i)] = 1.0;
    }

    let mut pseudo = base_classifier_labels(z_src, z_tgt)?;
    let mut mu_history = Vec::new();
    let mut label_history = Vec::new();
    let mut report_history = Vec::new();
    let mut pseudo_label_history = Vec::new();
    let mut beta = DMatrix::zeros(n + m, class_count);

    for iteration in 1..=hyper.t_max {
        let (mu, report) = match options.mu_mode {
            MuMode::Fixed(v) => (v, None),
            MuMode::Estimate => {
                let seed = options.seed.wrapping_add((iteration as u64) << 32);
                let (mu, report) = alignment::estimate_mu(z_src, z_tgt, &pseudo, seed)?;
                (mu, Some(report))
            }
        };
        let mmd = alignment::combined_matrix(&labels_src, &pseudo, mu)?;
        beta = solve_beta(&k, &a, &y, &mmd, &graph.l, hyper)?;

        let scores = &k * &beta;
        let target_scores = scores.rows(n, m).into_owned();
        let new_labels = argmax_labels(&target_scores);

        let agreement = new_labels
            .iter()
            .zip(&pseudo)
            .filter(|(a, b)| a == b)
            .count() as f64
            / m as f64;

        mu_history.push(mu);
        label_history.push(agreement);
        report_history.push(report);
        pseudo_label_history.push(new_labels.clone());

        let converged = new_labels == pseudo;
        pseudo = new_labels;
        if converged {
            break;
        }
    }

    Ok(MedaModel {
        beta,
        train_features: z_all,
        kernel: kernel_spec,
        hyper: *hyper,
        mu_mode: options.mu_mode,
        seed: options.seed,
        source_count: n,
        class_count,
        sqrt_g: None,
        mu_history,
        label_history,
        report_history,
        pseudo_label_history,
    })
}

/// Outcome of the full adaptation pipeline on one task.
#[derive(Debug, Clone)]
pub struct AdaptationOutcome {
    pub model: MedaModel,
    pub geodesic: GeodesicKernel,
    /// 1-NN source→target labels on the pre-manifold features.
    pub baseline_labels: Vec<i64>,
    /// Baseline accuracy, when target truth labels are available.
    pub baseline_accuracy: Option<f64>,
    /// Pseudo-label accuracy after each iteration (needs truth labels).
    pub accuracy_history: Option<Vec<f64>>,
    pub final_accuracy: Option<f64>,
}

/// End-to-end adaptation for an already-normalized pair: PCA subspaces →
/// geodesic flow kernel → manifold transform → [`fit`], plus a 1-NN
/// baseline on the raw features for comparison.
pub fn adapt(pair: &DatasetPair, hyper: &HyperParams, options: &FitOptions) -> Result<AdaptationOutcome> {
    hyper.validate()?;
    let s_src = manifold::pca_subspace(&pair.source, hyper.d)?;
    let s_tgt = manifold::pca_subspace(&pair.target, hyper.d)?;
    let geodesic = manifold::geodesic_flow_kernel(&s_src, &s_tgt)?;
    let z_src = manifold::manifold_transform(&geodesic, &pair.source)?;
    let z_tgt = manifold::manifold_transform(&geodesic, &pair.target)?;

    let mut model = fit(&z_src, &z_tgt, hyper, options)?;
    model.sqrt_g = Some(geodesic.sqrt_g().clone());
    outcome_from_model(model, geodesic, pair)
}

/// Evaluates a fitted model against the (pre-manifold) pair: 1-NN
/// baseline plus per-iteration accuracy when truth labels exist.
pub fn outcome_from_model(
    model: MedaModel,
    geodesic: GeodesicKernel,
    pair: &DatasetPair,
) -> Result<AdaptationOutcome> {
    let baseline_labels = base_classifier_labels(&pair.source, &pair.target)?;
    let truth = pair.target.labels();
    let baseline_accuracy = truth
        .map(|t| accuracy(&baseline_labels, t))
        .transpose()?;
    let accuracy_history = truth
        .map(|t| {
            model
                .pseudo_label_history
                .iter()
                .map(|labels| accuracy(labels, t))
                .collect::<Result<Vec<f64>>>()
        })
        .transpose()?;
    let final_accuracy = accuracy_history.as_ref().map(|h| *h.last().expect("≥1 iteration"));

    Ok(AdaptationOutcome {
        model,
        geodesic,
        baseline_labels,
        baseline_accuracy,
        accuracy_history,
        final_accuracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Domain, SyntheticTaskSpec};
    use crate::testutil;
    use approx::assert_relative_eq;

    fn source(data: DMatrix<f64>, labels: Vec<i64>) -> FeatureMatrix {
        FeatureMatrix::new(data, Domain::Source, Some(labels)).unwrap()
    }

    #[test]
    fn rbf_kernel_has_unit_diagonal_and_duplicate_detection() {
        let mut rng = testutil::rng(101);
        let mut z = testutil::random_matrix(&mut rng, 10, 4);
        for j in 0..4 {
            z[(7, j)] = z[(2, j)];
        }
        let spec = KernelSpec::rbf_auto().resolve(&z).unwrap();
        let k = kernel_matrix(&z, &spec).unwrap();
        for i in 0..10 {
            assert_eq!(k[(i, i)], 1.0);
        }
        assert_eq!(k[(2, 7)], 1.0);
        assert_eq!(k[(7, 2)], 1.0);
    }

    #[test]
    fn rbf_kernel_is_psd() {
        let mut rng = testutil::rng(103);
        let z = testutil::random_matrix(&mut rng, 15, 4);
        let spec = KernelSpec::rbf_auto().resolve(&z).unwrap();
        let k = kernel_matrix(&z, &spec).unwrap();
        let min_eig = k.symmetric_eigen().eigenvalues.min();
        assert!(min_eig >= -1e-8, "min eigenvalue {min_eig}");
    }

    #[test]
    fn auto_bandwidth_rejects_identical_inputs() {
        let z = DMatrix::from_element(6, 3, 2.0);
        assert!(matches!(
            KernelSpec::rbf_auto().resolve(&z),
            Err(MedaError::Degenerate(_))
        ));
    }

    #[test]
    fn indicator_marks_source_rows() {
        let a = build_indicator(2, 1);
        assert_eq!(a, DMatrix::from_diagonal(&nalgebra::dvector![1.0, 1.0, 0.0]));
        assert_eq!(build_indicator(5, 3).trace(), 5.0);
    }

    #[test]
    fn scalar_system_solves_by_hand() {
        let k = DMatrix::from_element(1, 1, 1.0);
        let a = DMatrix::from_element(1, 1, 1.0);
        let y = DMatrix::from_element(1, 1, 1.0);
        let zero = DMatrix::zeros(1, 1);
        let hyper = HyperParams {
            lambda: 0.0,
            rho: 0.0,
            eta: 1.0,
            ..HyperParams::default()
        };
        let beta = solve_beta(&k, &a, &y, &zero, &zero, &hyper).unwrap();
        assert_relative_eq!(beta[(0, 0)], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn unregularized_solution_matches_kernel_ridge_oracle() {
        let mut rng = testutil::rng(107);
        let (n, m) = (14, 9);
        let z = testutil::random_matrix(&mut rng, n + m, 5);
        let labels: Vec<i64> = (0..n).map(|i| (i % 3) as i64 + 1).collect();
        let spec = KernelSpec::rbf_auto().resolve(&z).unwrap();
        let k = kernel_matrix(&z, &spec).unwrap();
        let a = build_indicator(n, m);
        let mut y = DMatrix::zeros(3, n + m);
        for (i, &l) in labels.iter().enumerate() {
            y[(l as usize - 1, i)] = 1.0;
        }
        let zero = DMatrix::zeros(n + m, n + m);
        let hyper = HyperParams {
            lambda: 0.0,
            rho: 0.0,
            eta: 0.3,
            ..HyperParams::default()
        };
        let beta = solve_beta(&k, &a, &y, &zero, &zero, &hyper).unwrap();

        // Oracle: kernel ridge restricted to the source block.
        let k_ss = k.view((0, 0), (n, n)).into_owned();
        let ridge = &k_ss + DMatrix::identity(n, n) * hyper.eta;
        let y_s = y.columns(0, n).transpose();
        let beta_s_oracle = ridge.cholesky().unwrap().solve(&y_s);

        let gap = (beta.rows(0, n) - &beta_s_oracle).norm();
        assert!(gap < 1e-8, "source block gap {gap}");
        let target_norm = beta.rows(n, m).norm();
        assert!(target_norm < 1e-12, "target rows should be zero, norm {target_norm}");
    }

    /// Direct evaluation of the regularized objective.
    fn objective(
        k: &DMatrix<f64>,
        a: &DMatrix<f64>,
        y: &DMatrix<f64>,
        m: &DMatrix<f64>,
        l: &DMatrix<f64>,
        hyper: &HyperParams,
        beta: &DMatrix<f64>,
    ) -> f64 {
        let fit = (y - beta.transpose() * k) * a;
        let ridge = (beta.transpose() * k * beta).trace();
        let reg = m * hyper.lambda + l * hyper.rho;
        let penalty = (beta.transpose() * k * reg * k * beta).trace();
        fit.norm_squared() + hyper.eta * ridge + penalty
    }

    #[test]
    fn solution_minimizes_the_objective() {
        let mut rng = testutil::rng(109);
        let (n, m_count) = (12, 8);
        let total = n + m_count;
        let z = testutil::random_matrix(&mut rng, total, 4);
        let labels: Vec<i64> = (0..n).map(|i| (i % 2) as i64 + 1).collect();
        let pseudo: Vec<i64> = (0..m_count).map(|i| (i % 2) as i64 + 1).collect();

        let spec = KernelSpec::rbf_auto().resolve(&z).unwrap();
        let k = kernel_matrix(&z, &spec).unwrap();
        let a = build_indicator(n, m_count);
        let mut y = DMatrix::zeros(2, total);
        for (i, &l) in labels.iter().enumerate() {
            y[(l as usize - 1, i)] = 1.0;
        }
        let state = alignment::AlignmentState::build(&labels, &pseudo, 0.4).unwrap();
        let lap = GraphLaplacian::build(&z, 3).unwrap();
        let hyper = HyperParams {
            lambda: 2.0,
            rho: 0.7,
            eta: 0.2,
            ..HyperParams::default()
        };
        let beta = solve_beta(&k, &a, &y, &state.combined, &lap.l, &hyper).unwrap();

        let at_solution = objective(&k, &a, &y, &state.combined, &lap.l, &hyper, &beta);
        let at_zero = objective(&k, &a, &y, &state.combined, &lap.l, &hyper, &DMatrix::zeros(total, 2));
        assert!(at_solution <= at_zero + 1e-12);
        for _ in 0..100 {
            let delta = testutil::random_matrix(&mut rng, total, 2) * 0.05;
            let perturbed = objective(&k, &a, &y, &state.combined, &lap.l, &hyper, &(&beta + delta));
            assert!(
                at_solution <= perturbed + 1e-10,
                "objective rose from {at_solution} to {perturbed}"
            );
        }
    }

    #[test]
    fn loss_ignores_target_label_columns() {
        let mut rng = testutil::rng(113);
        let (n, m_count) = (10, 6);
        let total = n + m_count;
        let z = testutil::random_matrix(&mut rng, total, 3);
        let labels: Vec<i64> = (0..n).map(|i| (i % 2) as i64 + 1).collect();
        let spec = KernelSpec::rbf_auto().resolve(&z).unwrap();
        let k = kernel_matrix(&z, &spec).unwrap();
        let a = build_indicator(n, m_count);
        let mut y = DMatrix::zeros(2, total);
        for (i, &l) in labels.iter().enumerate() {
            y[(l as usize - 1, i)] = 1.0;
        }
        let zero = DMatrix::zeros(total, total);
        let hyper = HyperParams {
            lambda: 0.0,
            rho: 0.0,
            eta: 0.5,
            ..HyperParams::default()
        };
        let beta = solve_beta(&k, &a, &y, &zero, &zero, &hyper).unwrap();

        // Perturb the target columns of Y: the indicator filters them out.
        let mut y2 = y.clone();
        for j in n..total {
            y2[(0, j)] = rng_val(&mut rng);
            y2[(1, j)] = rng_val(&mut rng);
        }
        let beta2 = solve_beta(&k, &a, &y2, &zero, &zero, &hyper).unwrap();
        assert_eq!(beta, beta2);

        let loss1 = ((&y - beta.transpose() * &k) * &a).norm_squared();
        let loss2 = ((&y2 - beta.transpose() * &k) * &a).norm_squared();
        assert_relative_eq!(loss1, loss2, epsilon = 1e-12);
    }

    fn rng_val(rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
        use rand::Rng;
        rng.sample(rand_distr::StandardNormal)
    }

    #[test]
    fn scores_shrink_as_eta_grows() {
        let mut rng = testutil::rng(127);
        let (n, m_count) = (12, 5);
        let total = n + m_count;
        let z = testutil::random_matrix(&mut rng, total, 4);
        let spec = KernelSpec::rbf_auto().resolve(&z).unwrap();
        let k = kernel_matrix(&z, &spec).unwrap();
        let a = build_indicator(n, m_count);
        let y = {
            let mut y = DMatrix::zeros(1, total);
            for i in 0..n {
                y[(0, i)] = 1.0;
            }
            y
        };
        let zero = DMatrix::zeros(total, total);
        let mut norms = Vec::new();
        for eta in [0.1, 1.0, 10.0] {
            let hyper = HyperParams {
                lambda: 0.0,
                rho: 0.0,
                eta,
                ..HyperParams::default()
            };
            let beta = solve_beta(&k, &a, &y, &zero, &zero, &hyper).unwrap();
            norms.push((&k * beta).norm());
        }
        assert!(norms[0] > norms[1] && norms[1] > norms[2], "norms {norms:?}");
    }

    #[test]
    fn nearest_prototype_labeling() {
        let src = source(
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 10.0, 10.0]),
            vec![1, 2],
        );
        let tgt = FeatureMatrix::unlabeled(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), Domain::Target);
        assert_eq!(base_classifier_labels(&src, &tgt).unwrap(), vec![1]);

        // A target point equal to a source point inherits its label.
        let tgt_eq = FeatureMatrix::unlabeled(DMatrix::from_row_slice(1, 2, &[10.0, 10.0]), Domain::Target);
        assert_eq!(base_classifier_labels(&src, &tgt_eq).unwrap(), vec![2]);
    }

    #[test]
    fn nearest_neighbor_matches_exhaustive_oracle() {
        let mut rng = testutil::rng(131);
        let src_data = testutil::random_matrix(&mut rng, 40, 3);
        let labels: Vec<i64> = (0..40).map(|i| (i % 4) as i64 + 1).collect();
        let src = source(src_data.clone(), labels.clone());
        let tgt_data = testutil::random_matrix(&mut rng, 25, 3);
        let tgt = FeatureMatrix::unlabeled(tgt_data.clone(), Domain::Target);

        let got = base_classifier_labels(&src, &tgt).unwrap();
        for (i, &predicted) in got.iter().enumerate() {
            let mut best = (f64::INFINITY, 0usize);
            for j in 0..40 {
                let d = (tgt_data.row(i) - src_data.row(j)).norm_squared();
                if d < best.0 {
                    best = (d, j);
                }
            }
            assert_eq!(predicted, labels[best.1], "row {i}");
        }
    }

    #[test]
    fn accuracy_counts_matches() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 1], &[2, 2]).unwrap(), 0.0);
        assert_eq!(accuracy(&[1, 2, 3, 4], &[1, 2, 3, 9]).unwrap(), 0.75);
        assert!(matches!(accuracy(&[], &[]), Err(MedaError::EmptyInput(_))));
        assert!(matches!(accuracy(&[1], &[1, 2]), Err(MedaError::Dimension(_))));
    }

    #[test]
    fn predicting_training_rows_reproduces_training_scores() {
        let pair = SyntheticTaskSpec::no_shift(2, 6, 15, 11).generate().unwrap();
        let hyper = HyperParams {
            d: 2,
            p: 5,
            ..HyperParams::default()
        };
        let outcome = adapt(&pair, &hyper, &FitOptions::default()).unwrap();
        let model = &outcome.model;

        let train = FeatureMatrix::unlabeled(model.train_features.clone(), Domain::Target);
        let (_, scores) = predict(model, &train).unwrap();
        let spec = model.kernel;
        let k = kernel_matrix(&model.train_features, &spec).unwrap();
        let training_scores = &k * &model.beta;
        assert_eq!(scores, training_scores);
    }

    #[test]
    fn zero_coefficients_predict_the_first_class() {
        let scores = DMatrix::zeros(5, 3);
        assert_eq!(argmax_labels(&scores), vec![1; 5]);
    }

    #[test]
    fn identical_domains_reach_full_accuracy() {
        let spec = SyntheticTaskSpec::no_shift(3, 8, 30, 2);
        let pair = spec.generate().unwrap();
        let hyper = HyperParams {
            d: 3,
            p: 5,
            ..HyperParams::default()
        };
        let outcome = adapt(&pair, &hyper, &FitOptions::default()).unwrap();
        assert_eq!(outcome.final_accuracy, Some(1.0));
        assert_eq!(outcome.baseline_accuracy, Some(1.0));
    }

    #[test]
    fn single_iteration_budget_is_respected() {
        let pair = SyntheticTaskSpec::no_shift(2, 6, 12, 4).generate().unwrap();
        let hyper = HyperParams {
            d: 2,
            p: 4,
            t_max: 1,
            ..HyperParams::default()
        };
        let outcome = adapt(&pair, &hyper, &FitOptions::default()).unwrap();
        assert_eq!(outcome.model.mu_history.len(), 1);
        assert_eq!(outcome.model.iterations_run(), 1);
    }

    #[test]
    fn refinement_beats_the_baseline_on_a_shifted_task() {
        let pair = SyntheticTaskSpec::moderate_shift(3).generate().unwrap();
        let hyper = HyperParams {
            d: 3,
            ..HyperParams::default()
        };
        let outcome = adapt(&pair, &hyper, &FitOptions::default()).unwrap();
        let final_acc = outcome.final_accuracy.unwrap();
        let base_acc = outcome.baseline_accuracy.unwrap();
        assert!(
            final_acc >= base_acc,
            "adaptation {final_acc} under baseline {base_acc}"
        );
        // Agreement is non-decreasing over the last three iterations.
        let hist = &outcome.model.label_history;
        if hist.len() >= 3 {
            let tail = &hist[hist.len() - 3..];
            assert!(tail[0] <= tail[1] + 1e-12 && tail[1] <= tail[2] + 1e-12, "tail {tail:?}");
        }
    }

    #[test]
    fn fit_is_bit_deterministic() {
        let pair = SyntheticTaskSpec::moderate_shift(8).generate().unwrap();
        let hyper = HyperParams {
            d: 3,
            t_max: 4,
            ..HyperParams::default()
        };
        let a = adapt(&pair, &hyper, &FitOptions::default()).unwrap();
        let b = adapt(&pair, &hyper, &FitOptions::default()).unwrap();
        assert_eq!(a.model.pseudo_label_history, b.model.pseudo_label_history);
        assert_eq!(a.model.mu_history, b.model.mu_history);
        assert_eq!(a.model.beta, b.model.beta);
    }

    #[test]
    fn model_round_trips_through_the_container() {
        let pair = SyntheticTaskSpec::no_shift(2, 6, 10, 6).generate().unwrap();
        let hyper = HyperParams {
            d: 2,
            p: 4,
            t_max: 2,
            ..HyperParams::default()
        };
        let outcome = adapt(&pair, &hyper, &FitOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        outcome.model.save(&path).unwrap();
        let loaded = MedaModel::load(&path).unwrap();

        assert_eq!(loaded.beta, outcome.model.beta);
        assert_eq!(loaded.train_features, outcome.model.train_features);
        assert_eq!(loaded.sqrt_g, outcome.model.sqrt_g);

        let query = FeatureMatrix::unlabeled(outcome.model.train_features.clone(), Domain::Target);
        let (l1, s1) = predict(&outcome.model, &query).unwrap();
        let (l2, s2) = predict(&loaded, &query).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(s1, s2);
    }
}
