//! Dynamic distribution alignment: MMD matrices and the adaptive factor.
//!
//! The marginal MMD matrix `M0` and the per-class conditional matrices
//! `Mc` turn projected mean differences between domains into quadratic
//! forms: `tr(fᵀ M0 f)` is the squared difference of domain means of `f`,
//! and `tr(fᵀ Mc f)` the squared difference of class-c means. The two
//! kinds are mixed by an adaptive factor `μ ∈ [0, 1]`,
//!
//! ```text
//! M = (1 − μ)·M0 + μ·Σ_c Mc
//! ```
//!
//! estimated from proxy A-distances: `μ̂ = 1 − d_M / (d_M + Σ_c d_c)`,
//! where each distance is `2(1 − 2ε)` for the held-out error `ε` of a
//! linear classifier discriminating the relevant source and target
//! subsets. Small `μ̂` weights marginal alignment, large `μ̂` conditional
//! alignment, `μ̂ = 0.5` treats both equally.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{MedaError, Result};
use crate::parallel;

/// Ridge strength of the domain-discriminating linear classifier.
const DISCRIMINATOR_RIDGE: f64 = 1.0;

/// Marginal MMD matrix for `n` source rows followed by `m` target rows.
///
/// Entries are `1/n²` (both source), `1/m²` (both target), `−1/(mn)`
/// otherwise; equivalently the rank-1 outer product `a·aᵀ` of the signed
/// mean-weight vector.
pub fn build_m0(n: usize, m: usize) -> Result<DMatrix<f64>> {
    if n == 0 || m == 0 {
        return Err(MedaError::EmptyInput(
            "marginal MMD needs at least one sample per domain".into(),
        ));
    }
    let weights = mean_weights(n, m);
    Ok(&weights * weights.transpose())
}

fn mean_weights(n: usize, m: usize) -> DVector<f64> {
    DVector::from_fn(n + m, |i, _| {
        if i < n {
            1.0 / n as f64
        } else {
            -1.0 / m as f64
        }
    })
}

/// A conditional MMD matrix together with the class membership counts
/// that produced it. A class with no target members yields the zero
/// matrix; `target_is_empty` lets callers observe the degenerate case
/// without an error path.
#[derive(Debug, Clone)]
pub struct ConditionalMmd {
    pub matrix: DMatrix<f64>,
    pub source_count: usize,
    pub target_count: usize,
}

impl ConditionalMmd {
    pub fn target_is_empty(&self) -> bool {
        self.target_count == 0
    }
}

/// Conditional MMD matrix for class `class`, restricted to labeled source
/// rows and pseudo-labeled target rows of that class.
pub fn build_mc(
    labels_src: &[i64],
    pseudo_labels_tgt: &[i64],
    class: i64,
) -> Result<ConditionalMmd> {
    let n = labels_src.len();
    let m = pseudo_labels_tgt.len();
    let source_count = labels_src.iter().filter(|&&l| l == class).count();
    if source_count == 0 {
        return Err(MedaError::InvalidParameter(format!(
            "class {class} has no source members"
        )));
    }
    let target_count = pseudo_labels_tgt.iter().filter(|&&l| l == class).count();
    if target_count == 0 {
        return Ok(ConditionalMmd {
            matrix: DMatrix::zeros(n + m, n + m),
            source_count,
            target_count,
        });
    }
    let mut weights = DVector::zeros(n + m);
    for (i, &l) in labels_src.iter().enumerate() {
        if l == class {
            weights[i] = 1.0 / source_count as f64;
        }
    }
    for (j, &l) in pseudo_labels_tgt.iter().enumerate() {
        if l == class {
            weights[n + j] = -1.0 / target_count as f64;
        }
    }
    Ok(ConditionalMmd {
        matrix: &weights * weights.transpose(),
        source_count,
        target_count,
    })
}

/// Weighted combination `(1 − μ)·M0 + μ·Σ Mc`.
pub fn combine(m0: &DMatrix<f64>, mc_list: &[DMatrix<f64>], mu: f64) -> Result<DMatrix<f64>> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(MedaError::InvalidParameter(format!(
            "adaptive factor {mu} outside [0, 1]"
        )));
    }
    let mut combined = m0 * (1.0 - mu);
    for mc in mc_list {
        if mc.shape() != m0.shape() {
            return Err(MedaError::Dimension(format!(
                "conditional matrix shape {:?} != marginal shape {:?}",
                mc.shape(),
                m0.shape()
            )));
        }
        combined += mc * mu;
    }
    Ok(combined)
}

/// The assembled alignment state for one solver iteration.
#[derive(Debug, Clone)]
pub struct AlignmentState {
    pub m0: DMatrix<f64>,
    pub mc: Vec<DMatrix<f64>>,
    pub mu: f64,
    pub combined: DMatrix<f64>,
}

impl AlignmentState {
    /// Builds `M0`, every `Mc` for classes `1..=C` (C from the source
    /// labels), and their μ-weighted combination. Classes with no source
    /// members contribute a zero matrix, mirroring the empty-target rule.
    pub fn build(labels_src: &[i64], pseudo_labels_tgt: &[i64], mu: f64) -> Result<Self> {
        let n = labels_src.len();
        let m = pseudo_labels_tgt.len();
        let class_count = validate_labels(labels_src)?;
        let m0 = build_m0(n, m)?;
        let mut mc = Vec::with_capacity(class_count);
        for class in 1..=class_count as i64 {
            if labels_src.contains(&class) {
                mc.push(build_mc(labels_src, pseudo_labels_tgt, class)?.matrix);
            } else {
                mc.push(DMatrix::zeros(n + m, n + m));
            }
        }
        let combined = combine(&m0, &mc, mu)?;
        Ok(Self {
            m0,
            mc,
            mu,
            combined,
        })
    }
}

/// Memory-lean equivalent of [`AlignmentState::build`] that accumulates
/// the rank-1 MMD terms straight into a single matrix (within 1e-12 of
/// the assembled route). The solver loop uses this to avoid materializing
/// one full matrix per class.
pub fn combined_matrix(
    labels_src: &[i64],
    pseudo_labels_tgt: &[i64],
    mu: f64,
) -> Result<DMatrix<f64>> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(MedaError::InvalidParameter(format!(
            "adaptive factor {mu} outside [0, 1]"
        )));
    }
    let n = labels_src.len();
    let m = pseudo_labels_tgt.len();
    if n == 0 || m == 0 {
        return Err(MedaError::EmptyInput(
            "marginal MMD needs at least one sample per domain".into(),
        ));
    }
    let class_count = validate_labels(labels_src)?;

    let mut combined = DMatrix::zeros(n + m, n + m);
    let marginal = mean_weights(n, m);
    combined.ger(1.0 - mu, &marginal, &marginal, 1.0);

    for class in 1..=class_count as i64 {
        let n_c = labels_src.iter().filter(|&&l| l == class).count();
        let m_c = pseudo_labels_tgt.iter().filter(|&&l| l == class).count();
        if n_c == 0 || m_c == 0 {
            continue;
        }
        let mut weights = DVector::zeros(n + m);
        for (i, &l) in labels_src.iter().enumerate() {
            if l == class {
                weights[i] = 1.0 / n_c as f64;
            }
        }
        for (j, &l) in pseudo_labels_tgt.iter().enumerate() {
            if l == class {
                weights[n + j] = -1.0 / m_c as f64;
            }
        }
        combined.ger(mu, &weights, &weights, 1.0);
    }
    Ok(combined)
}

fn validate_labels(labels: &[i64]) -> Result<usize> {
    let mut max = 0i64;
    for &l in labels {
        if l < 1 {
            return Err(MedaError::InvalidParameter(format!(
                "labels must be ≥ 1 after re-indexing, found {l}"
            )));
        }
        max = max.max(l);
    }
    if max == 0 {
        return Err(MedaError::EmptyInput("no labels supplied".into()));
    }
    Ok(max as usize)
}

/// Proxy A-distance and the per-class breakdown behind one μ̂ estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ADistanceReport {
    pub d_marginal: f64,
    pub d_conditional: Vec<f64>,
    pub classifier_errors: ClassifierErrors,
}

/// Held-out error rates of the domain discriminators. A conditional slot
/// records chance level (0.5) when its class lacks enough members on
/// either side to be measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierErrors {
    pub marginal: f64,
    pub conditional: Vec<f64>,
}

/// Maps a discriminator error rate to a proxy A-distance, clamping
/// worse-than-chance errors to chance so the result stays in `[0, 2]`.
pub fn a_distance_from_error(error_rate: f64) -> f64 {
    let eps = error_rate.min(1.0 - error_rate).clamp(0.0, 0.5);
    2.0 * (1.0 - 2.0 * eps)
}

/// Proxy A-distance between two sample sets: `2(1 − 2ε)` with `ε` the
/// held-out error of a ridge discriminator labeling `x_a` vs `x_b`.
///
/// The estimate uses a stratified 2-fold split averaged over both folds.
/// Fold assignment is derived from a canonical (sorted) sample order plus
/// a seeded shuffle, so it is invariant to the order samples arrive in
/// and symmetric in the two arguments.
pub fn a_distance(x_a: &FeatureMatrix, x_b: &FeatureMatrix, seed: u64) -> Result<f64> {
    a_distance_with_error(x_a, x_b, seed).map(|(d, _)| d)
}

/// [`a_distance`] plus the raw held-out error rate.
pub fn a_distance_with_error(
    x_a: &FeatureMatrix,
    x_b: &FeatureMatrix,
    seed: u64,
) -> Result<(f64, f64)> {
    if x_a.dim() != x_b.dim() {
        return Err(MedaError::Dimension(format!(
            "domains have {} and {} features",
            x_a.dim(),
            x_b.dim()
        )));
    }
    if x_a.n_samples() < 2 || x_b.n_samples() < 2 {
        return Err(MedaError::InsufficientData(format!(
            "A-distance needs ≥ 2 samples per side, got {} and {}",
            x_a.n_samples(),
            x_b.n_samples()
        )));
    }
    for fm in [x_a, x_b] {
        if !fm.data().iter().all(|v| v.is_finite()) {
            return Err(MedaError::Degenerate(
                "A-distance input contains non-finite values".into(),
            ));
        }
    }

    let folds_a = fold_assignment(x_a.data(), seed);
    let folds_b = fold_assignment(x_b.data(), seed);

    let mut errors = 0usize;
    let mut tested = 0usize;
    for test_fold in 0..2 {
        let train_a: Vec<usize> = split(&folds_a, 1 - test_fold);
        let test_a: Vec<usize> = split(&folds_a, test_fold);
        let train_b: Vec<usize> = split(&folds_b, 1 - test_fold);
        let test_b: Vec<usize> = split(&folds_b, test_fold);

        let weights = train_discriminator(x_a.data(), &train_a, x_b.data(), &train_b)?;
        errors += count_errors(x_a.data(), &test_a, -1.0, &weights);
        errors += count_errors(x_b.data(), &test_b, 1.0, &weights);
        tested += test_a.len() + test_b.len();
    }
    let eps = errors as f64 / tested as f64;
    Ok((a_distance_from_error(eps), eps))
}

/// Canonical 2-fold assignment: rows are ranked lexicographically, the
/// ranking is shuffled by the seed, and alternate positions form the
/// folds. Depends only on the multiset of rows, not their input order.
fn fold_assignment(data: &DMatrix<f64>, seed: u64) -> Vec<(usize, usize)> {
    let n = data.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        for k in 0..data.ncols() {
            match data[(i, k)].partial_cmp(&data[(j, k)]).expect("finite") {
                std::cmp::Ordering::Equal => continue,
                other => return other,
            }
        }
        std::cmp::Ordering::Equal
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    order
        .into_iter()
        .enumerate()
        .map(|(pos, row)| (row, pos % 2))
        .collect()
}

fn split(assignment: &[(usize, usize)], fold: usize) -> Vec<usize> {
    let mut rows: Vec<usize> = assignment
        .iter()
        .filter(|&&(_, f)| f == fold)
        .map(|&(row, _)| row)
        .collect();
    rows.sort_unstable();
    rows
}

/// Ridge regression on ±1 targets over bias-augmented features. Solves in
/// whichever of the primal/dual forms is smaller.
fn train_discriminator(
    data_a: &DMatrix<f64>,
    rows_a: &[usize],
    data_b: &DMatrix<f64>,
    rows_b: &[usize],
) -> Result<DVector<f64>> {
    let dim = data_a.ncols() + 1;
    let n_train = rows_a.len() + rows_b.len();
    let mut x = DMatrix::zeros(n_train, dim);
    let mut y = DVector::zeros(n_train);
    for (r, &row) in rows_a.iter().enumerate() {
        for j in 0..data_a.ncols() {
            x[(r, j)] = data_a[(row, j)];
        }
        x[(r, dim - 1)] = 1.0;
        y[r] = -1.0;
    }
    for (r, &row) in rows_b.iter().enumerate() {
        let r = rows_a.len() + r;
        for j in 0..data_b.ncols() {
            x[(r, j)] = data_b[(row, j)];
        }
        x[(r, dim - 1)] = 1.0;
        y[r] = 1.0;
    }

    let alpha = DISCRIMINATOR_RIDGE;
    let w = if n_train <= dim {
        // Dual form: w = Xᵀ (X Xᵀ + αI)⁻¹ y
        let gram = &x * x.transpose() + DMatrix::identity(n_train, n_train) * alpha;
        let coeff = gram
            .cholesky()
            .map(|c| c.solve(&y))
            .ok_or_else(|| MedaError::SingularSystem("discriminator gram solve failed".into()))?;
        x.transpose() * coeff
    } else {
        let normal = x.transpose() * &x + DMatrix::identity(dim, dim) * alpha;
        let rhs = x.transpose() * &y;
        normal
            .cholesky()
            .map(|c| c.solve(&rhs))
            .ok_or_else(|| MedaError::SingularSystem("discriminator normal solve failed".into()))?
    };
    Ok(w)
}

fn count_errors(data: &DMatrix<f64>, rows: &[usize], truth: f64, weights: &DVector<f64>) -> usize {
    let dim = data.ncols();
    rows.iter()
        .filter(|&&row| {
            let mut score = weights[dim]; // bias
            for j in 0..dim {
                score += data[(row, j)] * weights[j];
            }
            let predicted = if score >= 0.0 { 1.0 } else { -1.0 };
            predicted != truth
        })
        .count()
}

/// Combines measured distances into the adaptive factor
/// `μ̂ = 1 − d_M / (d_M + Σ d_c)`, clamped to `[0, 1]`. A fully flat
/// measurement (all distances zero) falls back to the equal-weight 0.5.
pub fn mu_from_distances(d_marginal: f64, d_conditional: &[f64]) -> f64 {
    let total = d_marginal + d_conditional.iter().sum::<f64>();
    if total <= 0.0 {
        return 0.5;
    }
    (1.0 - d_marginal / total).clamp(0.0, 1.0)
}

/// Estimates the adaptive factor from the manifold features and the
/// current target pseudo-labels.
///
/// `d_M` is measured on the full domains; each `d_c` on the class-c
/// subsets (zero when a class has fewer than two members on either
/// side). Per-class estimates run independently — and in parallel under
/// the `parallel` feature — with seeds derived from `seed`, so the result
/// is deterministic regardless of scheduling.
pub fn estimate_mu(
    z_src: &FeatureMatrix,
    z_tgt: &FeatureMatrix,
    pseudo_labels_tgt: &[i64],
    seed: u64,
) -> Result<(f64, ADistanceReport)> {
    let labels_src = z_src
        .labels()
        .ok_or_else(|| MedaError::InvalidParameter("source domain must be labeled".into()))?
        .to_vec();
    if pseudo_labels_tgt.len() != z_tgt.n_samples() {
        return Err(MedaError::Dimension(format!(
            "{} pseudo-labels for {} target samples",
            pseudo_labels_tgt.len(),
            z_tgt.n_samples()
        )));
    }
    let class_count = validate_labels(&labels_src)?;

    let (d_marginal, marginal_error) = a_distance_with_error(z_src, z_tgt, seed)?;

    let per_class = parallel::map_indexed(class_count, |idx| -> Result<(f64, f64)> {
        let class = idx as i64 + 1;
        let src_rows: Vec<usize> = labels_src
            .iter()
            .enumerate()
            .filter(|&(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect();
        let tgt_rows: Vec<usize> = pseudo_labels_tgt
            .iter()
            .enumerate()
            .filter(|&(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect();
        if src_rows.len() < 2 || tgt_rows.len() < 2 {
            return Ok((0.0, 0.5));
        }
        let sub_src = FeatureMatrix::unlabeled(select_rows(z_src.data(), &src_rows), z_src.domain());
        let sub_tgt = FeatureMatrix::unlabeled(select_rows(z_tgt.data(), &tgt_rows), z_tgt.domain());
        a_distance_with_error(&sub_src, &sub_tgt, seed.wrapping_add(class as u64))
    });

    let mut d_conditional = Vec::with_capacity(class_count);
    let mut conditional_errors = Vec::with_capacity(class_count);
    for entry in per_class {
        let (d, eps) = entry?;
        d_conditional.push(d);
        conditional_errors.push(eps);
    }

    let mu = mu_from_distances(d_marginal, &d_conditional);
    Ok((
        mu,
        ADistanceReport {
            d_marginal,
            d_conditional,
            classifier_errors: ClassifierErrors {
                marginal: marginal_error,
                conditional: conditional_errors,
            },
        },
    ))
}

pub(crate) fn select_rows(data: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows.len(), data.ncols());
    for (dst, &src) in rows.iter().enumerate() {
        out.row_mut(dst).copy_from(&data.row(src));
    }
    out
}
