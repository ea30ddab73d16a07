//! Grassmann-manifold feature learning.
//!
//! Each domain is summarized by the span of its top-d principal
//! directions, a point on the Grassmann manifold G(d). The geodesic
//! `Φ(t)` between the source point (`t = 0`) and the target point
//! (`t = 1`) induces a kernel by integrating projected inner products
//! along the path:
//!
//! ```text
//! ⟨z_i, z_j⟩ = ∫₀¹ (Φ(t)ᵀ x_i)ᵀ (Φ(t)ᵀ x_j) dt = x_iᵀ G x_j
//! ```
//!
//! `G` has a closed form in the principal angles between the two
//! subspaces, computed here from the SVD of `P_sᵀ P_t` together with the
//! orthogonal complement of the source basis. Features are mapped onto
//! the manifold as `z = √G · x`, with the square root produced by the
//! Denman-Beavers iteration.

use nalgebra::{DMatrix, DVector};

use crate::data::FeatureMatrix;
use crate::error::{MedaError, Result};
use crate::linalg;

/// Convergence tolerance for the Denman-Beavers square root.
pub const SQRT_TOLERANCE: f64 = 1e-10;
/// Iteration cap for the Denman-Beavers square root.
pub const SQRT_MAX_ITER: usize = 100;

/// Angles below this threshold evaluate the kernel coefficients by their
/// series limits instead of the 0/0-prone closed forms.
const SMALL_ANGLE: f64 = 1e-10;

/// A d-dimensional subspace of R^D with orthonormal basis columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    basis: DMatrix<f64>,
    explained_variance: DVector<f64>,
}

impl Subspace {
    /// Validates orthonormality (`basisᵀ·basis = I` within 1e-10 Frobenius)
    /// and the `d ≤ D/2` requirement of the geodesic construction.
    pub fn new(basis: DMatrix<f64>, explained_variance: DVector<f64>) -> Result<Self> {
        let (dim, d) = (basis.nrows(), basis.ncols());
        if d == 0 || 2 * d > dim {
            return Err(MedaError::Dimension(format!(
                "subspace dimension {d} must satisfy 1 ≤ d ≤ D/2 with D = {dim}"
            )));
        }
        if explained_variance.len() != d {
            return Err(MedaError::Dimension(format!(
                "{} variance entries for a {d}-dimensional subspace",
                explained_variance.len()
            )));
        }
        let gram_err = (basis.transpose() * &basis - DMatrix::identity(d, d)).norm();
        if gram_err.is_nan() || gram_err >= 1e-10 {
            return Err(MedaError::Degenerate(format!(
                "basis columns are not orthonormal (‖BᵀB − I‖ = {gram_err:.3e})"
            )));
        }
        if explained_variance.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(MedaError::Degenerate(
                "explained variance must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            basis,
            explained_variance,
        })
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn explained_variance(&self) -> &DVector<f64> {
        &self.explained_variance
    }

    /// Subspace dimension d.
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Ambient dimension D.
    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }
}

/// Top-d principal directions of the mean-centered data.
///
/// The basis columns are orthonormal eigenvectors of the sample
/// covariance, ordered by descending explained variance, with each
/// column's sign fixed so its largest-magnitude entry is positive.
pub fn pca_subspace(x: &FeatureMatrix, d: usize) -> Result<Subspace> {
    let (n, dim) = (x.n_samples(), x.dim());
    if d == 0 || 2 * d > dim {
        return Err(MedaError::Dimension(format!(
            "PCA dimension {d} must satisfy 1 ≤ d ≤ D/2 with D = {dim}"
        )));
    }
    if n < d {
        return Err(MedaError::Dimension(format!(
            "need at least {d} samples for a {d}-dimensional subspace, got {n}"
        )));
    }
    if !x.data().iter().all(|v| v.is_finite()) {
        return Err(MedaError::Degenerate("PCA input contains non-finite values".into()));
    }

    let mut centered = x.data().clone();
    for j in 0..dim {
        let mu = centered.column(j).sum() / n as f64;
        for i in 0..n {
            centered[(i, j)] -= mu;
        }
    }
    let denom = (n as f64 - 1.0).max(1.0);
    let cov = centered.transpose() * &centered / denom;
    let (values, vectors) = linalg::symmetric_eigen_desc(&cov);

    let lead = values[0].max(0.0);
    let rank_tol = lead * 1e-12 * dim as f64;
    let rank = values.iter().filter(|&&v| v > rank_tol).count();
    if d > rank {
        return Err(MedaError::Dimension(format!(
            "requested {d} components but centered data has rank {rank}"
        )));
    }

    let mut basis = vectors.columns(0, d).into_owned();
    for mut col in basis.column_iter_mut() {
        let pivot = col
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.abs().partial_cmp(&b.abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
    }
    let explained = DVector::from_fn(d, |i, _| values[i].max(0.0));
    Subspace::new(basis, explained)
}

/// The geodesic flow kernel between two subspaces: the kernel matrix `G`,
/// its principal square root, and the principal angles parameterizing the
/// flow.
#[derive(Debug, Clone)]
pub struct GeodesicKernel {
    g: DMatrix<f64>,
    sqrt_g: DMatrix<f64>,
    principal_angles: DVector<f64>,
    dim: usize,
    flow_source: DMatrix<f64>,
    flow_complement: DMatrix<f64>,
}

impl GeodesicKernel {
    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn sqrt_g(&self) -> &DMatrix<f64> {
        &self.sqrt_g
    }

    /// Principal angles in `[0, π/2]`, ascending.
    pub fn principal_angles(&self) -> &DVector<f64> {
        &self.principal_angles
    }

    /// Subspace dimension d.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Ambient dimension D.
    pub fn ambient_dim(&self) -> usize {
        self.g.nrows()
    }

    /// The geodesic point `Φ(t)`: a D×d orthonormal basis interpolating
    /// the source span (`t = 0`) into the target span (`t = 1`).
    pub fn flow_point(&self, t: f64) -> DMatrix<f64> {
        let d = self.dim;
        let mut phi = DMatrix::zeros(self.ambient_dim(), d);
        for i in 0..d {
            let theta = self.principal_angles[i] * t;
            let (sin_t, cos_t) = theta.sin_cos();
            let col = self.flow_source.column(i) * cos_t - self.flow_complement.column(i) * sin_t;
            phi.set_column(i, &col);
        }
        phi
    }

    /// Wraps a caller-supplied symmetric PSD kernel matrix, computing its
    /// square root. No principal-angle structure is attached.
    pub fn from_kernel_matrix(g: DMatrix<f64>) -> Result<Self> {
        if g.nrows() != g.ncols() {
            return Err(MedaError::Dimension(format!(
                "kernel matrix must be square, got {}x{}",
                g.nrows(),
                g.ncols()
            )));
        }
        if (&g - g.transpose()).norm() > 1e-8 * g.norm().max(1.0) {
            return Err(MedaError::Degenerate("kernel matrix is not symmetric".into()));
        }
        let (sqrt_g, _) = linalg::matrix_sqrt_psd(&g, SQRT_TOLERANCE, SQRT_MAX_ITER)?;
        let dim_zero = DMatrix::zeros(g.nrows(), 0);
        Ok(Self {
            g,
            sqrt_g,
            principal_angles: DVector::zeros(0),
            dim: 0,
            flow_source: dim_zero.clone(),
            flow_complement: dim_zero,
        })
    }
}

/// Closed-form geodesic flow kernel between the source and target
/// subspaces.
///
/// Writing `P_sᵀ P_t = U₁ Γ V₁ᵀ` and `R_sᵀ P_t = −U₂ Σ V₁ᵀ` (with `R_s`
/// the orthogonal complement of the source basis), the flow is
/// `Φ(t) = P_s U₁ cos(tΘ) − R_s U₂ sin(tΘ)` and the integral over
/// `t ∈ [0, 1]` reduces to fixed trigonometric coefficients per angle.
/// Angles at the 0/0 limits are evaluated by series expansion.
pub fn geodesic_flow_kernel(s_src: &Subspace, s_tgt: &Subspace) -> Result<GeodesicKernel> {
    if s_src.ambient_dim() != s_tgt.ambient_dim() || s_src.dim() != s_tgt.dim() {
        return Err(MedaError::Dimension(format!(
            "subspaces must share shape, got {}x{} vs {}x{}",
            s_src.ambient_dim(),
            s_src.dim(),
            s_tgt.ambient_dim(),
            s_tgt.dim()
        )));
    }
    let (dim, d) = (s_src.ambient_dim(), s_src.dim());
    let p_s = s_src.basis();
    let p_t = s_tgt.basis();

    let overlap = p_s.transpose() * p_t;
    let svd = overlap.clone().svd(true, true);
    let u1 = svd.u.as_ref().expect("svd with u");
    let v1 = svd.v_t.as_ref().expect("svd with v_t").transpose();

    let complement = linalg::orthonormal_complement(p_s)?;
    // Column i of `residual` has norm sin(θ_i) by the CS decomposition.
    let residual = -(complement.transpose() * p_t * &v1);

    let mut angles = DVector::zeros(d);
    let mut u2 = DMatrix::zeros(dim - d, d);
    for i in 0..d {
        let cos_theta = svd.singular_values[i].clamp(0.0, 1.0);
        let sin_theta = residual.column(i).norm();
        let theta = sin_theta.atan2(cos_theta);
        if !theta.is_finite() {
            return Err(MedaError::Degenerate(format!(
                "principal angle {i} is non-finite"
            )));
        }
        angles[i] = theta;
        if sin_theta > 1e-12 {
            u2.set_column(i, &(residual.column(i) / sin_theta));
        }
    }

    let flow_source = p_s * u1;
    let flow_complement = &complement * u2;

    // G = [P_s U₁ | R_s U₂] · [[Λ₁, Λ₂], [Λ₂, Λ₃]] · [P_s U₁ | R_s U₂]ᵀ
    let mut lambda = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        let theta = angles[i];
        let (l1, l2, l3) = if theta < SMALL_ANGLE {
            let t2 = theta * theta;
            (1.0 - t2 / 3.0, -theta / 2.0, t2 / 3.0)
        } else {
            let two = 2.0 * theta;
            (
                0.5 + two.sin() / (4.0 * theta),
                -(1.0 - two.cos()) / (4.0 * theta),
                0.5 - two.sin() / (4.0 * theta),
            )
        };
        lambda[(i, i)] = l1;
        lambda[(i, d + i)] = l2;
        lambda[(d + i, i)] = l2;
        lambda[(d + i, d + i)] = l3;
    }

    let mut blocks = DMatrix::zeros(dim, 2 * d);
    blocks.view_mut((0, 0), (dim, d)).copy_from(&flow_source);
    blocks
        .view_mut((0, d), (dim, d))
        .copy_from(&flow_complement);
    let mut g = &blocks * lambda * blocks.transpose();
    linalg::symmetrize(&mut g);
    if !g.iter().all(|v| v.is_finite()) {
        return Err(MedaError::Degenerate(
            "geodesic flow kernel has non-finite entries".into(),
        ));
    }

    let (mut sqrt_g, _) = linalg::matrix_sqrt_psd(&g, SQRT_TOLERANCE, SQRT_MAX_ITER)?;
    linalg::symmetrize(&mut sqrt_g);

    Ok(GeodesicKernel {
        g,
        sqrt_g,
        principal_angles: angles,
        dim: d,
        flow_source,
        flow_complement,
    })
}

/// Maps every row of `x` through the manifold kernel: `z_i = √G · x_i`.
/// The domain tag and labels are preserved.
pub fn manifold_transform(g: &GeodesicKernel, x: &FeatureMatrix) -> Result<FeatureMatrix> {
    if x.dim() != g.ambient_dim() {
        return Err(MedaError::Dimension(format!(
            "features have {} columns but kernel expects {}",
            x.dim(),
            g.ambient_dim()
        )));
    }
    // √G is symmetric, so row-wise mapping is a single right-multiply.
    let z = x.data() * &g.sqrt_g;
    FeatureMatrix::new(z, x.domain(), x.labels().map(|l| l.to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Domain;
    use crate::testutil;
    use approx::assert_relative_eq;

    fn labeled(data: DMatrix<f64>) -> FeatureMatrix {
        FeatureMatrix::unlabeled(data, Domain::Source)
    }

    /// Trapezoid quadrature of the flow integral for one vector pair.
    fn quadrature_inner_product(
        kernel: &GeodesicKernel,
        x_i: &DVector<f64>,
        x_j: &DVector<f64>,
        points: usize,
    ) -> f64 {
        // Projections onto the flow factors are fixed; only the angle
        // rotation varies with t.
        let a_i = kernel.flow_source.transpose() * x_i;
        let b_i = kernel.flow_complement.transpose() * x_i;
        let a_j = kernel.flow_source.transpose() * x_j;
        let b_j = kernel.flow_complement.transpose() * x_j;
        let angles = kernel.principal_angles();

        let integrand = |t: f64| -> f64 {
            let mut acc = 0.0;
            for k in 0..angles.len() {
                let (s, c) = (angles[k] * t).sin_cos();
                let u = c * a_i[k] - s * b_i[k];
                let v = c * a_j[k] - s * b_j[k];
                acc += u * v;
            }
            acc
        };

        let h = 1.0 / (points as f64 - 1.0);
        let mut total = 0.5 * (integrand(0.0) + integrand(1.0));
        for step in 1..points - 1 {
            total += integrand(h * step as f64);
        }
        total * h
    }

    #[test]
    fn pca_recovers_the_diagonal_line() {
        let n = 20;
        let data = DMatrix::from_fn(n, 2, |i, _| i as f64 - 9.5);
        let sub = pca_subspace(&labeled(data), 1).unwrap();
        let inv = 1.0 / 2.0_f64.sqrt();
        let b = sub.basis();
        assert_relative_eq!(b[(0, 0)].abs(), inv, epsilon = 1e-10);
        assert_relative_eq!(b[(1, 0)].abs(), inv, epsilon = 1e-10);
        assert_relative_eq!(b[(0, 0)], b[(1, 0)], epsilon = 1e-10);
    }

    #[test]
    fn pca_on_isotropic_data_has_flat_spectrum() {
        let mut rng = testutil::rng(17);
        let data = testutil::random_matrix(&mut rng, 4000, 4);
        let sub = pca_subspace(&labeled(data), 2).unwrap();
        let ev = sub.explained_variance();
        let ratio = ev[0] / ev[1];
        assert!(ratio < 1.15, "variance ratio {ratio}");
    }

    #[test]
    fn pca_matches_full_svd_oracle() {
        let mut rng = testutil::rng(23);
        let data = testutil::random_matrix(&mut rng, 50, 8);
        let sub = pca_subspace(&labeled(data.clone()), 3).unwrap();

        // Oracle: right singular vectors of the centered data.
        let mut centered = data;
        for j in 0..8 {
            let mu = centered.column(j).sum() / 50.0;
            for i in 0..50 {
                centered[(i, j)] -= mu;
            }
        }
        let svd = centered.svd(false, true);
        let v = svd.v_t.unwrap().transpose().columns(0, 3).into_owned();
        let angle = linalg::max_principal_angle(sub.basis(), &v).unwrap();
        assert!(angle < 1e-8, "principal angle {angle}");
    }

    #[test]
    fn pca_rejects_oversized_and_rank_deficient_requests() {
        let mut rng = testutil::rng(29);
        let data = testutil::random_matrix(&mut rng, 10, 6);
        assert!(matches!(
            pca_subspace(&labeled(data.clone()), 4),
            Err(MedaError::Dimension(_))
        ));
        // Rank-1 data cannot support d = 2... but d = 2 ≤ D/2 = 3, so the
        // rank check is what trips.
        let line = DMatrix::from_fn(12, 6, |i, j| (i as f64) * (j as f64 + 1.0));
        assert!(matches!(
            pca_subspace(&labeled(line), 2),
            Err(MedaError::Dimension(_))
        ));
    }

    #[test]
    fn pca_is_idempotent_on_its_own_projection() {
        let mut rng = testutil::rng(31);
        let data = testutil::random_matrix(&mut rng, 40, 10);
        let sub = pca_subspace(&labeled(data.clone()), 4).unwrap();
        let projected = &data * sub.basis() * sub.basis().transpose();
        let sub2 = pca_subspace(&labeled(projected), 4).unwrap();
        let angle = linalg::max_principal_angle(sub.basis(), sub2.basis()).unwrap();
        assert!(angle < 1e-8, "principal angle {angle}");
    }

    #[test]
    fn identical_subspaces_give_the_projection_kernel() {
        let mut rng = testutil::rng(37);
        let basis = testutil::random_orthonormal(&mut rng, 12, 4);
        let sub = Subspace::new(basis.clone(), DVector::from_element(4, 1.0)).unwrap();
        let kernel = geodesic_flow_kernel(&sub, &sub).unwrap();

        assert!(kernel.principal_angles().amax() < 1e-7);
        let projection = &basis * basis.transpose();
        assert!((kernel.g() - &projection).norm() < 1e-7);

        // ⟨z_i, z_j⟩ = x_iᵀ P Pᵀ x_j for any pair.
        let x_i = testutil::random_matrix(&mut rng, 12, 1).column(0).into_owned();
        let x_j = testutil::random_matrix(&mut rng, 12, 1).column(0).into_owned();
        let lhs = (kernel.sqrt_g() * &x_i).dot(&(kernel.sqrt_g() * &x_j));
        let rhs = (basis.transpose() * &x_i).dot(&(basis.transpose() * &x_j));
        assert_relative_eq!(lhs, rhs, epsilon = 1e-7, max_relative = 1e-6);
    }

    #[test]
    fn flow_endpoints_span_the_input_subspaces() {
        let mut rng = testutil::rng(41);
        for _ in 0..10 {
            let src = testutil::random_orthonormal(&mut rng, 11, 3);
            let tgt = testutil::random_orthonormal(&mut rng, 11, 3);
            let s_src = Subspace::new(src.clone(), DVector::from_element(3, 1.0)).unwrap();
            let s_tgt = Subspace::new(tgt.clone(), DVector::from_element(3, 1.0)).unwrap();
            let kernel = geodesic_flow_kernel(&s_src, &s_tgt).unwrap();

            let start = kernel.flow_point(0.0);
            let end = kernel.flow_point(1.0);
            assert!(linalg::max_principal_angle(&start, &src).unwrap() < 1e-8);
            assert!(linalg::max_principal_angle(&end, &tgt).unwrap() < 1e-8);
        }
    }

    #[test]
    fn closed_form_matches_quadrature_oracle() {
        let mut rng = testutil::rng(43);
        let src = testutil::random_orthonormal(&mut rng, 10, 3);
        let tgt = testutil::random_orthonormal(&mut rng, 10, 3);
        let s_src = Subspace::new(src, DVector::from_element(3, 1.0)).unwrap();
        let s_tgt = Subspace::new(tgt, DVector::from_element(3, 1.0)).unwrap();
        let kernel = geodesic_flow_kernel(&s_src, &s_tgt).unwrap();

        for _ in 0..5 {
            let x_i = testutil::random_matrix(&mut rng, 10, 1).column(0).into_owned();
            let x_j = testutil::random_matrix(&mut rng, 10, 1).column(0).into_owned();
            let closed = (x_i.transpose() * kernel.g() * &x_j)[(0, 0)];
            let quad = quadrature_inner_product(&kernel, &x_i, &x_j, 10_000);
            let scale = x_i.norm() * x_j.norm();
            let rel = (closed - quad).abs() / quad.abs().max(1e-6 * scale);
            assert!(rel < 1e-4, "closed {closed} vs quadrature {quad}");
        }
    }

    #[test]
    fn kernel_is_psd_and_square_root_squares_back() {
        let mut rng = testutil::rng(47);
        for trial in 0..30 {
            let dim = 6 + (trial % 10);
            let d = 1 + trial % (dim / 2);
            let src = testutil::random_orthonormal(&mut rng, dim, d);
            let tgt = testutil::random_orthonormal(&mut rng, dim, d);
            let s_src = Subspace::new(src, DVector::from_element(d, 1.0)).unwrap();
            let s_tgt = Subspace::new(tgt, DVector::from_element(d, 1.0)).unwrap();
            let kernel = geodesic_flow_kernel(&s_src, &s_tgt).unwrap();

            let eig = kernel.g().clone().symmetric_eigen();
            let min_eig = eig.eigenvalues.min();
            let spectral = eig.eigenvalues.amax();
            assert!(min_eig >= -1e-8 * spectral.max(1.0), "min eigenvalue {min_eig}");

            let sqrt_err =
                (kernel.sqrt_g() * kernel.sqrt_g() - kernel.g()).norm() / kernel.g().norm();
            assert!(sqrt_err < 1e-6, "square root residual {sqrt_err}");
        }
    }

    #[test]
    fn transform_with_identity_kernel_is_identity() {
        let kernel = GeodesicKernel::from_kernel_matrix(DMatrix::identity(5, 5)).unwrap();
        let mut rng = testutil::rng(53);
        let x = labeled(testutil::random_matrix(&mut rng, 8, 5));
        let z = manifold_transform(&kernel, &x).unwrap();
        assert!((z.data() - x.data()).norm() < 1e-12);
    }

    #[test]
    fn transform_preserves_kernel_inner_products() {
        let mut rng = testutil::rng(59);
        let src = testutil::random_orthonormal(&mut rng, 10, 3);
        let tgt = testutil::random_orthonormal(&mut rng, 10, 3);
        let s_src = Subspace::new(src, DVector::from_element(3, 1.0)).unwrap();
        let s_tgt = Subspace::new(tgt, DVector::from_element(3, 1.0)).unwrap();
        let kernel = geodesic_flow_kernel(&s_src, &s_tgt).unwrap();

        let x = labeled(testutil::random_matrix(&mut rng, 20, 10));
        let z = manifold_transform(&kernel, &x).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let zz = z.data().row(i).dot(&z.data().row(j));
                let xgx = (x.data().row(i) * kernel.g() * x.data().row(j).transpose())[(0, 0)];
                assert_relative_eq!(zz, xgx, epsilon = 1e-8, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn transform_matches_eigendecomposition_oracle() {
        let mut rng = testutil::rng(61);
        let src = testutil::random_orthonormal(&mut rng, 10, 3);
        let tgt = testutil::random_orthonormal(&mut rng, 10, 3);
        let s_src = Subspace::new(src, DVector::from_element(3, 1.0)).unwrap();
        let s_tgt = Subspace::new(tgt, DVector::from_element(3, 1.0)).unwrap();
        let kernel = geodesic_flow_kernel(&s_src, &s_tgt).unwrap();

        // Oracle square root: eigendecomposition with the numerical null
        // space clamped to zero (eigenvalues at rounding level would
        // otherwise inject √ε noise into the comparison).
        let eig = kernel.g().clone().symmetric_eigen();
        let lead = eig.eigenvalues.amax();
        let mut oracle_sqrt = DMatrix::zeros(10, 10);
        for k in 0..10 {
            let lam = eig.eigenvalues[k];
            if lam > 1e-12 * lead {
                let v = eig.eigenvectors.column(k);
                oracle_sqrt += v * v.transpose() * lam.sqrt();
            }
        }

        let x = labeled(testutil::random_matrix(&mut rng, 20, 10));
        let z = manifold_transform(&kernel, &x).unwrap();
        let z_oracle = x.data() * oracle_sqrt;
        let err = (z.data() - z_oracle).norm();
        assert!(err < 1e-8, "Frobenius gap {err}");
    }

    #[test]
    fn transform_rejects_dimension_mismatch() {
        let kernel = GeodesicKernel::from_kernel_matrix(DMatrix::identity(5, 5)).unwrap();
        let mut rng = testutil::rng(67);
        let x = labeled(testutil::random_matrix(&mut rng, 4, 6));
        assert!(matches!(
            manifold_transform(&kernel, &x),
            Err(MedaError::Dimension(_))
        ));
    }
}