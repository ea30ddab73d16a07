//! Dense linear-algebra helpers shared by the solver modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{MedaError, Result};

/// Principal square root of a symmetric positive semidefinite matrix via the
/// inverse-free scaled Denman-Beavers iteration (coupled Newton-Schulz form).
///
/// The input is scaled by its Frobenius norm so the iteration's spectrum
/// lands inside the convergence region, then the root is rescaled on exit.
/// Returns the root together with the iteration count. Fails with
/// [`MedaError::Convergence`] when the relative update does not drop below
/// `tol` within `max_iter` sweeps.
pub fn matrix_sqrt_psd(a: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<(DMatrix<f64>, usize)> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(MedaError::Dimension(format!(
            "matrix square root needs a square input, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let scale = a.norm();
    if scale == 0.0 {
        return Ok((DMatrix::zeros(n, n), 0));
    }
    if !scale.is_finite() {
        return Err(MedaError::Degenerate(
            "matrix square root input contains non-finite values".into(),
        ));
    }

    let eye = DMatrix::<f64>::identity(n, n);
    let mut x = a / scale; // converges to sqrt(a / scale)
    let mut z = eye.clone(); // converges to inverse sqrt(a / scale)

    for iter in 1..=max_iter {
        let t = &eye * 3.0 - &z * &x;
        let x_next = (&x * &t) * 0.5;
        let z_next = (&t * &z) * 0.5;

        let delta = (&x_next - &x).norm();
        let denom = x_next.norm().max(f64::MIN_POSITIVE);
        x = x_next;
        z = z_next;

        if !x.iter().all(|v| v.is_finite()) {
            return Err(MedaError::Convergence {
                method: "Denman-Beavers square root".into(),
                iterations: iter,
            });
        }
        if delta / denom <= tol {
            let mut root = x * scale.sqrt();
            symmetrize(&mut root);
            return Ok((root, iter));
        }
    }
    Err(MedaError::Convergence {
        method: "Denman-Beavers square root".into(),
        iterations: max_iter,
    })
}

/// Replaces `m` with `(m + m^T) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Solves `s * x = rhs` by LU factorization with iterative refinement.
///
/// Refinement repeats until the relative residual
/// `‖rhs − s·x‖_F / ‖rhs‖_F` falls below `rel_tol` (at most `max_refine`
/// correction passes). The factorization failing, or the residual staying
/// above the tolerance, reports [`MedaError::SingularSystem`].
pub fn solve_refined(
    s: &DMatrix<f64>,
    rhs: &DMatrix<f64>,
    rel_tol: f64,
    max_refine: usize,
) -> Result<DMatrix<f64>> {
    if s.nrows() != s.ncols() || s.nrows() != rhs.nrows() {
        return Err(MedaError::Dimension(format!(
            "solve needs square s matching rhs rows, got s {}x{} rhs {}x{}",
            s.nrows(),
            s.ncols(),
            rhs.nrows(),
            rhs.ncols()
        )));
    }
    let rhs_norm = rhs.norm();
    if rhs_norm == 0.0 {
        return Ok(DMatrix::zeros(rhs.nrows(), rhs.ncols()));
    }
    let lu = s.clone().lu();
    let mut x = lu
        .solve(rhs)
        .ok_or_else(|| MedaError::SingularSystem("LU factorization failed".into()))?;

    for _ in 0..=max_refine {
        let residual = rhs - s * &x;
        let rel = residual.norm() / rhs_norm;
        if !rel.is_finite() {
            return Err(MedaError::SingularSystem(
                "solution residual is non-finite".into(),
            ));
        }
        if rel <= rel_tol {
            return Ok(x);
        }
        let correction = lu.solve(&residual).ok_or_else(|| {
            MedaError::SingularSystem("LU refinement solve failed".into())
        })?;
        x += correction;
    }
    let rel = (rhs - s * &x).norm() / rhs_norm;
    Err(MedaError::SingularSystem(format!(
        "residual {rel:.3e} above tolerance {rel_tol:.1e} after refinement"
    )))
}

/// Orthonormal basis of the orthogonal complement of `span(p)`.
///
/// `p` must be D×d with orthonormal columns and d < D; the result is
/// D×(D−d). Implemented as the trailing block of the full Q factor of the
/// zero-padded square matrix `[p | 0]`.
pub fn orthonormal_complement(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (dim, d) = (p.nrows(), p.ncols());
    if d >= dim {
        return Err(MedaError::Dimension(format!(
            "complement undefined for {dim}x{d} basis"
        )));
    }
    let mut padded = DMatrix::<f64>::zeros(dim, dim);
    padded.view_mut((0, 0), (dim, d)).copy_from(p);
    let q = padded.qr().q();
    Ok(q.columns(d, dim - d).into_owned())
}

/// Largest principal angle (radians) between the column spans of two
/// orthonormal bases of equal shape.
///
/// Combines the cosine (`σ_min(AᵀB)`) and sine (`σ_max(B − A AᵀB)`)
/// characterizations through `atan2`, which stays accurate for angles
/// near 0 where `acos` alone loses half the significant digits.
pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(MedaError::Dimension(format!(
            "bases must share shape, got {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let overlap = a.transpose() * b;
    let cos_svd = overlap.clone().svd(false, false);
    let cos = cos_svd
        .singular_values
        .iter()
        .fold(f64::INFINITY, |acc, &s| acc.min(s))
        .clamp(0.0, 1.0);
    let residual = b - a * overlap;
    let sin = residual
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0_f64, |acc, &s| acc.max(s))
        .clamp(0.0, 1.0);
    Ok(sin.atan2(cos))
}

/// Eigenvalues and eigenvectors of a symmetric matrix, sorted by descending
/// eigenvalue. Returns `(values, vectors)` with one eigenvector per column.
pub fn symmetric_eigen_desc(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = m.clone().symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .expect("eigenvalues are finite")
    });
    let values = DVector::from_fn(n, |i, _| eig.eigenvalues[order[i]]);
    let mut vectors = DMatrix::zeros(eig.eigenvectors.nrows(), n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sqrt_of_identity_is_identity() {
        let eye = DMatrix::<f64>::identity(6, 6);
        let (root, iters) = matrix_sqrt_psd(&eye, 1e-10, 100).unwrap();
        assert!(iters <= 100);
        assert_relative_eq!(root, eye, epsilon = 1e-12);
    }

    #[test]
    fn sqrt_of_zero_is_zero() {
        let zero = DMatrix::<f64>::zeros(4, 4);
        let (root, iters) = matrix_sqrt_psd(&zero, 1e-10, 100).unwrap();
        assert_eq!(iters, 0);
        assert_eq!(root, zero);
    }

    #[test]
    fn sqrt_squares_back_on_random_psd() {
        let mut rng = crate::testutil::rng(7);
        for _ in 0..20 {
            let b = crate::testutil::random_matrix(&mut rng, 8, 8);
            let a = &b * b.transpose();
            let (root, _) = matrix_sqrt_psd(&a, 1e-10, 100).unwrap();
            let err = (&root * &root - &a).norm() / a.norm();
            assert!(err < 1e-6, "relative error {err}");
        }
    }

    #[test]
    fn sqrt_handles_singular_psd() {
        // Rank-deficient: outer product of a tall thin factor.
        let mut rng = crate::testutil::rng(13);
        let b = crate::testutil::random_matrix(&mut rng, 10, 3);
        let a = &b * b.transpose();
        let (root, _) = matrix_sqrt_psd(&a, 1e-10, 100).unwrap();
        let err = (&root * &root - &a).norm() / a.norm();
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn complement_is_orthonormal_and_orthogonal() {
        let mut rng = crate::testutil::rng(3);
        let basis = crate::testutil::random_orthonormal(&mut rng, 9, 4);
        let comp = orthonormal_complement(&basis).unwrap();
        assert_eq!(comp.shape(), (9, 5));
        let gram = comp.transpose() * &comp;
        assert_relative_eq!(gram, DMatrix::identity(5, 5), epsilon = 1e-10);
        let cross = comp.transpose() * &basis;
        assert!(cross.norm() < 1e-10);
    }

    #[test]
    fn refined_solve_meets_residual_contract() {
        let mut rng = crate::testutil::rng(11);
        let s = crate::testutil::random_matrix(&mut rng, 30, 30)
            + DMatrix::<f64>::identity(30, 30) * 5.0;
        let rhs = crate::testutil::random_matrix(&mut rng, 30, 4);
        let x = solve_refined(&s, &rhs, 1e-10, 4).unwrap();
        let rel = (&rhs - &s * &x).norm() / rhs.norm();
        assert!(rel < 1e-10, "residual {rel}");
    }

    #[test]
    fn principal_angle_detects_identical_and_orthogonal_spans() {
        let mut a = DMatrix::<f64>::zeros(4, 2);
        a[(0, 0)] = 1.0;
        a[(1, 1)] = 1.0;
        let mut b = DMatrix::<f64>::zeros(4, 2);
        b[(2, 0)] = 1.0;
        b[(3, 1)] = 1.0;
        assert!(max_principal_angle(&a, &a).unwrap() < 1e-12);
        assert_relative_eq!(
            max_principal_angle(&a, &b).unwrap(),
            std::f64::consts::FRAC_PI_2,
            epsilon = 1e-12
        );
    }
}
