//! p-nearest-neighbor affinity graph and its unnormalized Laplacian.
//!
//! Affinity uses cosine similarity with the "or" rule: `W_ij` is nonzero
//! when either point ranks among the other's p nearest, which keeps `W`
//! symmetric. Negative similarities clamp to zero so the Laplacian
//! `L = D − W` stays positive semidefinite, which the regularizer
//! `tr(βᵀ K L K β)` relies on.

use nalgebra::{DMatrix, DVector};

use crate::error::{MedaError, Result};
use crate::parallel;

/// Affinity matrix, degree vector, and Laplacian of one neighbor graph.
#[derive(Debug, Clone)]
pub struct GraphLaplacian {
    pub w: DMatrix<f64>,
    pub degree: DVector<f64>,
    pub l: DMatrix<f64>,
    pub p: usize,
}

impl GraphLaplacian {
    /// Builds the p-NN affinity over sample rows and its Laplacian.
    pub fn build(points: &DMatrix<f64>, p: usize) -> Result<Self> {
        let w = build_affinity(points, p)?;
        build_laplacian(w, p)
    }
}

/// Cosine p-NN affinity over the rows of `points`.
///
/// Neighbor ranking orders candidates by descending similarity with ties
/// broken toward the lower sample index; self-affinity is excluded.
pub fn build_affinity(points: &DMatrix<f64>, p: usize) -> Result<DMatrix<f64>> {
    let n = points.nrows();
    if p == 0 || p >= n {
        return Err(MedaError::InvalidParameter(format!(
            "neighbor count {p} must satisfy 1 ≤ p < {n}"
        )));
    }

    // Unit-normalize rows once; cosine similarity is then a plain dot.
    let mut unit_rows: Vec<DVector<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let row = points.row(i).transpose();
        let norm = row.norm();
        if norm == 0.0 {
            return Err(MedaError::Degenerate(format!(
                "row {i} is all-zero; cosine similarity undefined"
            )));
        }
        if !norm.is_finite() {
            return Err(MedaError::Degenerate(format!("row {i} is non-finite")));
        }
        unit_rows.push(row / norm);
    }

    let neighbors: Vec<Vec<usize>> = parallel::map_indexed(n, |i| {
        let mut candidates: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (unit_rows[i].dot(&unit_rows[j]), j))
            .collect();
        candidates.sort_unstable_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .expect("similarities are finite")
                .then(a.1.cmp(&b.1))
        });
        candidates.truncate(p);
        candidates.into_iter().map(|(_, j)| j).collect()
    });

    let mut w = DMatrix::zeros(n, n);
    for (i, nbrs) in neighbors.iter().enumerate() {
        for &j in nbrs {
            let sim = unit_rows[i].dot(&unit_rows[j]).max(0.0);
            w[(i, j)] = sim;
            w[(j, i)] = sim;
        }
    }
    Ok(w)
}

/// Laplacian `L = D − W` of a symmetric, nonnegative, zero-diagonal
/// affinity matrix. `p` is recorded for provenance.
pub fn build_laplacian(w: DMatrix<f64>, p: usize) -> Result<GraphLaplacian> {
    let n = w.nrows();
    if n != w.ncols() {
        return Err(MedaError::Dimension(format!(
            "affinity matrix must be square, got {}x{}",
            w.nrows(),
            w.ncols()
        )));
    }
    for i in 0..n {
        if w[(i, i)] != 0.0 {
            return Err(MedaError::Degenerate(format!(
                "affinity diagonal entry ({i},{i}) must be zero"
            )));
        }
        for j in 0..n {
            let v = w[(i, j)];
            if v.is_nan() || v < 0.0 || !v.is_finite() {
                return Err(MedaError::Degenerate(format!(
                    "affinity entry ({i},{j}) = {v} must be finite and nonnegative"
                )));
            }
            if (v - w[(j, i)]).abs() > 1e-12 {
                return Err(MedaError::Degenerate(format!(
                    "affinity matrix is asymmetric at ({i},{j})"
                )));
            }
        }
    }
    let degree = DVector::from_fn(n, |i, _| w.row(i).sum());
    let mut l = -w.clone();
    for i in 0..n {
        l[(i, i)] = degree[i];
    }
    Ok(GraphLaplacian { w, degree, l, p })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil;
    use proptest::prelude::*;

    #[test]
    fn mutual_pair_keeps_its_cosine() {
        // cos between (1,0) and (0.8,0.6) is exactly 0.8.
        let points = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.8, 0.6]);
        let w = build_affinity(&points, 1).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, 0.8, 0.8, 0.0]);
        assert!((w - expected).norm() < 1e-12);
    }

    #[test]
    fn orthogonal_points_give_an_empty_graph() {
        let points = DMatrix::<f64>::identity(3, 3);
        let w = build_affinity(&points, 1).unwrap();
        assert_eq!(w.norm(), 0.0);
    }

    #[test]
    fn zero_row_is_degenerate() {
        let points = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 1.0]);
        assert!(matches!(
            build_affinity(&points, 1),
            Err(MedaError::Degenerate(_))
        ));
    }

    /// Brute-force neighbor oracle: rank-counting rather than sorting.
    /// Shares the unit-row similarity formula so values compare exactly;
    /// the neighbor-selection logic is the independent part.
    fn oracle_affinity(points: &DMatrix<f64>, p: usize) -> DMatrix<f64> {
        let n = points.nrows();
        let units: Vec<_> = (0..n)
            .map(|i| {
                let row = points.row(i).transpose();
                let norm = row.norm();
                row / norm
            })
            .collect();
        let sim = |i: usize, j: usize| -> f64 { units[i].dot(&units[j]) };
        let in_neighbors = |i: usize, j: usize| -> bool {
            let s_ij = sim(i, j);
            let better = (0..n)
                .filter(|&k| k != i && k != j)
                .filter(|&k| {
                    let s_ik = sim(i, k);
                    s_ik > s_ij || (s_ik == s_ij && k < j)
                })
                .count();
            better < p
        };
        DMatrix::from_fn(n, n, |i, j| {
            if i != j && (in_neighbors(i, j) || in_neighbors(j, i)) {
                sim(i, j).max(0.0)
            } else {
                0.0
            }
        })
    }

    #[test]
    fn affinity_matches_brute_force_oracle() {
        let mut rng = testutil::rng(89);
        let points = testutil::random_matrix(&mut rng, 30, 5);
        let w = build_affinity(&points, 4).unwrap();
        let oracle = oracle_affinity(&points, 4);
        assert_eq!(w, oracle);
    }

    #[test]
    fn laplacian_of_a_single_edge() {
        let w = DMatrix::from_row_slice(2, 2, &[0.0, 0.8, 0.8, 0.0]);
        let lap = build_laplacian(w, 1).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.8, -0.8, -0.8, 0.8]);
        assert!((&lap.l - expected).norm() < 1e-15);
        let ones = DVector::from_element(2, 1.0);
        assert!((&lap.l * ones).norm() < 1e-15);
    }

    #[test]
    fn laplacian_of_empty_graph_is_zero() {
        let lap = build_laplacian(DMatrix::zeros(4, 4), 1).unwrap();
        assert_eq!(lap.l.norm(), 0.0);
    }

    #[test]
    fn quadratic_form_matches_double_sum_oracle() {
        let mut rng = testutil::rng(97);
        let points = testutil::random_matrix(&mut rng, 20, 4);
        let lap = GraphLaplacian::build(&points, 3).unwrap();
        for _ in 0..100 {
            let f = testutil::random_matrix(&mut rng, 20, 1).column(0).into_owned();
            let quad = (f.transpose() * &lap.l * &f)[(0, 0)];
            assert!(quad >= -1e-10, "fᵀLf = {quad}");
            let mut double_sum = 0.0;
            for i in 0..20 {
                for j in 0..20 {
                    double_sum += lap.w[(i, j)] * (f[i] - f[j]).powi(2);
                }
            }
            assert!((quad - 0.5 * double_sum).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_eigenvalue_multiplicity_counts_components() {
        // One chain of 3 nodes: a single component.
        let mut chain = DMatrix::zeros(3, 3);
        chain[(0, 1)] = 1.0;
        chain[(1, 0)] = 1.0;
        chain[(1, 2)] = 1.0;
        chain[(2, 1)] = 1.0;
        let lap = build_laplacian(chain, 1).unwrap();
        let eig = lap.l.symmetric_eigen();
        let zeros = eig.eigenvalues.iter().filter(|v| v.abs() < 1e-8).count();
        assert_eq!(zeros, 1);

        // Two disconnected edges: two components.
        let mut pairs = DMatrix::zeros(4, 4);
        pairs[(0, 1)] = 0.5;
        pairs[(1, 0)] = 0.5;
        pairs[(2, 3)] = 0.9;
        pairs[(3, 2)] = 0.9;
        let lap = build_laplacian(pairs, 1).unwrap();
        let eig = lap.l.symmetric_eigen();
        let zeros = eig.eigenvalues.iter().filter(|v| v.abs() < 1e-8).count();
        assert_eq!(zeros, 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        /// Constructed graphs always satisfy L·1 = 0 and PSD-ness.
        #[test]
        fn laplacian_row_sums_vanish(seed in 0u64..500, n in 4usize..24, p in 1usize..3) {
            let mut rng = testutil::rng(seed);
            let points = testutil::random_matrix(&mut rng, n, 3);
            let lap = GraphLaplacian::build(&points, p).unwrap();
            let ones = DVector::from_element(n, 1.0);
            prop_assert!((&lap.l * ones).norm() < 1e-10);
            let min_eig = lap.l.clone().symmetric_eigen().eigenvalues.min();
            prop_assert!(min_eig >= -1e-8, "min eigenvalue {}", min_eig);
        }
    }
}
