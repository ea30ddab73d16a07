//! Seeded random fixtures for unit tests.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Random D×d matrix with orthonormal columns.
pub fn random_orthonormal(rng: &mut ChaCha8Rng, dim: usize, d: usize) -> DMatrix<f64> {
    assert!(d <= dim);
    let m = random_matrix(rng, dim, d);
    m.qr().q().columns(0, d).into_owned()
}
