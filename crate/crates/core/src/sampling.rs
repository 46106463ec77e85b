//! Seeded sample grids and small dense linear algebra helpers.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DEFAULT_SEED: u64 = 42;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// 256 evenly spaced points on [−8, 8] followed by 32 seeded uniform points.
pub fn symmetry_grid() -> Vec<f64> {
    let mut g = linspace(-8.0, 8.0, 256);
    let mut r = rng(DEFAULT_SEED);
    g.extend((0..32).map(|_| r.gen_range(-8.0..=8.0)));
    g
}

/// `count` seeded uniform points in `[lo, hi]^dim`.
pub fn random_points(seed: u64, count: usize, dim: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    (0..count).map(|_| (0..dim).map(|_| r.gen_range(lo..=hi)).collect()).collect()
}

/// Singular values in descending order with the matching right singular vectors.
pub struct SortedSvd {
    pub values: Vec<f64>,
    /// `vectors[i]` belongs to `values[i]`.
    pub vectors: Vec<Vec<f64>>,
}

pub fn sorted_svd(m: &DMatrix<f64>) -> SortedSvd {
    let cols = m.ncols();
    // Tall matrices only; pad wide ones with zero rows so V is square.
    let work = if m.nrows() < cols {
        let mut p = DMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = work.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    SortedSvd {
        values: idx.iter().map(|&i| svd.singular_values[i]).collect(),
        vectors: idx.iter().map(|&i| vt.row(i).iter().copied().collect()).collect(),
    }
}
