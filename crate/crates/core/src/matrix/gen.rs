//! Seeded synthetic matrices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};

use crate::{Scalar, SparseMatrixCsr};

/// `n x n` matrix whose entries are present independently with probability
/// `density`. Values are uniform in `[0.1, 1.0]`; rows that come out empty
/// get a diagonal entry.
pub fn gen_random_sparse<T: Scalar>(n: usize, density: f64, seed: u64) -> SparseMatrixCsr<T> {
    gen_random_sparse_rect(n, n, density, seed)
}

/// Rectangular variant of [`gen_random_sparse`]. Empty rows get an entry at
/// column `r % n_cols`.
pub fn gen_random_sparse_rect<T: Scalar>(
    n_rows: usize,
    n_cols: usize,
    density: f64,
    seed: u64,
) -> SparseMatrixCsr<T> {
    assert!(n_rows >= 1 && n_cols >= 1, "matrix dimensions must be positive");
    assert!(density > 0.0 && density <= 1.0, "density must lie in (0, 1]");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Gaps between present entries are geometric, which samples the same
    // Bernoulli field without touching every cell.
    let gaps = (density < 1.0).then(|| Geometric::new(density).expect("density in (0, 1)"));

    let mut row_ptr = Vec::with_capacity(n_rows + 1);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);
    let total = n_rows as u64 * n_cols as u64;
    let mut cell = match &gaps {
        Some(g) => g.sample(&mut rng),
        None => 0,
    };
    let mut next_row_start = 0u64;
    for r in 0..n_rows {
        next_row_start += n_cols as u64;
        let row_begin = col_idx.len();
        while cell < next_row_start && cell < total {
            col_idx.push((cell - r as u64 * n_cols as u64) as u32);
            values.push(T::from_f64(rng.random_range(0.1..=1.0)));
            cell += 1 + gaps.as_ref().map_or(0, |g| g.sample(&mut rng));
        }
        if col_idx.len() == row_begin {
            col_idx.push((r % n_cols) as u32);
            values.push(T::from_f64(rng.random_range(0.1..=1.0)));
        }
        row_ptr.push(col_idx.len());
    }
    SparseMatrixCsr::try_new(n_rows, n_cols, row_ptr, col_idx, values).expect("generator emits valid CSR")
}

/// `n x n` band with ones at `|i - j| <= half_bandwidth`.
pub fn gen_banded<T: Scalar>(n: usize, half_bandwidth: usize) -> SparseMatrixCsr<T> {
    assert!(half_bandwidth < n.max(1), "half bandwidth must be below n");
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(n * (2 * half_bandwidth + 1));
    row_ptr.push(0);
    for r in 0..n {
        let lo = r.saturating_sub(half_bandwidth);
        let hi = (r + half_bandwidth + 1).min(n);
        col_idx.extend(lo as u32..hi as u32);
        row_ptr.push(col_idx.len());
    }
    let values = vec![T::ONE; col_idx.len()];
    SparseMatrixCsr::try_new(n, n, row_ptr, col_idx, values).expect("band is valid CSR")
}

/// Arrowhead: the first `width` rows and columns are dense, plus the diagonal.
pub fn gen_arrow<T: Scalar>(n: usize, width: usize) -> SparseMatrixCsr<T> {
    let width = width.min(n);
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::new();
    row_ptr.push(0);
    for r in 0..n {
        if r < width {
            col_idx.extend(0..n as u32);
        } else {
            col_idx.extend(0..width as u32);
            col_idx.push(r as u32);
        }
        row_ptr.push(col_idx.len());
    }
    let values = vec![T::ONE; col_idx.len()];
    SparseMatrixCsr::try_new(n, n, row_ptr, col_idx, values).expect("arrow is valid CSR")
}
