use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use super::equal_bounds;
use crate::kernels::{first_op_row, Execution, RowCounts, SharedRows};
use crate::{DenseMatrix, Error, FusedProblem, Result, Scalar, SparseMatrixCsr, WorkerPool};

/// A contiguous run of nonzeros `lo..hi` (indices into the CSR arrays of `A`)
/// of row `j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RowSlice {
    pub j: usize,
    pub lo: usize,
    pub hi: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AtomicTile {
    pub i_lo: usize,
    pub i_hi: usize,
    /// Slices of rows inside `i_lo..i_hi`, run in the first wavefront.
    pub local: Vec<RowSlice>,
    /// Slices of rows owned by other tiles, run in the second wavefront.
    pub remote: Vec<RowSlice>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AtomicSchedule {
    pub n: usize,
    pub tiles: Vec<AtomicTile>,
    /// Rows of `D` receiving contributions from two or more tiles.
    pub shared_rows: usize,
}

impl AtomicSchedule {
    /// Nonzeros covered by all slices; equals `nnz(A)` for a valid schedule.
    pub fn slice_nnz(&self) -> usize {
        self.slices().map(|s| s.hi - s.lo).sum()
    }

    pub fn slice_count(&self) -> usize {
        self.slices().count()
    }

    fn slices(&self) -> impl Iterator<Item = &RowSlice> {
        self.tiles.iter().flat_map(|t| t.local.iter().chain(&t.remote))
    }
}

/// Partitions the first operation into `num_tiles` equal ranges. Every
/// nonzero `A[j][c]` goes to the tile owning `c`, so a row of `A` is cut into
/// one slice per tile its columns fall in.
pub fn build_atomic<T>(a: &SparseMatrixCsr<T>, num_tiles: usize) -> Result<AtomicSchedule> {
    let n = a.ensure_square()?;
    if num_tiles == 0 || (n > 0 && num_tiles > n) {
        return Err(Error::InvalidConfig(format!(
            "tile count {num_tiles} must lie in [1, {n}]"
        )));
    }
    let bounds = equal_bounds(n, num_tiles);
    let mut owner = vec![0usize; n];
    for (v, w) in bounds.windows(2).enumerate() {
        owner[w[0]..w[1]].fill(v);
    }
    let mut tiles: Vec<AtomicTile> = bounds
        .windows(2)
        .map(|w| AtomicTile {
            i_lo: w[0],
            i_hi: w[1],
            local: Vec::new(),
            remote: Vec::new(),
        })
        .collect();
    let mut shared_rows = 0;
    let row_ptr = a.row_ptr();
    for j in 0..n {
        let cols = a.row_cols(j);
        let base = row_ptr[j];
        let mut start = 0;
        let mut pieces = 0;
        while start < cols.len() {
            let v = owner[cols[start] as usize];
            let len = cols[start..].partition_point(|&c| owner[c as usize] == v);
            let slice = RowSlice {
                j,
                lo: base + start,
                hi: base + start + len,
            };
            if owner[j] == v {
                tiles[v].local.push(slice);
            } else {
                tiles[v].remote.push(slice);
            }
            pieces += 1;
            start += len;
        }
        if pieces > 1 {
            shared_rows += 1;
        }
    }
    Ok(AtomicSchedule { n, tiles, shared_rows })
}

/// Two barrier-separated wavefronts over the same tiles. The first computes
/// the tile's `D1` rows and the slices of its own rows, the second the slices
/// of rows owned elsewhere. All `D` updates are atomic additions.
pub fn run_atomic<T: Scalar>(
    problem: &FusedProblem<'_, T>,
    schedule: &AtomicSchedule,
    pool: &WorkerPool,
) -> Result<Execution<T>> {
    let n = problem.n();
    check(problem.a, schedule, n)?;
    let c_col = problem.c_col();
    let mut d1 = DenseMatrix::zeros(n, c_col);
    let d: Vec<T::Atomic> = (0..n * c_col).map(|_| T::atomic_new(T::ZERO)).collect();
    let first_rows = AtomicUsize::new(0);
    let a = problem.a;

    pool.install(|| {
        {
            let d1_rows = SharedRows::new(&mut d1);
            schedule.tiles.par_iter().with_max_len(1).for_each(|tile| {
                for i in tile.i_lo..tile.i_hi {
                    // SAFETY: tile ranges are disjoint (checked above).
                    first_op_row(&problem.b, problem.c, i, unsafe { d1_rows.row_mut(i) });
                }
                first_rows.fetch_add(tile.i_hi - tile.i_lo, Ordering::Relaxed);
                let mut acc = vec![T::ZERO; c_col];
                for s in &tile.local {
                    // SAFETY: a slice only holds columns of this tile's range,
                    // whose D1 rows were written by this tile just above.
                    accumulate(a, s, |c| unsafe { d1_rows.row(c) }, &mut acc, &d);
                }
            });
        }
        let d1 = &d1;
        schedule.tiles.par_iter().with_max_len(1).for_each(|tile| {
            let mut acc = vec![T::ZERO; c_col];
            for s in &tile.remote {
                accumulate(a, s, |c| d1.row(c), &mut acc, &d);
            }
        });
    });

    let d = DenseMatrix::from_vec(n, c_col, d.iter().map(T::atomic_load).collect())?;
    Ok(Execution {
        d,
        counts: RowCounts {
            first_op_rows: first_rows.into_inner(),
            second_op_rows: n,
        },
    })
}

/// Adds the contribution of slice `s` to row `s.j` of `d`, summing locally
/// first so each output element sees a single atomic addition.
fn accumulate<'x, T: Scalar>(
    a: &SparseMatrixCsr<T>,
    s: &RowSlice,
    d1_row: impl Fn(usize) -> &'x [T],
    acc: &mut [T],
    d: &[T::Atomic],
) {
    let c_col = acc.len();
    acc.fill(T::ZERO);
    for k in s.lo..s.hi {
        let av = a.values()[k];
        for (y, &x) in acc.iter_mut().zip(d1_row(a.col_idx()[k] as usize)) {
            *y += av * x;
        }
    }
    for (slot, &v) in d[s.j * c_col..(s.j + 1) * c_col].iter().zip(acc.iter()) {
        T::atomic_add(slot, v);
    }
}

fn check<T>(a: &SparseMatrixCsr<T>, schedule: &AtomicSchedule, n: usize) -> Result<()> {
    let bad = |msg: String| Err(Error::InvalidSchedule(msg));
    if schedule.n != n {
        return bad(format!("schedule covers {} rows, problem has {n}", schedule.n));
    }
    let mut next = 0;
    let mut covered = 0;
    for (v, tile) in schedule.tiles.iter().enumerate() {
        if tile.i_lo != next || tile.i_hi < tile.i_lo {
            return bad(format!("tile {v} does not continue the row partition at {next}"));
        }
        next = tile.i_hi;
        let inside = |r: usize| (tile.i_lo..tile.i_hi).contains(&r);
        for (wave, slices) in [(0, &tile.local), (1, &tile.remote)] {
            for s in slices {
                let ok = s.j < n
                    && a.row_ptr()[s.j] <= s.lo
                    && s.lo <= s.hi
                    && s.hi <= a.row_ptr()[s.j + 1]
                    && a.col_idx()[s.lo..s.hi].iter().all(|&c| inside(c as usize))
                    && (wave == 1 || inside(s.j));
                if !ok {
                    return bad(format!("tile {v} holds an invalid slice {s:?}"));
                }
                covered += s.hi - s.lo;
            }
        }
    }
    if next != n {
        return bad(format!("row partition ends at {next}, expected {n}"));
    }
    if covered != a.nnz() {
        return bad(format!("slices cover {covered} nonzeros, A has {}", a.nnz()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{gen_banded, gen_random_sparse};
    use crate::verify::{compare, dense_oracle};

    #[test]
    fn identity_has_no_shared_rows() {
        let a = SparseMatrixCsr::<f64>::identity(12);
        let s = build_atomic(&a, 4).unwrap();
        assert_eq!(s.shared_rows, 0);
        assert!(s.tiles.iter().all(|t| t.remote.is_empty()));
        let b = DenseMatrix::identity(12);
        let c = DenseMatrix::random(12, 3, 5);
        let problem = FusedProblem::gemm_spmm(&a, &b, &c).unwrap();
        let exec = run_atomic(&problem, &s, &WorkerPool::new(4).unwrap()).unwrap();
        assert_eq!(exec.d, c);
    }

    #[test]
    fn slices_partition_the_nonzeros() {
        let a = gen_random_sparse::<f64>(90, 0.1, 9);
        for k in [1, 2, 7, 90] {
            let s = build_atomic(&a, k).unwrap();
            assert_eq!(s.slice_nnz(), a.nnz());
            let mut seen = vec![false; a.nnz()];
            for t in &s.tiles {
                for sl in t.local.iter().chain(&t.remote) {
                    for slot in &mut seen[sl.lo..sl.hi] {
                        assert!(!*slot);
                        *slot = true;
                    }
                }
            }
            assert!(seen.iter().all(|&b| b));
        }
    }

    #[test]
    fn tridiagonal_boundary_rows_are_shared() {
        // Four tiles of four rows: rows 3, 4, 7, 8, 11, 12 straddle a boundary.
        let a = gen_banded::<f64>(16, 1);
        let s = build_atomic(&a, 4).unwrap();
        assert_eq!(s.shared_rows, 6);
        assert_eq!(s.tiles[1].remote.len(), 2);
        assert_eq!(s.slice_count(), 16 + 6);
    }

    #[test]
    fn random_matches_oracle() {
        let a = gen_random_sparse::<f64>(100, 0.05, 3);
        let b = DenseMatrix::random(100, 4, 1);
        let c = DenseMatrix::random(4, 6, 2);
        let problem = FusedProblem::gemm_spmm(&a, &b, &c).unwrap();
        let oracle = dense_oracle(&problem).unwrap();
        for k in [1, 3, 8] {
            let s = build_atomic(&a, k).unwrap();
            let exec = run_atomic(&problem, &s, &WorkerPool::new(4).unwrap()).unwrap();
            assert!(compare(&exec.d, &oracle, 1e-10).unwrap().pass);
            assert_eq!(exec.counts.first_op_rows, 100);
        }

        let c = DenseMatrix::random(100, 3, 4);
        let problem = FusedProblem::spmm_spmm(&a, &a, &c).unwrap();
        let s = build_atomic(&a, 5).unwrap();
        let exec = run_atomic(&problem, &s, &WorkerPool::new(2).unwrap()).unwrap();
        assert!(compare(&exec.d, &dense_oracle(&problem).unwrap(), 1e-10).unwrap().pass);
    }

    #[test]
    fn tampered_schedule_is_rejected() {
        let a = gen_banded::<f64>(8, 1);
        let b = DenseMatrix::random(8, 2, 1);
        let c = DenseMatrix::random(2, 2, 2);
        let problem = FusedProblem::gemm_spmm(&a, &b, &c).unwrap();
        let mut s = build_atomic(&a, 2).unwrap();
        let moved = s.tiles[1].remote.pop().unwrap();
        s.tiles[0].local.push(moved);
        assert!(run_atomic(&problem, &s, &WorkerPool::new(1).unwrap()).is_err());
        assert!(build_atomic(&a, 0).is_err());
    }
}
