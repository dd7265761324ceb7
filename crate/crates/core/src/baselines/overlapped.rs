use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use super::equal_bounds;
use crate::kernels::{first_op_row, second_op_row, Execution, RowCounts, SharedRows};
use crate::{DenseMatrix, Error, FusedProblem, Result, Scalar, SparseMatrixCsr, WorkerPool};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OverlappedTile {
    pub j_lo: usize,
    pub j_hi: usize,
    /// Sorted first-operation iterations the owned rows depend on.
    pub needed_i: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OverlappedSchedule {
    pub n: usize,
    pub tiles: Vec<OverlappedTile>,
}

impl OverlappedSchedule {
    /// First-operation rows executed by all tiles together.
    pub fn first_op_rows(&self) -> usize {
        self.tiles.iter().map(|t| t.needed_i.len()).sum()
    }

    /// First-operation rows computed more than once: total work minus the
    /// number of distinct rows needed anywhere.
    pub fn replicated(&self) -> usize {
        let mut needed = vec![false; self.n];
        for &i in self.tiles.iter().flat_map(|t| &t.needed_i) {
            needed[i] = true;
        }
        self.first_op_rows() - needed.iter().filter(|&&b| b).count()
    }
}

/// Splits the second operation into `num_partitions` equal contiguous chunks
/// and gives each the union of its rows' dependencies.
pub fn build_overlapped<T>(a: &SparseMatrixCsr<T>, num_partitions: usize) -> Result<OverlappedSchedule> {
    let n = a.ensure_square()?;
    if num_partitions == 0 || (n > 0 && num_partitions > n) {
        return Err(Error::InvalidConfig(format!(
            "partition count {num_partitions} must lie in [1, {n}]"
        )));
    }
    let bounds = equal_bounds(n, num_partitions);
    let mut mark = vec![usize::MAX; n];
    let tiles = bounds
        .windows(2)
        .enumerate()
        .map(|(v, w)| {
            let mut needed_i = Vec::new();
            for j in w[0]..w[1] {
                for &c in a.row_cols(j) {
                    let c = c as usize;
                    if mark[c] != v {
                        mark[c] = v;
                        needed_i.push(c);
                    }
                }
            }
            needed_i.sort_unstable();
            OverlappedTile {
                j_lo: w[0],
                j_hi: w[1],
                needed_i,
            }
        })
        .collect();
    Ok(OverlappedSchedule { n, tiles })
}

/// One parallel phase with no barriers: each tile computes its needed `D1`
/// rows into private scratch, then its owned rows of `D`.
pub fn run_overlapped<T: Scalar>(
    problem: &FusedProblem<'_, T>,
    schedule: &OverlappedSchedule,
    pool: &WorkerPool,
) -> Result<Execution<T>> {
    let n = problem.n();
    check(problem.a, schedule, n)?;
    let c_col = problem.c_col();
    let mut d = DenseMatrix::zeros(n, c_col);
    let first_rows = AtomicUsize::new(0);
    {
        let d_rows = SharedRows::new(&mut d);
        pool.install(|| {
            schedule.tiles.par_iter().with_max_len(1).for_each(|tile| {
                let mut scratch = DenseMatrix::zeros(tile.needed_i.len(), c_col);
                for (k, &i) in tile.needed_i.iter().enumerate() {
                    first_op_row(&problem.b, problem.c, i, scratch.row_mut(k));
                }
                let local = |c: usize| {
                    let k = tile.needed_i.binary_search(&c).expect("dependency listed in needed_i");
                    scratch.row(k)
                };
                for j in tile.j_lo..tile.j_hi {
                    // SAFETY: owned ranges are disjoint (checked above).
                    let out = unsafe { d_rows.row_mut(j) };
                    second_op_row(problem.a, j, local, out);
                }
                first_rows.fetch_add(tile.needed_i.len(), Ordering::Relaxed);
            });
        });
    }
    Ok(Execution {
        d,
        counts: RowCounts {
            first_op_rows: first_rows.into_inner(),
            second_op_rows: n,
        },
    })
}

fn check<T>(a: &SparseMatrixCsr<T>, schedule: &OverlappedSchedule, n: usize) -> Result<()> {
    let bad = |msg: String| Err(Error::InvalidSchedule(msg));
    if schedule.n != n {
        return bad(format!("schedule covers {} rows, problem has {n}", schedule.n));
    }
    let mut next = 0;
    for (v, tile) in schedule.tiles.iter().enumerate() {
        if tile.j_lo != next || tile.j_hi < tile.j_lo {
            return bad(format!("tile {v} does not continue the row partition at {next}"));
        }
        next = tile.j_hi;
        if tile.needed_i.windows(2).any(|w| w[0] >= w[1]) || tile.needed_i.last().is_some_and(|&i| i >= n) {
            return bad(format!("tile {v} has an unsorted or out-of-range dependency list"));
        }
        for j in tile.j_lo..tile.j_hi {
            if a.row_cols(j).iter().any(|&c| tile.needed_i.binary_search(&(c as usize)).is_err()) {
                return bad(format!("tile {v} misses a dependency of row {j}"));
            }
        }
    }
    if next != n {
        return bad(format!("row partition ends at {next}, expected {n}"));
    }
    Ok(())
}
