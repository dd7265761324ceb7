use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use super::{first_op_row, second_op_row, Execution, FusedProblem, Op, RowCounts, SharedRows, Workspace};
use crate::schedule::validate::structural_violations;
use crate::{DenseMatrix, Error, FusedSchedule, Result, Scalar, SparseMatrixCsr, WorkerPool};

/// Fused GeMM-SpMM: `B` must be dense.
pub fn fused_gemm_spmm<T: Scalar>(
    problem: &FusedProblem<'_, T>,
    schedule: &FusedSchedule,
    pool: &WorkerPool,
) -> Result<DenseMatrix<T>> {
    problem.expect_op(Op::GemmSpmm)?;
    run_fused(problem, schedule, pool).map(|e| e.d)
}

/// Fused SpMM-SpMM: `B` must be sparse (commonly `B = A`).
pub fn fused_spmm_spmm<T: Scalar>(
    problem: &FusedProblem<'_, T>,
    schedule: &FusedSchedule,
    pool: &WorkerPool,
) -> Result<DenseMatrix<T>> {
    problem.expect_op(Op::SpmmSpmm)?;
    run_fused(problem, schedule, pool).map(|e| e.d)
}

/// Runs the schedule wavefront by wavefront. Each tile computes its `D1`
/// rows and then the fused `D` rows that read them; the end of each parallel
/// loop is the barrier between wavefronts.
pub fn run_fused<T: Scalar>(
    problem: &FusedProblem<'_, T>,
    schedule: &FusedSchedule,
    pool: &WorkerPool,
) -> Result<Execution<T>> {
    execute::<T, false>(problem, schedule, pool).map(|(e, _)| e)
}

/// Like [`run_fused`], additionally recording which tile wrote each `D1`
/// row and counting first-wavefront reads of rows written by another tile.
pub fn run_fused_traced<T: Scalar>(
    problem: &FusedProblem<'_, T>,
    schedule: &FusedSchedule,
    pool: &WorkerPool,
) -> Result<(Execution<T>, usize)> {
    execute::<T, true>(problem, schedule, pool)
}

/// Like [`run_fused`], writing into a caller-owned workspace so repeated
/// executions do not allocate. The result is in [`Workspace::d`].
pub fn run_fused_in<T: Scalar>(
    problem: &FusedProblem<'_, T>,
    schedule: &FusedSchedule,
    pool: &WorkerPool,
    workspace: &mut Workspace<T>,
) -> Result<RowCounts> {
    check(problem.a, schedule)?;
    workspace.check(problem)?;
    // SAFETY: checked above.
    let (counts, _) = unsafe { execute_unchecked::<T, false>(problem, schedule, pool, workspace) };
    Ok(counts)
}

/// A schedule whose structural soundness for one sparsity pattern has been
/// established. The check reads the first and last column of every row of
/// `A`, which is cheap but not free on large matrices, so callers that
/// execute a schedule repeatedly check it once here.
pub struct CheckedSchedule<'a, T> {
    schedule: FusedSchedule,
    a: &'a SparseMatrixCsr<T>,
}

impl<'a, T: Scalar> CheckedSchedule<'a, T> {
    pub fn new(schedule: FusedSchedule, a: &'a SparseMatrixCsr<T>) -> Result<Self> {
        check(a, &schedule)?;
        Ok(CheckedSchedule { schedule, a })
    }

    pub fn schedule(&self) -> &FusedSchedule {
        &self.schedule
    }

    pub fn into_inner(self) -> FusedSchedule {
        self.schedule
    }

    /// Executes into `workspace`. `problem.a` must be the matrix the
    /// schedule was checked against.
    pub fn run_in(
        &self,
        problem: &FusedProblem<'_, T>,
        pool: &WorkerPool,
        workspace: &mut Workspace<T>,
    ) -> Result<RowCounts> {
        if !std::ptr::eq(problem.a, self.a) {
            return Err(Error::InvalidSchedule(
                "schedule was checked against a different matrix".into(),
            ));
        }
        workspace.check(problem)?;
        // SAFETY: the schedule passed `check` for this very matrix, which is
        // borrowed immutably for the lifetime of `self`.
        let (counts, _) = unsafe { execute_unchecked::<T, false>(problem, &self.schedule, pool, workspace) };
        Ok(counts)
    }
}

fn execute<T: Scalar, const TRACE: bool>(
    problem: &FusedProblem<'_, T>,
    schedule: &FusedSchedule,
    pool: &WorkerPool,
) -> Result<(Execution<T>, usize)> {
    check(problem.a, schedule)?;
    let mut ws = Workspace::for_problem(problem);
    // SAFETY: checked above.
    let (counts, stale) = unsafe { execute_unchecked::<T, TRACE>(problem, schedule, pool, &mut ws) };
    Ok((
        Execution {
            d: ws.into_output(),
            counts,
        },
        stale,
    ))
}

fn check<T>(a: &SparseMatrixCsr<T>, schedule: &FusedSchedule) -> Result<()> {
    let n = a.n_rows();
    if schedule.n != n {
        return Err(Error::InvalidSchedule(format!(
            "schedule covers {} iterations, problem has {n}",
            schedule.n
        )));
    }
    if let Some(v) = structural_violations(schedule, a).first() {
        return Err(Error::InvalidSchedule(format!("{v:?}")));
    }
    Ok(())
}

/// # Safety
/// `schedule` must pass `check` for `problem`: first-wavefront ranges are
/// disjoint, later wavefronts have no first-operation work, every D row
/// belongs to exactly one tile, and fused rows only read D1 rows of their
/// own tile. A single-worker pool cannot race, so there only the workspace
/// requirement remains: it must be shaped for `problem`.
unsafe fn execute_unchecked<T: Scalar, const TRACE: bool>(
    problem: &FusedProblem<'_, T>,
    schedule: &FusedSchedule,
    pool: &WorkerPool,
    workspace: &mut Workspace<T>,
) -> (RowCounts, usize) {
    let n = problem.n();
    let (d1, d) = workspace.parts_mut();
    let first_rows = AtomicUsize::new(0);
    let second_rows = AtomicUsize::new(0);
    let stale = AtomicUsize::new(0);
    let writer: Vec<AtomicUsize> = if TRACE {
        (0..n).map(|_| AtomicUsize::new(0)).collect()
    } else {
        Vec::new()
    };

    {
        let d1_rows = SharedRows::new(d1);
        let d_rows = SharedRows::new(d);
        pool.install(|| {
            for (w, tiles) in schedule.wavefronts.iter().enumerate() {
                if tiles.is_empty() {
                    continue;
                }
                tiles.par_iter().with_max_len(1).enumerate().for_each(|(v, tile)| {
                    for i in tile.i_range() {
                        first_op_row(&problem.b, problem.c, i, d1_rows.row_mut(i));
                        if TRACE {
                            writer[i].store(v + 1, Ordering::Relaxed);
                        }
                    }
                    for &j in &tile.j_list {
                        if TRACE && w == 0 {
                            let foreign = problem
                                .a
                                .row_cols(j)
                                .iter()
                                .filter(|&&c| writer[c as usize].load(Ordering::Relaxed) != v + 1)
                                .count();
                            stale.fetch_add(foreign, Ordering::Relaxed);
                        }
                        second_op_row(problem.a, j, |c| d1_rows.row(c), d_rows.row_mut(j));
                    }
                    first_rows.fetch_add(tile.width(), Ordering::Relaxed);
                    second_rows.fetch_add(tile.j_list.len(), Ordering::Relaxed);
                });
            }
        });
    }

    let counts = RowCounts {
        first_op_rows: first_rows.into_inner(),
        second_op_rows: second_rows.into_inner(),
    };
    (counts, stale.into_inner())
}
