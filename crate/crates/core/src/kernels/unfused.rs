use rayon::prelude::*;

use super::{first_op_row, second_op_row, Execution, FusedProblem, Op, RowCounts, Workspace};
use crate::{DenseMatrix, Result, Scalar, WorkerPool};

pub fn unfused_gemm_spmm<T: Scalar>(problem: &FusedProblem<'_, T>, pool: &WorkerPool) -> Result<DenseMatrix<T>> {
    problem.expect_op(Op::GemmSpmm)?;
    Ok(run_unfused(problem, pool).d)
}

pub fn unfused_spmm_spmm<T: Scalar>(problem: &FusedProblem<'_, T>, pool: &WorkerPool) -> Result<DenseMatrix<T>> {
    problem.expect_op(Op::SpmmSpmm)?;
    Ok(run_unfused(problem, pool).d)
}

/// All of `D1`, then all of `D`, each with rows statically chunked over the
/// workers.
pub fn run_unfused<T: Scalar>(problem: &FusedProblem<'_, T>, pool: &WorkerPool) -> Execution<T> {
    let mut ws = Workspace::for_problem(problem);
    let counts = execute(problem, pool, &mut ws);
    Execution {
        d: ws.into_output(),
        counts,
    }
}

/// Like [`run_unfused`], writing into a caller-owned workspace.
pub fn run_unfused_in<T: Scalar>(
    problem: &FusedProblem<'_, T>,
    pool: &WorkerPool,
    workspace: &mut Workspace<T>,
) -> Result<RowCounts> {
    workspace.check(problem)?;
    Ok(execute(problem, pool, workspace))
}

fn execute<T: Scalar>(problem: &FusedProblem<'_, T>, pool: &WorkerPool, workspace: &mut Workspace<T>) -> RowCounts {
    let n = problem.n();
    let c_col = problem.c_col();
    if n == 0 || c_col == 0 {
        return RowCounts::default();
    }
    let (d1, d) = workspace.parts_mut();
    let chunk = n.div_ceil(pool.workers());
    pool.install(|| {
        d1.data_mut()
            .par_chunks_mut(chunk * c_col)
            .enumerate()
            .for_each(|(k, block)| {
                for (r, out) in block.chunks_mut(c_col).enumerate() {
                    first_op_row(&problem.b, problem.c, k * chunk + r, out);
                }
            });
        let d1 = &*d1;
        d.data_mut()
            .par_chunks_mut(chunk * c_col)
            .enumerate()
            .for_each(|(k, block)| {
                for (r, out) in block.chunks_mut(c_col).enumerate() {
                    second_op_row(problem.a, k * chunk + r, |c| d1.row(c), out);
                }
            });
    });
    RowCounts {
        first_op_rows: n,
        second_op_rows: n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::gen_random_sparse;
    use crate::SparseMatrixCsr;

    #[test]
    fn identity_operands_return_c() {
        let a = SparseMatrixCsr::<f32>::identity(5);
        let b = DenseMatrix::identity(5);
        let c = DenseMatrix::random(5, 3, 7);
        let problem = FusedProblem::gemm_spmm(&a, &b, &c).unwrap();
        assert_eq!(unfused_gemm_spmm(&problem, &WorkerPool::new(2).unwrap()).unwrap(), c);
        assert!(unfused_spmm_spmm(&problem, &WorkerPool::new(2).unwrap()).is_err());
    }

    #[test]
    fn worker_count_does_not_change_bits() {
        let a = gen_random_sparse::<f64>(97, 0.07, 1);
        let b = gen_random_sparse::<f64>(97, 0.05, 2);
        let c = DenseMatrix::random(97, 5, 3);
        let problem = FusedProblem::spmm_spmm(&a, &b, &c).unwrap();
        let one = unfused_spmm_spmm(&problem, &WorkerPool::new(1).unwrap()).unwrap();
        let eight = unfused_spmm_spmm(&problem, &WorkerPool::new(8).unwrap()).unwrap();
        assert!(one.bitwise_eq(&eight));
    }

    #[test]
    fn workspace_reuse_overwrites_previous_results() {
        let a = gen_random_sparse::<f64>(50, 0.1, 4);
        let b = DenseMatrix::random(50, 3, 5);
        let c1 = DenseMatrix::random(3, 2, 6);
        let c2 = DenseMatrix::random(3, 2, 7);
        let pool = WorkerPool::new(2).unwrap();
        let mut ws = Workspace::new(50, 2);
        let p1 = FusedProblem::gemm_spmm(&a, &b, &c1).unwrap();
        let p2 = FusedProblem::gemm_spmm(&a, &b, &c2).unwrap();
        run_unfused_in(&p1, &pool, &mut ws).unwrap();
        run_unfused_in(&p2, &pool, &mut ws).unwrap();
        assert!(ws.d().bitwise_eq(&run_unfused(&p2, &pool).d));
        assert!(run_unfused_in(&p1, &pool, &mut Workspace::new(49, 2)).is_err());
    }

    #[test]
    fn zero_width_output() {
        let a = SparseMatrixCsr::<f64>::identity(3);
        let b = DenseMatrix::zeros(3, 2);
        let c = DenseMatrix::zeros(2, 0);
        let problem = FusedProblem::gemm_spmm(&a, &b, &c).unwrap();
        let e = run_unfused(&problem, &WorkerPool::new(2).unwrap());
        assert_eq!((e.d.n_rows(), e.d.n_cols()), (3, 0));
    }
}
