//! Matrix kernels and the executors for `D = A (B C)`.
//!
//! All executors share the same row kernels: the first operation produces a
//! row of `D1 = B C` (dense GeMM row or sparse SpMM row), the second produces
//! a row of `D = A D1`. Rows accumulate in ascending nonzero order with `cCol`
//! innermost, so every variant that computes a row without splitting it
//! produces bit-identical results.

mod fused;
mod shared;
mod unfused;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use fused::{fused_gemm_spmm, fused_spmm_spmm, run_fused, run_fused_in, run_fused_traced, CheckedSchedule};
pub(crate) use shared::SharedRows;
pub use unfused::{run_unfused, run_unfused_in, unfused_gemm_spmm, unfused_spmm_spmm};

use crate::schedule::BShape;
use crate::{DenseMatrix, Error, Result, Scalar, SparseMatrixCsr};

/// Which pair of kernels the chained product maps to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Op {
    #[serde(rename = "gemm-spmm")]
    GemmSpmm,
    #[serde(rename = "spmm-spmm")]
    SpmmSpmm,
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Op::GemmSpmm => "gemm-spmm",
            Op::SpmmSpmm => "spmm-spmm",
        })
    }
}

impl FromStr for Op {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "gemm-spmm" => Ok(Op::GemmSpmm),
            "spmm-spmm" => Ok(Op::SpmmSpmm),
            other => Err(format!("unknown op `{other}` (expected gemm-spmm or spmm-spmm)")),
        }
    }
}

/// The first operand `B`.
#[derive(Clone, Copy, Debug)]
pub enum BOperand<'a, T> {
    Dense(&'a DenseMatrix<T>),
    Sparse(&'a SparseMatrixCsr<T>),
}

impl<'a, T> BOperand<'a, T> {
    pub fn n_rows(&self) -> usize {
        match self {
            BOperand::Dense(b) => b.n_rows(),
            BOperand::Sparse(b) => b.n_rows(),
        }
    }

    pub fn n_cols(&self) -> usize {
        match self {
            BOperand::Dense(b) => b.n_cols(),
            BOperand::Sparse(b) => b.n_cols(),
        }
    }

    pub fn op(&self) -> Op {
        match self {
            BOperand::Dense(_) => Op::GemmSpmm,
            BOperand::Sparse(_) => Op::SpmmSpmm,
        }
    }

    pub fn shape(&self) -> BShape<'a> {
        match *self {
            BOperand::Dense(_) => BShape::Dense,
            BOperand::Sparse(b) => BShape::Sparse { row_ptr: b.row_ptr() },
        }
    }
}

/// Operands of `D = A (B C)` with conforming dimensions.
#[derive(Clone, Copy, Debug)]
pub struct FusedProblem<'a, T> {
    pub a: &'a SparseMatrixCsr<T>,
    pub b: BOperand<'a, T>,
    pub c: &'a DenseMatrix<T>,
}

impl<'a, T: Scalar> FusedProblem<'a, T> {
    pub fn new(a: &'a SparseMatrixCsr<T>, b: BOperand<'a, T>, c: &'a DenseMatrix<T>) -> Result<Self> {
        let n = a.ensure_square()?;
        if b.n_rows() != n {
            return Err(Error::DimensionMismatch(format!("A is {n}x{n} but B has {} rows", b.n_rows())));
        }
        if b.n_cols() != c.n_rows() {
            return Err(Error::DimensionMismatch(format!(
                "B has {} columns but C has {} rows",
                b.n_cols(),
                c.n_rows()
            )));
        }
        Ok(Self { a, b, c })
    }

    pub fn gemm_spmm(a: &'a SparseMatrixCsr<T>, b: &'a DenseMatrix<T>, c: &'a DenseMatrix<T>) -> Result<Self> {
        Self::new(a, BOperand::Dense(b), c)
    }

    pub fn spmm_spmm(a: &'a SparseMatrixCsr<T>, b: &'a SparseMatrixCsr<T>, c: &'a DenseMatrix<T>) -> Result<Self> {
        Self::new(a, BOperand::Sparse(b), c)
    }

    pub fn n(&self) -> usize {
        self.a.n_rows()
    }

    pub fn b_col(&self) -> usize {
        self.b.n_cols()
    }

    pub fn c_col(&self) -> usize {
        self.c.n_cols()
    }

    pub fn op(&self) -> Op {
        self.b.op()
    }

    pub(crate) fn expect_op(&self, op: Op) -> Result<()> {
        if self.op() == op {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "{op} executor needs a {} B operand",
                if op == Op::GemmSpmm { "dense" } else { "sparse" }
            )))
        }
    }
}

/// Rows computed by each operation during one execution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct RowCounts {
    pub first_op_rows: usize,
    pub second_op_rows: usize,
}

#[derive(Clone, Debug)]
pub struct Execution<T> {
    pub d: DenseMatrix<T>,
    pub counts: RowCounts,
}

/// Output buffers of one execution: the intermediate `D1 = B C` and the
/// result `D`, both `n x cCol`. Executors overwrite every row, so a
/// workspace can be reused across runs without clearing.
#[derive(Clone, Debug)]
pub struct Workspace<T> {
    d1: DenseMatrix<T>,
    d: DenseMatrix<T>,
}

impl<T: Scalar> Workspace<T> {
    pub fn new(n: usize, c_col: usize) -> Self {
        Workspace {
            d1: DenseMatrix::zeros(n, c_col),
            d: DenseMatrix::zeros(n, c_col),
        }
    }

    pub fn for_problem(problem: &FusedProblem<'_, T>) -> Self {
        Self::new(problem.n(), problem.c_col())
    }

    /// The result of the last execution.
    pub fn d(&self) -> &DenseMatrix<T> {
        &self.d
    }

    pub fn into_output(self) -> DenseMatrix<T> {
        self.d
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut DenseMatrix<T>, &mut DenseMatrix<T>) {
        (&mut self.d1, &mut self.d)
    }

    pub(crate) fn check(&self, problem: &FusedProblem<'_, T>) -> Result<()> {
        let shape = (problem.n(), problem.c_col());
        if (self.d.n_rows(), self.d.n_cols()) != shape || (self.d1.n_rows(), self.d1.n_cols()) != shape {
            return Err(Error::DimensionMismatch(format!(
                "workspace is {}x{}, problem needs {}x{}",
                self.d.n_rows(),
                self.d.n_cols(),
                shape.0,
                shape.1
            )));
        }
        Ok(())
    }
}

#[inline(always)]
fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (y, &x) in y.iter_mut().zip(x) {
        *y += alpha * x;
    }
}

/// Row `i` of `D1 = B C`.
#[inline]
pub(crate) fn first_op_row<T: Scalar>(b: &BOperand<'_, T>, c: &DenseMatrix<T>, i: usize, out: &mut [T]) {
    out.fill(T::ZERO);
    match b {
        BOperand::Dense(b) => {
            for (k, &bv) in b.row(i).iter().enumerate() {
                axpy(bv, c.row(k), out);
            }
        }
        BOperand::Sparse(b) => {
            let (cols, vals) = b.row(i);
            for (&k, &bv) in cols.iter().zip(vals) {
                axpy(bv, c.row(k as usize), out);
            }
        }
    }
}

/// Row `j` of `D = A X` where `x_row(c)` yields row `c` of `X`.
#[inline]
pub(crate) fn second_op_row<'x, T: Scalar>(
    a: &SparseMatrixCsr<T>,
    j: usize,
    x_row: impl Fn(usize) -> &'x [T],
    out: &mut [T],
) {
    out.fill(T::ZERO);
    let (cols, vals) = a.row(j);
    for (&c, &av) in cols.iter().zip(vals) {
        axpy(av, x_row(c as usize), out);
    }
}

/// Rows `rows` of `B C`.
pub fn gemm<T: Scalar>(b: &DenseMatrix<T>, c: &DenseMatrix<T>, rows: Range<usize>) -> Result<DenseMatrix<T>> {
    if b.n_cols() != c.n_rows() {
        return Err(Error::DimensionMismatch(format!(
            "B has {} columns but C has {} rows",
            b.n_cols(),
            c.n_rows()
        )));
    }
    if rows.end > b.n_rows() || rows.start > rows.end {
        return Err(Error::DimensionMismatch(format!("row range {rows:?} outside B with {} rows", b.n_rows())));
    }
    let mut out = DenseMatrix::zeros(rows.len(), c.n_cols());
    let bop = BOperand::Dense(b);
    for (k, i) in rows.enumerate() {
        first_op_row(&bop, c, i, out.row_mut(k));
    }
    Ok(out)
}

/// Rows `j_list` of `A X`, in list order.
pub fn spmm<T: Scalar>(a: &SparseMatrixCsr<T>, x: &DenseMatrix<T>, j_list: &[usize]) -> Result<DenseMatrix<T>> {
    if a.n_cols() != x.n_rows() {
        return Err(Error::DimensionMismatch(format!(
            "A has {} columns but X has {} rows",
            a.n_cols(),
            x.n_rows()
        )));
    }
    if let Some(&j) = j_list.iter().find(|&&j| j >= a.n_rows()) {
        return Err(Error::DimensionMismatch(format!("row {j} outside A with {} rows", a.n_rows())));
    }
    let mut out = DenseMatrix::zeros(j_list.len(), x.n_cols());
    for (k, &j) in j_list.iter().enumerate() {
        second_op_row(a, j, |c| x.row(c), out.row_mut(k));
    }
    Ok(out)
}
