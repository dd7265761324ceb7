//! Data-movement cost of a tile, in scalar words.
//!
//! For a tile with first-operation width `t`, second-operation list `J` and
//! `uc` distinct columns referenced by the rows of `A` in `J`:
//!
//! ```text
//! cost = nz_words + (uc + t + |J|) * cCol + idx
//! ```
//!
//! With dense `B`, `nz_words = t * bCol` (the rows of `B` the tile reads).
//! With sparse `B`, `nz_words = (nnz(B[i_range]) + nnz(A[J])) * cCol`.
//! `idx` counts index words (`nnz + rows + 1` per sparse operand) scaled by
//! the index-to-scalar size ratio and rounded up.

use serde::{Deserialize, Serialize};

use super::{FusedTile, SchedulerConfig};
use crate::{Error, Result, SparseMatrixCsr};

/// How the first operand `B` is stored, as far as the cost model cares.
#[derive(Clone, Copy, Debug)]
pub enum BShape<'a> {
    Dense,
    /// Row pointer of the CSR `B`.
    Sparse { row_ptr: &'a [usize] },
}

impl<'a> BShape<'a> {
    pub fn sparse<T>(b: &'a SparseMatrixCsr<T>) -> Self {
        BShape::Sparse { row_ptr: b.row_ptr() }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self, BShape::Dense)
    }

    pub(crate) fn check_rows(&self, n: usize) -> Result<()> {
        match self {
            BShape::Sparse { row_ptr } if row_ptr.len() != n + 1 => Err(Error::DimensionMismatch(format!(
                "B has {} rows, A has {n}",
                row_ptr.len().saturating_sub(1)
            ))),
            _ => Ok(()),
        }
    }
}

/// Accounting for the dense-`B` term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DenseBCost {
    /// Only the `t` rows of `B` the tile reads: `t * bCol` words.
    #[default]
    TileRows,
    /// The whole of `B` is charged to every tile (`n * bCol` nonzeros).
    /// Makes every tile cost the same order; kept for comparison.
    WholeMatrix,
}

/// Cost evaluator with reusable scratch for counting distinct columns.
pub struct CostModel<'a, T> {
    a: &'a SparseMatrixCsr<T>,
    b: BShape<'a>,
    b_col: usize,
    c_col: usize,
    ratio: f64,
    dense_b: DenseBCost,
    stamp: Vec<u32>,
    epoch: u32,
}

impl<'a, T> CostModel<'a, T> {
    pub fn new(a: &'a SparseMatrixCsr<T>, b: BShape<'a>, config: &SchedulerConfig) -> Self {
        Self {
            a,
            b,
            b_col: config.b_col,
            c_col: config.c_col,
            ratio: config.index_to_scalar_ratio,
            dense_b: config.dense_b_cost,
            stamp: vec![0; a.n_cols()],
            epoch: 0,
        }
    }

    pub fn matrix(&self) -> &'a SparseMatrixCsr<T> {
        self.a
    }

    pub fn cost(&mut self, tile: &FusedTile) -> usize {
        let t = tile.width();
        let jn = tile.j_list.len();

        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.fill(0);
            self.epoch = 1;
        }
        let mut uc = 0usize;
        let mut nnz_a = 0usize;
        for &j in &tile.j_list {
            let cols = self.a.row_cols(j);
            nnz_a += cols.len();
            for &c in cols {
                let slot = &mut self.stamp[c as usize];
                if *slot != self.epoch {
                    *slot = self.epoch;
                    uc += 1;
                }
            }
        }

        let (nz_words, b_index) = match self.b {
            BShape::Dense => match self.dense_b {
                DenseBCost::TileRows => (t * self.b_col, 0),
                DenseBCost::WholeMatrix => (self.a.n_rows() * self.b_col * self.c_col, 0),
            },
            BShape::Sparse { row_ptr } => {
                let nnz_b = if t == 0 { 0 } else { row_ptr[tile.i_hi] - row_ptr[tile.i_lo] };
                ((nnz_b + nnz_a) * self.c_col, nnz_b + t + 1)
            }
        };
        let index_words = nnz_a + jn + 1 + b_index;
        let idx = (index_words as f64 * self.ratio).ceil() as usize;
        nz_words + (uc + t + jn) * self.c_col + idx
    }
}

/// One-off cost evaluation; see [`CostModel`] for repeated queries.
pub fn tile_cost<T>(tile: &FusedTile, a: &SparseMatrixCsr<T>, b: BShape<'_>, config: &SchedulerConfig) -> usize {
    CostModel::new(a, b, config).cost(tile)
}
