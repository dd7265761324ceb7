//! Matrix storage, Matrix Market ingestion and synthetic generators.

mod dense;
pub mod gen;
pub mod mtx;

pub use dense::DenseMatrix;
pub use gen::{gen_arrow, gen_banded, gen_random_sparse, gen_random_sparse_rect};
pub use mtx::{load_matrix_market, read_matrix_market, write_matrix_market};

use crate::{Error, Result, Scalar};

/// Compressed sparse row matrix.
///
/// Column indices within a row are strictly increasing. For the scheduler the
/// pattern doubles as the dependence graph between the two fused loops: the
/// in-edges of second-operation iteration `j` are the column indices of row
/// `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrixCsr<T> {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<T>,
}

impl<T: Scalar> SparseMatrixCsr<T> {
    /// Checked constructor; rejects anything violating the CSR invariants.
    pub fn try_new(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<u32>,
        values: Vec<T>,
    ) -> Result<Self> {
        if n_cols > u32::MAX as usize {
            return Err(Error::InvalidCsr(format!("{n_cols} columns exceed u32 index range")));
        }
        if row_ptr.len() != n_rows + 1 {
            return Err(Error::InvalidCsr(format!(
                "row_ptr has length {}, expected {}",
                row_ptr.len(),
                n_rows + 1
            )));
        }
        if row_ptr[0] != 0 {
            return Err(Error::InvalidCsr("row_ptr[0] must be 0".into()));
        }
        if col_idx.len() != values.len() {
            return Err(Error::InvalidCsr(format!(
                "col_idx has {} entries but values has {}",
                col_idx.len(),
                values.len()
            )));
        }
        if row_ptr[n_rows] != col_idx.len() {
            return Err(Error::InvalidCsr(format!(
                "row_ptr[n_rows] = {} but nnz = {}",
                row_ptr[n_rows],
                col_idx.len()
            )));
        }
        for r in 0..n_rows {
            let (lo, hi) = (row_ptr[r], row_ptr[r + 1]);
            if lo > hi {
                return Err(Error::InvalidCsr(format!("row_ptr decreases at row {r}")));
            }
            let cols = &col_idx[lo..hi];
            if let Some(&last) = cols.last() {
                if last as usize >= n_cols {
                    return Err(Error::InvalidCsr(format!(
                        "row {r} has column {last} outside [0, {n_cols})"
                    )));
                }
            }
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidCsr(format!(
                    "row {r} column indices are not strictly increasing"
                )));
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Builds a CSR matrix from coordinate triplets. Duplicates are summed.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, T)>,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, T)> = triplets.into_iter().collect();
        if let Some(&(r, c, _)) = entries.iter().find(|&&(r, c, _)| r >= n_rows || c >= n_cols) {
            return Err(Error::InvalidCsr(format!(
                "entry ({r}, {c}) outside {n_rows}x{n_cols}"
            )));
        }
        // Stable sort keeps duplicates in input order so summation is reproducible.
        entries.sort_by_key(|&(r, c, _)| (r, c));

        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx: Vec<u32> = Vec::with_capacity(entries.len());
        let mut values: Vec<T> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            last = Some((r, c));
            row_ptr[r + 1] += 1;
            col_idx.push(c as u32);
            values.push(v);
        }
        for r in 0..n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self::try_new(n_rows, n_cols, row_ptr, col_idx, values)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n as u32).collect(),
            values: vec![T::ONE; n],
        }
    }

    pub fn from_dense(dense: &DenseMatrix<T>) -> Self {
        let mut row_ptr = Vec::with_capacity(dense.n_rows() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for r in 0..dense.n_rows() {
            for (c, &v) in dense.row(r).iter().enumerate() {
                if v != T::ZERO {
                    col_idx.push(c as u32);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n_rows: dense.n_rows(),
            n_cols: dense.n_cols(),
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Same pattern, values converted to another precision.
    pub fn cast<U: Scalar>(&self) -> SparseMatrixCsr<U> {
        SparseMatrixCsr {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: self.values.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut d = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            let out = d.row_mut(r);
            for (&c, &v) in cols.iter().zip(vals) {
                out[c as usize] = v;
            }
        }
        d
    }
}

impl<T> SparseMatrixCsr<T> {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    pub fn ensure_square(&self) -> Result<usize> {
        if self.is_square() {
            Ok(self.n_rows)
        } else {
            Err(Error::NotSquare {
                rows: self.n_rows,
                cols: self.n_cols,
            })
        }
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[u32] {
        &self.col_idx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn row(&self, r: usize) -> (&[u32], &[T]) {
        let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    #[inline]
    pub fn row_cols(&self, r: usize) -> &[u32] {
        &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]]
    }

    #[inline]
    pub fn row_nnz(&self, r: usize) -> usize {
        self.row_ptr[r + 1] - self.row_ptr[r]
    }

    /// True when every column index of row `r` lies in `[lo, hi)`.
    ///
    /// An empty row has no in-edges and is contained in the range holding its
    /// own index.
    #[inline]
    pub fn row_within(&self, r: usize, lo: usize, hi: usize) -> bool {
        match self.row_cols(r) {
            [] => lo <= r && r < hi,
            [first, .., last] => lo <= *first as usize && (*last as usize) < hi,
            [only] => lo <= *only as usize && (*only as usize) < hi,
        }
    }
}
