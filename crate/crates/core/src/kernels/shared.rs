use std::marker::PhantomData;

use crate::DenseMatrix;

/// Row-granular view of a dense matrix shared by workers that write
/// disjoint rows.
///
/// Callers uphold the scheduling contract: a row is written by at most one
/// worker at a time and is never read while another worker may write it.
pub(crate) struct SharedRows<'a, T> {
    ptr: *mut T,
    n_rows: usize,
    n_cols: usize,
    _borrow: PhantomData<&'a mut DenseMatrix<T>>,
}

// SAFETY: access goes through the unsafe row accessors, whose callers
// guarantee the absence of conflicting accesses.
unsafe impl<T: Send + Sync> Send for SharedRows<'_, T> {}
unsafe impl<T: Send + Sync> Sync for SharedRows<'_, T> {}

impl<'a, T> SharedRows<'a, T> {
    pub(crate) fn new(m: &'a mut DenseMatrix<T>) -> Self {
        let (n_rows, n_cols) = (m.n_rows(), m.n_cols());
        Self {
            ptr: m.data_mut().as_mut_ptr(),
            n_rows,
            n_cols,
            _borrow: PhantomData,
        }
    }

    /// # Safety
    /// No other reference to row `r` may be live for the lifetime of the result.
    #[inline]
    #[allow(clippy::mut_from_ref)]
    pub(crate) unsafe fn row_mut(&self, r: usize) -> &mut [T] {
        assert!(r < self.n_rows, "row {r} out of bounds");
        std::slice::from_raw_parts_mut(self.ptr.add(r * self.n_cols), self.n_cols)
    }

    /// # Safety
    /// Row `r` must not be written while the result is live.
    #[inline]
    pub(crate) unsafe fn row(&self, r: usize) -> &[T] {
        assert!(r < self.n_rows, "row {r} out of bounds");
        std::slice::from_raw_parts(self.ptr.add(r * self.n_cols), self.n_cols)
    }
}
