//! Prior fusion strategies used as comparison points.
//!
//! * Overlapped tiling partitions the second operation and replicates every
//!   first-operation iteration a partition depends on, so partitions run
//!   without any synchronization at the price of redundant work.
//! * Atomic tiling partitions the first operation and lets every tile push
//!   its contributions into the output rows that consume them, resolving
//!   conflicting writes with atomic accumulation and a barrier.

mod atomic;
mod overlapped;

pub use atomic::{build_atomic, run_atomic, AtomicSchedule, AtomicTile, RowSlice};
pub use overlapped::{build_overlapped, run_overlapped, OverlappedSchedule, OverlappedTile};

/// `k` near-equal contiguous ranges over `0..n`; returns the `k + 1` bounds.
pub(crate) fn equal_bounds(n: usize, k: usize) -> Vec<usize> {
    (0..=k).map(|v| v * n / k).collect()
}
