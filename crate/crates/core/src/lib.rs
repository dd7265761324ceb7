//! Sparsity-aware tile fusion for the chained product `D = A (B C)`.
//!
//! `A` is an `n x n` sparse matrix in CSR form, `B` is either dense
//! (`GeMM-SpMM`) or sparse (`SpMM-SpMM`) and `C` is dense. The scheduler
//! inspects the sparsity pattern of `A` once and emits a two-wavefront
//! schedule of fused tiles; the executors in [`kernels`] run that schedule on
//! a pool of workers with a single barrier between the wavefronts.
//!
//! The [`baselines`] module carries the two prior fusion strategies (atomic
//! tiling and overlapped tiling) used for comparison, [`verify`] holds the
//! dense oracle, and [`bench`] implements the timing protocol used by the CLI.

pub mod baselines;
pub mod bench;
mod error;
pub mod kernels;
pub mod matrix;
pub mod pool;
mod scalar;
pub mod schedule;
pub mod verify;

pub use error::{Error, Result};
pub use kernels::{BOperand, FusedProblem};
pub use matrix::{DenseMatrix, SparseMatrixCsr};
pub use pool::WorkerPool;
pub use scalar::{Precision, Scalar};
pub use schedule::{FusedSchedule, FusedTile, SchedulerConfig};
