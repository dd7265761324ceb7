//! Tile fusion scheduler.
//!
//! The scheduler inspects the sparsity pattern of `A` and groups iterations
//! of the two multiplications into fused tiles arranged in exactly two
//! wavefronts:
//!
//! 1. *Coarse fusion.* The first-operation iterations are cut into uniform
//!    tiles of width `t`. A second-operation iteration `j` inside a tile is
//!    fused into it when all column indices of row `j` of `A` fall inside the
//!    tile's range. Everything else goes to the second wavefront.
//! 2. *Splitting.* Tiles whose data-movement cost exceeds the per-core cache
//!    budget are bisected until they fit. Iterations whose dependencies
//!    straddle a cut are demoted to the second wavefront.
//!
//! Tiles inside a wavefront touch disjoint output rows and only read rows of
//! the intermediate `D1` that were produced in the same tile (first
//! wavefront) or in the previous wavefront, so no synchronization is needed
//! apart from the barrier between the wavefronts.

mod balance;
mod cost;
mod dump;
mod split;
pub(crate) mod validate;

use std::ops::Range;

use serde::{Deserialize, Serialize};

pub use balance::{balance, balance_by_weight};
pub use cost::{tile_cost, BShape, CostModel, DenseBCost};
pub use dump::{ScheduleDump, TileDump};
pub use split::{split_tile, split_tile_with};
pub use validate::{validate_schedule, validate_schedule_with, ValidationReport, Violation};

use crate::{Error, Result, SparseMatrixCsr};

/// Inputs of the scheduler besides the sparsity pattern.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    /// Coarse tile size heuristic.
    pub ct_size: usize,
    /// Number of physical cores the schedule targets.
    pub p: usize,
    /// Per-core cache budget in scalar words.
    pub cache_size: usize,
    pub b_col: usize,
    pub c_col: usize,
    /// Bytes of one index divided by bytes of one scalar.
    pub index_to_scalar_ratio: f64,
    pub dense_b_cost: DenseBCost,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            ct_size: 2048,
            p: 1,
            cache_size: 1280 * 1024 / 8,
            b_col: 1,
            c_col: 1,
            index_to_scalar_ratio: 0.5,
            dense_b_cost: DenseBCost::TileRows,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(format!("{what} must be at least 1")));
        if self.ct_size == 0 {
            return bad("ct_size");
        }
        if self.p == 0 {
            return bad("p");
        }
        if self.cache_size == 0 {
            return bad("cache_size");
        }
        if !(self.index_to_scalar_ratio.is_finite() && self.index_to_scalar_ratio >= 0.0) {
            return Err(Error::InvalidConfig("index_to_scalar_ratio must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// One tile: a contiguous range of first-operation iterations plus the
/// second-operation iterations executed with it.
///
/// Second-wavefront tiles carry an empty `i_lo..i_hi` range.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct FusedTile {
    pub i_lo: usize,
    pub i_hi: usize,
    /// Sorted, unique.
    pub j_list: Vec<usize>,
}

impl FusedTile {
    pub fn new(i: Range<usize>, j_list: Vec<usize>) -> Self {
        Self {
            i_lo: i.start,
            i_hi: i.end,
            j_list,
        }
    }

    /// Second-wavefront tile with no first-operation work.
    pub fn unfused(j_list: Vec<usize>) -> Self {
        Self {
            i_lo: 0,
            i_hi: 0,
            j_list,
        }
    }

    pub fn i_range(&self) -> Range<usize> {
        self.i_lo..self.i_hi
    }

    pub fn width(&self) -> usize {
        self.i_hi.saturating_sub(self.i_lo)
    }

    pub fn is_empty(&self) -> bool {
        self.width() == 0 && self.j_list.is_empty()
    }
}

/// Output of the scheduler: two wavefronts of tiles over an `n`-iteration space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FusedSchedule {
    pub n: usize,
    /// Uniform tile width used by the coarse step.
    pub tile_size: usize,
    pub wavefronts: Vec<Vec<FusedTile>>,
}

impl FusedSchedule {
    /// Number of second-operation iterations executed in the first wavefront.
    pub fn fused_iterations(&self) -> usize {
        self.wavefronts
            .first()
            .map_or(0, |w| w.iter().map(|t| t.j_list.len()).sum())
    }

    /// Fused second-operation iterations over all `2n` iterations.
    pub fn fused_ratio(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        self.fused_iterations() as f64 / (2 * self.n) as f64
    }

    pub fn tile_count(&self) -> usize {
        self.wavefronts.iter().map(Vec::len).sum()
    }
}

/// Free-function form of [`FusedSchedule::fused_ratio`].
pub fn fused_ratio(schedule: &FusedSchedule) -> f64 {
    schedule.fused_ratio()
}

/// Result of the coarse step: uniform tiles of width `tile_size` in the first
/// wavefront and the balanced leftovers in the second.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntermediateSchedule {
    pub n: usize,
    pub tile_size: usize,
    pub fused: Vec<FusedTile>,
    pub unfused: Vec<FusedTile>,
}

impl IntermediateSchedule {
    pub fn fused_iterations(&self) -> usize {
        self.fused.iter().map(|t| t.j_list.len()).sum()
    }

    pub fn fused_ratio(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        self.fused_iterations() as f64 / (2 * self.n) as f64
    }
}

/// Uniform tile width: `ct_size` when that yields at least `p` tiles,
/// otherwise `ceil(n / p)`.
pub fn choose_tile_size(n: usize, ct_size: usize, p: usize) -> usize {
    assert!(ct_size >= 1 && p >= 1, "ct_size and p must be positive");
    if n.div_ceil(ct_size) >= p {
        ct_size
    } else {
        n.div_ceil(p).max(1)
    }
}

/// Number of second-wavefront tiles for `unfused` leftover iterations.
pub(crate) fn second_wavefront_tiles(unfused: usize, tile_size: usize, p: usize) -> usize {
    p.max(unfused.div_ceil(tile_size.max(1)))
}

/// Second-operation iterations of `lo..hi` whose dependencies all lie in `lo..hi`.
fn coarse_tile<T>(a: &SparseMatrixCsr<T>, lo: usize, hi: usize, unfused: &mut Vec<usize>) -> FusedTile {
    let mut j_list = Vec::new();
    for j in lo..hi {
        if a.row_within(j, lo, hi) {
            j_list.push(j);
        } else {
            unfused.push(j);
        }
    }
    FusedTile::new(lo..hi, j_list)
}

/// Coarse tile fusion with uniform tile width `t`.
///
/// The leftovers are balanced into `max(p, ceil(|unfused| / t))` tiles.
pub fn step1_coarse_fuse<T>(a: &SparseMatrixCsr<T>, t: usize, p: usize) -> Result<IntermediateSchedule> {
    let n = a.ensure_square()?;
    if t == 0 || p == 0 {
        return Err(Error::InvalidConfig("tile size and p must be at least 1".into()));
    }
    let mut unfused = Vec::new();
    let fused: Vec<FusedTile> = (0..n)
        .step_by(t)
        .map(|lo| coarse_tile(a, lo, (lo + t).min(n), &mut unfused))
        .collect();
    let k = second_wavefront_tiles(unfused.len(), t, p);
    let unfused = balance(a, &unfused, k)
        .into_iter()
        .filter(|j| !j.is_empty())
        .map(FusedTile::unfused)
        .collect();
    Ok(IntermediateSchedule {
        n,
        tile_size: t,
        fused,
        unfused,
    })
}

/// Fused ratio of the coarse step alone for tile width `t` (no splitting).
pub fn coarse_fused_ratio<T>(a: &SparseMatrixCsr<T>, t: usize) -> Result<f64> {
    let n = a.ensure_square()?;
    if t == 0 {
        return Err(Error::InvalidConfig("tile size must be at least 1".into()));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let mut fused = 0usize;
    for lo in (0..n).step_by(t) {
        let hi = (lo + t).min(n);
        fused += (lo..hi).filter(|&j| a.row_within(j, lo, hi)).count();
    }
    Ok(fused as f64 / (2 * n) as f64)
}

/// Builds the two-wavefront schedule for `D = A (B C)` with dense `B`.
pub fn build_schedule<T>(a: &SparseMatrixCsr<T>, config: &SchedulerConfig) -> Result<FusedSchedule> {
    build_schedule_with(a, BShape::Dense, config)
}

/// Builds the schedule, with the cost model aware of how `B` is stored.
pub fn build_schedule_with<T>(
    a: &SparseMatrixCsr<T>,
    b: BShape<'_>,
    config: &SchedulerConfig,
) -> Result<FusedSchedule> {
    config.validate()?;
    let n = a.ensure_square()?;
    b.check_rows(n)?;
    if n == 0 {
        return Ok(FusedSchedule {
            n,
            tile_size: 0,
            wavefronts: vec![Vec::new(), Vec::new()],
        });
    }

    let t = choose_tile_size(n, config.ct_size, config.p);
    let coarse = step1_coarse_fuse(a, t, config.p)?;
    let mut model = CostModel::new(a, b, config);

    let mut first = Vec::with_capacity(coarse.fused.len());
    let mut leftover: Vec<usize> = coarse.unfused.into_iter().flat_map(|t| t.j_list).collect();
    for tile in coarse.fused {
        split::split_fused(tile, &mut model, config.cache_size, &mut first, &mut leftover);
    }
    leftover.sort_unstable();

    let k = second_wavefront_tiles(leftover.len(), t, config.p);
    let mut second = Vec::with_capacity(k);
    for j_list in balance(a, &leftover, k) {
        if !j_list.is_empty() {
            split::split_unfused(FusedTile::unfused(j_list), &mut model, config.cache_size, &mut second);
        }
    }

    Ok(FusedSchedule {
        n,
        tile_size: t,
        wavefronts: vec![first, second],
    })
}
