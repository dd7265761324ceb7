use serde::Serialize;

use super::cost::{BShape, CostModel};
use super::{FusedSchedule, SchedulerConfig};
use crate::SparseMatrixCsr;

/// One broken schedule property. Tiles are addressed as `(wavefront, index)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Violation {
    SizeMismatch { schedule_n: usize, matrix_n: usize },
    WavefrontCount { found: usize },
    /// First-operation range outside `[0, n)` or reversed.
    BadIRange { wavefront: usize, tile: usize, lo: usize, hi: usize },
    /// Second-wavefront tiles must not run first-operation iterations.
    FirstOpOutsideFirstWavefront { wavefront: usize, tile: usize },
    /// Iterations `lo..hi` are covered `count` times by first-wavefront ranges.
    FirstOpCoverage { lo: usize, hi: usize, count: usize },
    UnsortedJList { wavefront: usize, tile: usize },
    JOutOfRange { wavefront: usize, tile: usize, j: usize },
    SecondOpCoverage { j: usize, count: usize },
    /// A fused iteration reads `D1` rows produced outside its tile.
    Dependence { tile: usize, j: usize },
    CostExceeded { wavefront: usize, tile: usize, cost: usize, cache_size: usize },
    LoadBalance { wavefront: usize, tiles: usize, required: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IrreducibleTile {
    pub wavefront: usize,
    pub tile: usize,
    pub cost: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Tiles over budget that cannot be split further; not failures.
    pub irreducible: Vec<IrreducibleTile>,
}

impl ValidationReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_schedule<T>(
    schedule: &FusedSchedule,
    a: &SparseMatrixCsr<T>,
    config: &SchedulerConfig,
) -> ValidationReport {
    validate_schedule_with(schedule, a, BShape::Dense, config)
}

pub fn validate_schedule_with<T>(
    schedule: &FusedSchedule,
    a: &SparseMatrixCsr<T>,
    b: BShape<'_>,
    config: &SchedulerConfig,
) -> ValidationReport {
    let mut violations = structural_violations(schedule, a);
    let mut irreducible = Vec::new();
    if !violations.is_empty() {
        return ValidationReport { violations, irreducible };
    }
    let n = schedule.n;

    let mut model = CostModel::new(a, b, config);
    for (w, tiles) in schedule.wavefronts.iter().enumerate() {
        for (v, tile) in tiles.iter().enumerate() {
            let cost = model.cost(tile);
            if cost <= config.cache_size {
                continue;
            }
            let atomic = if w == 0 { tile.width() <= 1 } else { tile.j_list.len() <= 1 };
            if atomic {
                irreducible.push(IrreducibleTile { wavefront: w, tile: v, cost });
            } else {
                violations.push(Violation::CostExceeded {
                    wavefront: w,
                    tile: v,
                    cost,
                    cache_size: config.cache_size,
                });
            }
        }
    }

    let p = config.p.max(1);
    let first = &schedule.wavefronts[0];
    let required = if n == 0 { 0 } else { p.min(n.div_ceil(n.div_ceil(p))) };
    if first.len() < required {
        violations.push(Violation::LoadBalance {
            wavefront: 0,
            tiles: first.len(),
            required,
        });
    }
    let second = &schedule.wavefronts[1];
    let leftover: usize = second.iter().map(|t| t.j_list.len()).sum();
    let nonempty = second.iter().filter(|t| !t.j_list.is_empty()).count();
    if nonempty < p.min(leftover) {
        violations.push(Violation::LoadBalance {
            wavefront: 1,
            tiles: nonempty,
            required: p.min(leftover),
        });
    }

    ValidationReport { violations, irreducible }
}

/// Properties the executors rely on for race freedom: two wavefronts, the
/// first-operation ranges partition `[0, n)`, every second-operation
/// iteration appears once, and fused iterations depend only on their own
/// tile. Runs in `O(n + tiles)`.
pub(crate) fn structural_violations<T>(schedule: &FusedSchedule, a: &SparseMatrixCsr<T>) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = schedule.n;
    if a.n_rows() != n || a.n_cols() != n {
        out.push(Violation::SizeMismatch {
            schedule_n: n,
            matrix_n: a.n_rows(),
        });
        return out;
    }
    if schedule.wavefronts.len() != 2 {
        out.push(Violation::WavefrontCount {
            found: schedule.wavefronts.len(),
        });
        return out;
    }

    let mut diff = vec![0i64; n + 1];
    let mut seen = vec![0usize; n];
    for (w, tiles) in schedule.wavefronts.iter().enumerate() {
        for (v, tile) in tiles.iter().enumerate() {
            if w > 0 && tile.width() > 0 {
                out.push(Violation::FirstOpOutsideFirstWavefront { wavefront: w, tile: v });
            } else if tile.i_lo > tile.i_hi || tile.i_hi > n {
                out.push(Violation::BadIRange {
                    wavefront: w,
                    tile: v,
                    lo: tile.i_lo,
                    hi: tile.i_hi,
                });
            } else if w == 0 {
                diff[tile.i_lo] += 1;
                diff[tile.i_hi] -= 1;
            }
            if tile.j_list.windows(2).any(|p| p[0] >= p[1]) {
                out.push(Violation::UnsortedJList { wavefront: w, tile: v });
            }
            for &j in &tile.j_list {
                if j >= n {
                    out.push(Violation::JOutOfRange { wavefront: w, tile: v, j });
                    continue;
                }
                seen[j] += 1;
                if w == 0 && !a.row_within(j, tile.i_lo, tile.i_hi) {
                    out.push(Violation::Dependence { tile: v, j });
                }
            }
        }
    }

    let mut run: Option<(usize, usize)> = None;
    let mut cover = 0i64;
    for i in 0..=n {
        let count = if let Some(d) = diff.get(i).filter(|_| i < n) {
            cover += d;
            cover as usize
        } else {
            1
        };
        match run {
            Some((lo, c)) if c != count => {
                out.push(Violation::FirstOpCoverage { lo, hi: i, count: c });
                run = (count != 1).then_some((i, count));
            }
            None if count != 1 => run = Some((i, count)),
            _ => {}
        }
    }

    out.extend(
        seen.iter()
            .enumerate()
            .filter(|&(_, &c)| c != 1)
            .map(|(j, &count)| Violation::SecondOpCoverage { j, count }),
    );
    out
}
