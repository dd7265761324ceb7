//! Timing protocol and report rows shared by the CLI and the performance
//! tests.
//!
//! Every variant is run once as warmup and then `runs` times; the median of
//! the timed runs is reported. GFLOP/s always uses the FLOP count of the
//! unfused computation so numbers are comparable across variants.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize, Serializer};

use crate::baselines::{build_atomic, build_overlapped, run_atomic, run_overlapped, AtomicSchedule, OverlappedSchedule};
use crate::kernels::{run_fused, run_unfused, run_unfused_in, BOperand, CheckedSchedule, Workspace};
use crate::pool::Binding;
use crate::schedule::{build_schedule_with, coarse_fused_ratio};
use crate::verify::{compare, dense_oracle, ORACLE_MAX_N};
use crate::{DenseMatrix, Error, FusedProblem, Result, Scalar, SchedulerConfig, SparseMatrixCsr, WorkerPool};

/// Cache budget used when nothing can be read from the system.
pub const DEFAULT_CACHE_KB: usize = 1280;

/// Tile sizes visited by the fused-ratio sweep.
pub const DEFAULT_SWEEP_LADDER: [usize; 8] = [64, 128, 256, 512, 1024, 2048, 4096, 8192];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Fused,
    Unfused,
    Atomic,
    Overlapped,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Fused, Variant::Unfused, Variant::Atomic, Variant::Overlapped];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Fused => "fused",
            Variant::Unfused => "unfused",
            Variant::Atomic => "atomic",
            Variant::Overlapped => "overlapped",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown variant `{s}` (expected fused, unfused, atomic or overlapped)"))
    }
}

/// FLOPs of the unfused computation: one multiply-add per scalar product in
/// `B C` and in `A D1`.
pub fn theoretical_flops<T: Scalar>(problem: &FusedProblem<'_, T>) -> f64 {
    let c_col = problem.c_col() as f64;
    let first = match problem.b {
        BOperand::Dense(b) => (b.n_rows() * b.n_cols()) as f64,
        BOperand::Sparse(b) => b.nnz() as f64,
    };
    2.0 * first * c_col + 2.0 * problem.a.nnz() as f64 * c_col
}

/// Median of `samples`; the mean of the two middle values for even lengths.
pub fn median(samples: &[f64]) -> f64 {
    assert!(!samples.is_empty(), "median of an empty sample");
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Executions of the fused code needed before the scheduler pays for
/// itself; infinite when fusion is not faster than the unfused baseline.
pub fn runs_to_amortize(scheduler_seconds: f64, unfused_median: f64, fused_median: f64) -> f64 {
    let gain = unfused_median - fused_median;
    if gain > 0.0 {
        scheduler_seconds / gain
    } else {
        f64::INFINITY
    }
}

/// Runs `f` `warmup` times untimed, then `runs` times timed; returns seconds.
pub fn time_runs<R>(warmup: usize, runs: usize, mut f: impl FnMut() -> R) -> Vec<f64> {
    for _ in 0..warmup {
        std::hint::black_box(f());
    }
    (0..runs)
        .map(|_| {
            let start = Instant::now();
            std::hint::black_box(f());
            start.elapsed().as_secs_f64()
        })
        .collect()
}

fn serialize_unbounded<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) if x.is_infinite() => s.serialize_str("inf"),
        Some(x) => s.serialize_f64(*x),
        None => s.serialize_none(),
    }
}

/// One row of benchmark output. Field order is the CSV column order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub matrix: String,
    pub n: usize,
    pub nnz: usize,
    pub op: String,
    pub variant: Variant,
    pub precision: String,
    pub bcol: usize,
    pub ccol: usize,
    pub workers: usize,
    pub binding: Binding,
    pub runs: usize,
    pub median_seconds: f64,
    pub gflops: f64,
    pub theoretical_flops: f64,
    pub fused_ratio: Option<f64>,
    pub scheduler_seconds: Option<f64>,
    /// Unfused median divided by this variant's median.
    pub speedup: Option<f64>,
    #[serde(serialize_with = "serialize_unbounded")]
    pub runs_to_amortize: Option<f64>,
    /// Replicated first-operation rows (overlapped) or rows shared between
    /// tiles (atomic).
    pub redundancy: Option<usize>,
}

/// CSV header matching [`BenchReport`].
pub const CSV_COLUMNS: [&str; 19] = [
    "matrix",
    "n",
    "nnz",
    "op",
    "variant",
    "precision",
    "bcol",
    "ccol",
    "workers",
    "binding",
    "runs",
    "median_seconds",
    "gflops",
    "theoretical_flops",
    "fused_ratio",
    "scheduler_seconds",
    "speedup",
    "runs_to_amortize",
    "redundancy",
];

/// Writes `rows` as CSV with a header derived from the row type's fields.
pub fn write_csv<R: Serialize, W: std::io::Write>(rows: &[R], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: "<csv output>".into(),
        source,
    })
}

/// Parameters of [`run_benchmark`] that are not part of the problem.
#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub matrix_name: String,
    pub variants: Vec<Variant>,
    pub warmup: usize,
    pub runs: usize,
    pub scheduler: SchedulerConfig,
    /// Check every variant against the dense oracle when `n` permits.
    pub oracle_check: bool,
}

impl BenchConfig {
    pub fn new(matrix_name: impl Into<String>, scheduler: SchedulerConfig) -> Self {
        BenchConfig {
            matrix_name: matrix_name.into(),
            variants: Variant::ALL.to_vec(),
            warmup: 1,
            runs: 7,
            scheduler,
            oracle_check: true,
        }
    }
}

/// A variant with its inspection work done, ready to be executed. Fused and
/// unfused runs reuse one preallocated workspace, so timings measure the
/// computation rather than page faults of fresh output buffers.
enum Prepared<'p, T> {
    Fused(CheckedSchedule<'p, T>, Workspace<T>),
    Unfused(Workspace<T>),
    Atomic(AtomicSchedule),
    Overlapped(OverlappedSchedule),
}

impl<T: Scalar> Prepared<'_, T> {
    /// Allocating execution returning the output, used for the oracle check.
    fn output(&self, problem: &FusedProblem<'_, T>, pool: &WorkerPool) -> Result<DenseMatrix<T>> {
        Ok(match self {
            Prepared::Fused(s, _) => run_fused(problem, s.schedule(), pool)?.d,
            Prepared::Unfused(_) => run_unfused(problem, pool).d,
            Prepared::Atomic(s) => run_atomic(problem, s, pool)?.d,
            Prepared::Overlapped(s) => run_overlapped(problem, s, pool)?.d,
        })
    }

    fn execute(&mut self, problem: &FusedProblem<'_, T>, pool: &WorkerPool) -> Result<()> {
        match self {
            Prepared::Fused(s, ws) => {
                s.run_in(problem, pool, ws)?;
            }
            Prepared::Unfused(ws) => {
                run_unfused_in(problem, pool, ws)?;
            }
            Prepared::Atomic(s) => {
                std::hint::black_box(run_atomic(problem, s, pool)?);
            }
            Prepared::Overlapped(s) => {
                std::hint::black_box(run_overlapped(problem, s, pool)?);
            }
        }
        Ok(())
    }

    fn fused_ratio(&self) -> Option<f64> {
        match self {
            Prepared::Fused(s, _) => Some(s.schedule().fused_ratio()),
            _ => None,
        }
    }

    fn redundancy(&self) -> Option<usize> {
        match self {
            Prepared::Fused(..) => Some(0),
            Prepared::Unfused(_) => None,
            Prepared::Atomic(s) => Some(s.shared_rows),
            Prepared::Overlapped(s) => Some(s.replicated()),
        }
    }
}

struct Entry<'p, T> {
    variant: Variant,
    prepared: Prepared<'p, T>,
    scheduler_seconds: Option<f64>,
    times: Vec<f64>,
}

/// Times every requested variant on `problem` and returns one row per
/// variant. The scheduler's worker count is taken from `pool`.
///
/// Timed runs are interleaved: round `r` executes every variant once, so
/// slow drifts of the machine affect all variants alike. The unfused code is
/// timed alongside the fused one even when not requested, because the
/// amortization column needs it.
pub fn run_benchmark<T: Scalar>(
    problem: &FusedProblem<'_, T>,
    pool: &WorkerPool,
    config: &BenchConfig,
) -> Result<Vec<BenchReport>> {
    if config.runs == 0 {
        return Err(Error::InvalidConfig("at least one timed run is required".into()));
    }
    let n = problem.n();
    let workers = pool.workers();
    let mut sched_cfg = config.scheduler.clone();
    sched_cfg.p = workers;
    sched_cfg.b_col = problem.b_col();
    sched_cfg.c_col = problem.c_col();
    sched_cfg.validate()?;

    let mut entries = Vec::with_capacity(config.variants.len() + 1);
    for &variant in &config.variants {
        entries.push(prepare(problem, pool, &sched_cfg, variant, config.runs)?);
    }
    let shadow_unfused = config.variants.contains(&Variant::Fused) && !config.variants.contains(&Variant::Unfused);
    if shadow_unfused {
        entries.push(prepare(problem, pool, &sched_cfg, Variant::Unfused, config.runs)?);
    }

    let oracle = if config.oracle_check && n <= ORACLE_MAX_N {
        Some(dense_oracle(problem)?)
    } else {
        None
    };
    for e in entries.iter_mut() {
        if let Some(oracle) = &oracle {
            let tol = T::PRECISION.tolerance();
            let report = compare(&e.prepared.output(problem, pool)?, oracle, tol)?;
            if !report.pass {
                return Err(Error::Correctness {
                    variant: e.variant.to_string(),
                    rel_error: report.rel_frobenius,
                    tolerance: tol,
                });
            }
        }
        for _ in 0..config.warmup {
            e.prepared.execute(problem, pool)?;
        }
    }
    // Rounds interleave the variants and rotate which one goes first, so
    // drift in machine load and the state left behind by the previous run
    // are spread evenly instead of always landing on the same variant.
    for round in 0..config.runs {
        let k = entries.len();
        for idx in (0..k).map(|v| (v + round) % k) {
            let e = &mut entries[idx];
            let start = Instant::now();
            e.prepared.execute(problem, pool)?;
            e.times.push(start.elapsed().as_secs_f64());
        }
    }

    let unfused_median = entries
        .iter()
        .find(|e| e.variant == Variant::Unfused)
        .map(|e| median(&e.times));
    if shadow_unfused {
        entries.pop();
    }

    let flops = theoretical_flops(problem);
    Ok(entries
        .into_iter()
        .map(|e| {
            let med = median(&e.times);
            let amortize = match (e.scheduler_seconds, unfused_median) {
                (Some(s), Some(u)) => Some(runs_to_amortize(s, u, med)),
                _ => None,
            };
            BenchReport {
                matrix: config.matrix_name.clone(),
                n,
                nnz: problem.a.nnz(),
                op: problem.op().to_string(),
                variant: e.variant,
                precision: T::PRECISION.to_string(),
                bcol: problem.b_col(),
                ccol: problem.c_col(),
                workers,
                binding: pool.binding(),
                runs: config.runs,
                median_seconds: med,
                gflops: flops / med / 1e9,
                theoretical_flops: flops,
                fused_ratio: e.prepared.fused_ratio(),
                scheduler_seconds: e.scheduler_seconds,
                speedup: unfused_median.map(|u| u / med),
                runs_to_amortize: amortize,
                redundancy: e.prepared.redundancy(),
            }
        })
        .collect())
}

fn prepare<'p, T: Scalar>(
    problem: &FusedProblem<'p, T>,
    pool: &WorkerPool,
    sched_cfg: &SchedulerConfig,
    variant: Variant,
    runs: usize,
) -> Result<Entry<'p, T>> {
    let mut scheduler_seconds = None;
    let prepared = match variant {
        Variant::Unfused => Prepared::Unfused(Workspace::for_problem(problem)),
        Variant::Fused => {
            let shape = problem.b.shape();
            let times = time_runs(0, runs, || build_schedule_with(problem.a, shape, sched_cfg));
            scheduler_seconds = Some(median(&times));
            let schedule = build_schedule_with(problem.a, shape, sched_cfg)?;
            Prepared::Fused(CheckedSchedule::new(schedule, problem.a)?, Workspace::for_problem(problem))
        }
        Variant::Atomic => Prepared::Atomic(build_atomic(problem.a, atomic_tile_count(problem.a, sched_cfg)?)?),
        Variant::Overlapped => {
            Prepared::Overlapped(build_overlapped(problem.a, problem.n().clamp(1, pool.workers()))?)
        }
    };
    Ok(Entry {
        variant,
        prepared,
        scheduler_seconds,
        times: Vec::with_capacity(runs),
    })
}

/// Atomic tiling uses as many tiles as tile fusion's first wavefront has
/// before splitting.
fn atomic_tile_count<T>(a: &SparseMatrixCsr<T>, cfg: &SchedulerConfig) -> Result<usize> {
    let n = a.ensure_square()?;
    if n == 0 {
        return Ok(1);
    }
    let t = crate::schedule::choose_tile_size(n, cfg.ct_size, cfg.p);
    Ok(n.div_ceil(t).clamp(1, n))
}

/// One fused-ratio measurement of the sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub matrix: String,
    pub tile_size: usize,
    pub fused_ratio: f64,
}

/// Coarse fused ratio of `a` at every tile size of `ladder`.
pub fn fused_ratio_sweep<T>(name: &str, a: &SparseMatrixCsr<T>, ladder: &[usize]) -> Result<Vec<SweepPoint>> {
    ladder
        .iter()
        .map(|&t| {
            Ok(SweepPoint {
                matrix: name.to_string(),
                tile_size: t,
                fused_ratio: coarse_fused_ratio(a, t)?,
            })
        })
        .collect()
}

/// Pairs `(t, 2t)` of the sweep where the ratio decreased. Tiles of size
/// `2t` are unions of aligned tiles of size `t`, so containment can only be
/// gained by doubling.
pub fn monotonicity_violations(points: &[SweepPoint]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for p in points {
        if let Some(q) = points
            .iter()
            .find(|q| q.matrix == p.matrix && q.tile_size == 2 * p.tile_size)
        {
            if q.fused_ratio < p.fused_ratio {
                out.push((p.tile_size, q.tile_size));
            }
        }
    }
    out
}

/// Per-core cache budget in KiB: private L1 data and L2 plus this core's
/// share of the last-level cache, read from sysfs.
pub fn detect_cache_kb() -> Option<usize> {
    detect_cache_kb_in(Path::new("/sys/devices/system/cpu/cpu0/cache"))
}

fn detect_cache_kb_in(dir: &Path) -> Option<usize> {
    let mut total = 0usize;
    let mut found = false;
    for entry in fs::read_dir(dir).ok()?.flatten() {
        let name = entry.file_name();
        if !name.to_string_lossy().starts_with("index") {
            continue;
        }
        let read = |f: &str| fs::read_to_string(entry.path().join(f)).ok().map(|s| s.trim().to_string());
        let (Some(level), Some(kind), Some(size)) = (read("level"), read("type"), read("size")) else {
            continue;
        };
        if kind == "Instruction" {
            continue;
        }
        let Some(kb) = parse_size_kb(&size) else { continue };
        let level: u32 = level.parse().ok()?;
        let sharers = read("shared_cpu_list").map_or(1, |l| count_cpu_list(&l)).max(1);
        total += if level >= 3 { kb / sharers } else { kb };
        found = true;
    }
    found.then_some(total).filter(|&kb| kb > 0)
}

fn parse_size_kb(s: &str) -> Option<usize> {
    let s = s.trim();
    let (digits, scale) = match s.chars().last()? {
        'K' | 'k' => (&s[..s.len() - 1], 1),
        'M' | 'm' => (&s[..s.len() - 1], 1024),
        'G' | 'g' => (&s[..s.len() - 1], 1024 * 1024),
        _ => return s.parse::<usize>().ok().map(|b| b / 1024),
    };
    digits.parse::<usize>().ok().map(|v| v * scale)
}

fn count_cpu_list(list: &str) -> usize {
    list.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|part| match part.trim().split_once('-') {
            Some((a, b)) => match (a.parse::<usize>(), b.parse::<usize>()) {
                (Ok(a), Ok(b)) if b >= a => b - a + 1,
                _ => 1,
            },
            None => 1,
        })
        .sum()
}

/// Converts a cache budget in KiB into scalar words of precision `T`.
pub fn cache_words<T: Scalar>(cache_kb: usize) -> usize {
    cache_kb * 1024 / T::PRECISION.bytes()
}
