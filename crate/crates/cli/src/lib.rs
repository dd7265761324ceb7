//! Command implementations behind the `tilefuse` binary.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use tilefuse::baselines::{build_atomic, build_overlapped, run_atomic, run_overlapped};
use tilefuse::bench::{
    self, detect_cache_kb, fused_ratio_sweep, monotonicity_violations, run_benchmark, write_csv, BenchConfig,
    SweepPoint, Variant, DEFAULT_CACHE_KB,
};
use tilefuse::kernels::{run_fused, run_unfused, Op};
use tilefuse::matrix::{gen_arrow, gen_banded, gen_random_sparse, gen_random_sparse_rect, load_matrix_market};
use tilefuse::pool::{available_cpus, Binding};
use tilefuse::schedule::{build_schedule_with, validate_schedule_with, ScheduleDump};
use tilefuse::verify::{compare, dense_oracle};
use tilefuse::{DenseMatrix, FusedProblem, Precision, Scalar, SchedulerConfig, SparseMatrixCsr, WorkerPool};

#[derive(Debug, Parser)]
#[command(name = "tilefuse", version, about = "Tile fusion for D = A(BC): benchmarks, schedules and checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Time the requested variants and emit one report row per variant.
    Run(RunArgs),
    /// Fused ratio of the coarse tiling over a ladder of tile sizes.
    RatioSweep(SweepArgs),
    /// Build, validate and dump the fused schedule as JSON.
    Schedule(ScheduleArgs),
    /// Check every variant against the dense oracle on a seeded battery.
    Verify(VerifyArgs),
}

/// A generated matrix: `banded:n:w`, `random:n:density[:seed]`,
/// `identity:n`, `dense:n` or `arrow:n:w`.
#[derive(Clone, Debug, PartialEq)]
pub enum GenSpec {
    Banded { n: usize, w: usize },
    Random { n: usize, density: f64, seed: u64 },
    Identity { n: usize },
    Dense { n: usize },
    Arrow { n: usize, w: usize },
}

impl FromStr for GenSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let int = |k: usize| -> std::result::Result<usize, String> {
            parts
                .get(k)
                .ok_or_else(|| format!("`{s}`: missing parameter {k}"))?
                .parse()
                .map_err(|e| format!("`{s}`: parameter {k}: {e}"))
        };
        let arity = |lo: usize, hi: usize| {
            if parts.len() < lo || parts.len() > hi {
                Err(format!("`{s}`: wrong number of parameters"))
            } else {
                Ok(())
            }
        };
        match parts[0] {
            "banded" => arity(3, 3).and(Ok(GenSpec::Banded { n: int(1)?, w: int(2)? })),
            "arrow" => arity(3, 3).and(Ok(GenSpec::Arrow { n: int(1)?, w: int(2)? })),
            "identity" => arity(2, 2).and(Ok(GenSpec::Identity { n: int(1)? })),
            "dense" => arity(2, 2).and(Ok(GenSpec::Dense { n: int(1)? })),
            "random" => {
                arity(3, 4)?;
                let density: f64 = parts[2].parse().map_err(|e| format!("`{s}`: density: {e}"))?;
                if !(0.0..=1.0).contains(&density) {
                    return Err(format!("`{s}`: density must lie in [0, 1]"));
                }
                let seed = if parts.len() == 4 { int(3)? as u64 } else { 0 };
                Ok(GenSpec::Random { n: int(1)?, density, seed })
            }
            other => Err(format!(
                "unknown generator `{other}` (expected banded, random, identity, dense or arrow)"
            )),
        }
    }
}

impl GenSpec {
    pub fn build<T: Scalar>(&self) -> SparseMatrixCsr<T> {
        match *self {
            GenSpec::Banded { n, w } => gen_banded(n, w),
            GenSpec::Random { n, density, seed } => gen_random_sparse(n, density, seed),
            GenSpec::Identity { n } => SparseMatrixCsr::identity(n),
            GenSpec::Dense { n } => gen_banded(n, n.saturating_sub(1)),
            GenSpec::Arrow { n, w } => gen_arrow(n, w),
        }
    }

    pub fn name(&self) -> String {
        match *self {
            GenSpec::Banded { n, w } => format!("banded_{n}_{w}"),
            GenSpec::Random { n, density, seed } => format!("random_{n}_{density}_{seed}"),
            GenSpec::Identity { n } => format!("identity_{n}"),
            GenSpec::Dense { n } => format!("dense_{n}"),
            GenSpec::Arrow { n, w } => format!("arrow_{n}_{w}"),
        }
    }
}

#[derive(Clone, Debug)]
pub enum MatrixSource {
    File(PathBuf),
    Gen(GenSpec),
}

impl MatrixSource {
    pub fn load<T: Scalar>(&self) -> Result<SparseMatrixCsr<T>> {
        match self {
            MatrixSource::File(p) => load_matrix_market(p).with_context(|| format!("loading {}", p.display())),
            MatrixSource::Gen(g) => Ok(g.build()),
        }
    }

    pub fn name(&self) -> String {
        match self {
            MatrixSource::File(p) => p
                .file_stem()
                .map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned()),
            MatrixSource::Gen(g) => g.name(),
        }
    }
}

#[derive(Clone, Debug, Args)]
pub struct MatrixArgs {
    /// Matrix Market file holding A.
    #[arg(long, conflicts_with = "gen", required_unless_present = "gen")]
    pub matrix: Option<PathBuf>,
    /// Generated A, e.g. `banded:100000:64` or `random:5000:0.01:7`.
    #[arg(long)]
    pub gen: Option<GenSpec>,
}

impl MatrixArgs {
    pub fn source(&self) -> MatrixSource {
        match (&self.matrix, &self.gen) {
            (Some(p), _) => MatrixSource::File(p.clone()),
            (None, Some(g)) => MatrixSource::Gen(g.clone()),
            (None, None) => unreachable!("clap requires --matrix or --gen"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OpArg {
    GemmSpmm,
    SpmmSpmm,
}

impl From<OpArg> for Op {
    fn from(o: OpArg) -> Op {
        match o {
            OpArg::GemmSpmm => Op::GemmSpmm,
            OpArg::SpmmSpmm => Op::SpmmSpmm,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PrecisionArg {
    Sp,
    Dp,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Precision {
        match p {
            PrecisionArg::Sp => Precision::Single,
            PrecisionArg::Dp => Precision::Double,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BindArg {
    None,
    Close,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Problem shape, precision and parallelism shared by several commands.
#[derive(Clone, Debug, Args)]
pub struct ProblemArgs {
    #[command(flatten)]
    pub matrix: MatrixArgs,
    #[arg(long, value_enum, default_value = "gemm-spmm")]
    pub op: OpArg,
    /// Columns of B (GeMM-SpMM only; for SpMM-SpMM B is A itself).
    #[arg(long, default_value_t = 32)]
    pub bcol: usize,
    #[arg(long, default_value_t = 32)]
    pub ccol: usize,
    #[arg(long, value_enum, default_value = "dp")]
    pub precision: PrecisionArg,
    /// Worker count; defaults to the number of available CPUs.
    #[arg(long, env = "TILEFUSE_THREADS")]
    pub threads: Option<usize>,
    /// Coarse tile size of the scheduler.
    #[arg(long, default_value_t = 2048)]
    pub ctsize: usize,
    /// Per-core cache budget in KiB; detected from the system when omitted.
    #[arg(long)]
    pub cache_kb: Option<usize>,
    /// Seed for the dense operands.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

impl ProblemArgs {
    fn threads(&self) -> Result<usize> {
        let p = self.threads.unwrap_or_else(available_cpus);
        ensure!(p >= 1, "--threads must be at least 1");
        Ok(p)
    }

    fn scheduler_config<T: Scalar>(&self, p: usize, b_col: usize) -> SchedulerConfig {
        let kb = self.cache_kb.or_else(detect_cache_kb).unwrap_or(DEFAULT_CACHE_KB);
        SchedulerConfig {
            ct_size: self.ctsize,
            p,
            cache_size: bench::cache_words::<T>(kb),
            b_col,
            c_col: self.ccol,
            ..SchedulerConfig::default()
        }
    }
}

/// Operands owned for the lifetime of a command.
pub struct Operands<T> {
    pub a: SparseMatrixCsr<T>,
    pub b: Option<DenseMatrix<T>>,
    pub c: DenseMatrix<T>,
}

impl<T: Scalar> Operands<T> {
    /// Dense operands are seeded; for SpMM-SpMM `B` is `A`.
    pub fn new(a: SparseMatrixCsr<T>, op: Op, bcol: usize, ccol: usize, seed: u64) -> Result<Self> {
        let n = a.ensure_square().context("A must be square")?;
        ensure!(ccol >= 1, "--ccol must be at least 1");
        Ok(match op {
            Op::GemmSpmm => {
                ensure!(bcol >= 1, "--bcol must be at least 1");
                let b = DenseMatrix::random(n, bcol, seed);
                let c = DenseMatrix::random(bcol, ccol, seed.wrapping_add(1));
                Operands { a, b: Some(b), c }
            }
            Op::SpmmSpmm => {
                let c = DenseMatrix::random(n, ccol, seed.wrapping_add(1));
                Operands { a, b: None, c }
            }
        })
    }

    pub fn problem(&self) -> Result<FusedProblem<'_, T>> {
        Ok(match &self.b {
            Some(b) => FusedProblem::gemm_spmm(&self.a, b, &self.c)?,
            None => FusedProblem::spmm_spmm(&self.a, &self.a, &self.c)?,
        })
    }
}

fn parse_tile_size(s: &str) -> std::result::Result<usize, String> {
    match s.trim().parse::<usize>() {
        Ok(0) => Err("tile sizes must be positive".into()),
        Ok(t) => Ok(t),
        Err(e) => Err(format!("`{s}`: {e}")),
    }
}

#[derive(Clone, Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Comma-separated subset of fused, unfused, atomic, overlapped.
    #[arg(long, value_parser = Variant::from_str, value_delimiter = ',', default_value = "fused,unfused,atomic,overlapped")]
    pub variants: Vec<Variant>,
    /// Timed runs per variant (after one warmup run).
    #[arg(long, default_value_t = 7)]
    pub runs: usize,
    #[arg(long, value_enum, default_value = "close")]
    pub bind: BindArg,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Args)]
pub struct SweepArgs {
    /// Matrix Market files (repeatable).
    #[arg(long)]
    pub matrix: Vec<PathBuf>,
    /// Generated matrices (repeatable).
    #[arg(long)]
    pub gen: Vec<GenSpec>,
    /// Comma-separated tile sizes.
    #[arg(long, value_parser = parse_tile_size, value_delimiter = ',', default_value = "64,128,256,512,1024,2048,4096,8192")]
    pub ladder: Vec<usize>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Args)]
pub struct ScheduleArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Number of random matrices in the battery (structured ones are added).
    #[arg(long, default_value_t = 12)]
    pub count: usize,
    #[arg(long, env = "TILEFUSE_THREADS")]
    pub threads: Option<usize>,
    /// Corrupt one entry of every fused result (test hook).
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn emit<R: serde::Serialize>(rows: &[R], format: Format, out: Option<&Path>) -> Result<()> {
    let mut w = open_output(out)?;
    match format {
        Format::Csv => write_csv(rows, &mut w)?,
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, rows)?;
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => match args.problem.precision.into() {
            Precision::Single => cmd_run::<f32>(&args),
            Precision::Double => cmd_run::<f64>(&args),
        },
        Command::RatioSweep(args) => cmd_ratio_sweep(&args),
        Command::Schedule(args) => match args.problem.precision.into() {
            Precision::Single => cmd_schedule::<f32>(&args),
            Precision::Double => cmd_schedule::<f64>(&args),
        },
        Command::Verify(args) => cmd_verify(&args),
    }
}

fn cmd_run<T: Scalar>(args: &RunArgs) -> Result<()> {
    let pa = &args.problem;
    let source = pa.matrix.source();
    let ops = Operands::<T>::new(source.load()?, pa.op.into(), pa.bcol, pa.ccol, pa.seed)?;
    let problem = ops.problem()?;
    let p = pa.threads()?;
    let binding = match args.bind {
        BindArg::None => Binding::None,
        BindArg::Close => Binding::Close,
    };
    let pool = WorkerPool::with_binding(p, binding)?;
    let mut cfg = BenchConfig::new(source.name(), pa.scheduler_config::<T>(p, problem.b_col()));
    cfg.variants = args.variants.clone();
    cfg.runs = args.runs;
    let rows = run_benchmark(&problem, &pool, &cfg)?;
    emit(&rows, args.format, args.out.as_deref())
}

fn cmd_ratio_sweep(args: &SweepArgs) -> Result<()> {
    let sources: Vec<MatrixSource> = args
        .matrix
        .iter()
        .cloned()
        .map(MatrixSource::File)
        .chain(args.gen.iter().cloned().map(MatrixSource::Gen))
        .collect();
    ensure!(!sources.is_empty(), "give at least one --matrix or --gen");
    let mut rows: Vec<SweepPoint> = Vec::new();
    let mut violations = Vec::new();
    for src in &sources {
        // Only the pattern matters, so single precision keeps memory low.
        let a = src.load::<f32>()?;
        let pts = fused_ratio_sweep(&src.name(), &a, &args.ladder)?;
        violations.extend(monotonicity_violations(&pts).into_iter().map(|v| (src.name(), v)));
        rows.extend(pts);
    }
    for &t in &args.ladder {
        let ratios: Vec<f64> = rows.iter().filter(|r| r.tile_size == t).map(|r| r.fused_ratio).collect();
        rows.push(SweepPoint {
            matrix: "mean".into(),
            tile_size: t,
            fused_ratio: ratios.iter().sum::<f64>() / ratios.len() as f64,
        });
    }
    emit(&rows, args.format, args.out.as_deref())?;
    if !violations.is_empty() {
        let list: Vec<String> = violations
            .iter()
            .map(|(m, (t, t2))| format!("{m}: ratio drops from t={t} to t={t2}"))
            .collect();
        bail!("fused ratio not monotone under aligned doubling:\n  {}", list.join("\n  "));
    }
    Ok(())
}

fn cmd_schedule<T: Scalar>(args: &ScheduleArgs) -> Result<()> {
    let pa = &args.problem;
    let ops = Operands::<T>::new(pa.matrix.source().load()?, pa.op.into(), pa.bcol, pa.ccol, pa.seed)?;
    let problem = ops.problem()?;
    let cfg = pa.scheduler_config::<T>(pa.threads()?, problem.b_col());
    let shape = problem.b.shape();
    let schedule = build_schedule_with(&ops.a, shape, &cfg)?;
    let report = validate_schedule_with(&schedule, &ops.a, shape, &cfg);
    let dump = ScheduleDump::new(&schedule, &ops.a, shape, &cfg);
    let mut w = open_output(args.out.as_deref())?;
    writeln!(w, "{}", dump.to_json()?)?;
    w.flush()?;
    if !report.pass() {
        bail!("schedule failed validation: {:?}", report.violations);
    }
    Ok(())
}

/// One line of the verification table.
#[derive(Debug)]
pub struct VerifyRow {
    pub matrix: String,
    pub op: Op,
    pub precision: Precision,
    pub bcol: usize,
    pub ccol: usize,
    pub variant: Variant,
    pub rel_error: f64,
    pub pass: bool,
}

/// Seeded list of matrices checked by `verify`.
pub fn verify_battery(seed: u64, count: usize) -> Vec<GenSpec> {
    let mut specs: Vec<GenSpec> = (0..count as u64)
        .map(|k| {
            let s = seed.wrapping_mul(1_000_003).wrapping_add(k);
            GenSpec::Random {
                n: 2 + (s.wrapping_mul(2_654_435_761) % 299) as usize,
                density: 0.005 + (s.wrapping_mul(40_503) % 1000) as f64 / 1000.0 * 0.295,
                seed: s,
            }
        })
        .collect();
    specs.extend([
        GenSpec::Identity { n: 37 },
        GenSpec::Dense { n: 24 },
        GenSpec::Banded { n: 150, w: 3 },
        GenSpec::Arrow { n: 120, w: 2 },
    ]);
    specs
}

fn cmd_verify(args: &VerifyArgs) -> Result<()> {
    let p = args.threads.unwrap_or_else(available_cpus).max(1);
    let pool = WorkerPool::new(p)?;
    let mut rows = Vec::new();
    for spec in verify_battery(args.seed, args.count) {
        for op in [Op::GemmSpmm, Op::SpmmSpmm] {
            for (bcol, ccol) in [(1, 1), (4, 32), (32, 4)] {
                rows.extend(verify_case::<f64>(&spec, op, bcol, ccol, args, &pool)?);
                rows.extend(verify_case::<f32>(&spec, op, bcol, ccol, args, &pool)?);
            }
        }
    }
    let mut out = io::stdout().lock();
    writeln!(
        out,
        "{:<28} {:<10} {:<4} {:>4} {:>4} {:<11} {:>12} result",
        "matrix", "op", "prec", "bcol", "ccol", "variant", "rel_error"
    )?;
    for r in &rows {
        writeln!(
            out,
            "{:<28} {:<10} {:<4} {:>4} {:>4} {:<11} {:>12.3e} {}",
            r.matrix,
            r.op.to_string(),
            r.precision.to_string(),
            r.bcol,
            r.ccol,
            r.variant.to_string(),
            r.rel_error,
            if r.pass { "pass" } else { "FAIL" }
        )?;
    }
    let failed = rows.iter().filter(|r| !r.pass).count();
    writeln!(out, "{} checks, {} failed", rows.len(), failed)?;
    ensure!(failed == 0, "{failed} of {} checks failed", rows.len());
    Ok(())
}

fn verify_case<T: Scalar>(
    spec: &GenSpec,
    op: Op,
    bcol: usize,
    ccol: usize,
    args: &VerifyArgs,
    pool: &WorkerPool,
) -> Result<Vec<VerifyRow>> {
    let a = spec.build::<T>();
    let n = a.n_rows();
    let sparse_b;
    let dense_b;
    let c;
    // SpMM-SpMM here uses a rectangular random sparse B so bcol is exercised.
    let problem = match op {
        Op::GemmSpmm => {
            dense_b = DenseMatrix::random(n, bcol, args.seed);
            c = DenseMatrix::random(bcol, ccol, args.seed + 1);
            FusedProblem::gemm_spmm(&a, &dense_b, &c)?
        }
        Op::SpmmSpmm => {
            sparse_b = gen_random_sparse_rect(n, bcol, 0.3, args.seed);
            c = DenseMatrix::random(bcol, ccol, args.seed + 1);
            FusedProblem::spmm_spmm(&a, &sparse_b, &c)?
        }
    };
    let oracle = dense_oracle(&problem)?;
    let tol = T::PRECISION.tolerance();
    let cfg = SchedulerConfig {
        p: pool.workers(),
        b_col: bcol,
        c_col: ccol,
        ..SchedulerConfig::default()
    };
    let parts = n.clamp(1, pool.workers());
    let schedule = build_schedule_with(&a, problem.b.shape(), &cfg)?;
    let mut results = Vec::with_capacity(4);
    for variant in Variant::ALL {
        let mut d = match variant {
            Variant::Fused => run_fused(&problem, &schedule, pool)?.d,
            Variant::Unfused => run_unfused(&problem, pool).d,
            Variant::Atomic => run_atomic(&problem, &build_atomic(&a, parts)?, pool)?.d,
            Variant::Overlapped => run_overlapped(&problem, &build_overlapped(&a, parts)?, pool)?.d,
        };
        if args.inject_fault && variant == Variant::Fused {
            if let Some(x) = d.data_mut().first_mut() {
                *x += T::ONE;
            }
        }
        let report = compare(&d, &oracle, tol)?;
        results.push(VerifyRow {
            matrix: spec.name(),
            op,
            precision: T::PRECISION,
            bcol,
            ccol,
            variant,
            rel_error: report.rel_frobenius,
            pass: report.pass,
        });
    }
    Ok(results)
}
