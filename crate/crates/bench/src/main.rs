use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use jagged_bench::{
    format_checksum, render_cost, render_report, run_bench, run_op_sweep, run_sweep, BenchConfig, BenchError,
    OutputFormat, Precision,
};
use jagged_core::costmodel::{cost_report, OpConfig};
use jagged_core::lengths::gen_lengths;
use jagged_core::verify::run_checks;
use jagged_core::{Blocks, LengthDistribution, LengthKind, OpId};

const CORRECTNESS_FAILURE: u8 = 1;
const BAD_ARGUMENTS: u8 = 2;

#[derive(Parser)]
#[command(name = "jagged", version, about = "Benchmarks, cost model and correctness checks for jagged tensor operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Time operators against their padded baselines.
    Bench {
        #[command(subcommand)]
        mode: BenchMode,
    },
    /// Run the oracle and gradient-check suites.
    Check {
        /// Operator id, or `all`.
        #[arg(long, default_value = "all")]
        op: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print every outcome, not only failures.
        #[arg(long)]
        verbose: bool,
    },
    /// Print analytic FLOP and byte counts without timing anything.
    Cost {
        #[command(flatten)]
        shape: Shape,
        /// Comma-separated max_len values; overrides --max-len.
        #[arg(long, value_delimiter = ',')]
        grid: Vec<usize>,
        #[arg(long, default_value = "csv")]
        format: OutputFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum BenchMode {
    /// One operator at one max_len (or each point of --grid).
    Op {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',')]
        grid: Vec<usize>,
    },
    /// Operator families over a max_len grid.
    Sweep {
        /// `attention` for all four attention variants, or operator ids.
        #[arg(long, value_delimiter = ',', default_value = "attention")]
        ops: Vec<String>,
        #[arg(long, value_delimiter = ',', default_values_t = jagged_bench::DEFAULT_GRID)]
        grid: Vec<usize>,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Args)]
struct Shape {
    #[arg(long, default_value = "jagged_dense_bmm")]
    op: OpId,
    #[arg(long, default_value_t = 256)]
    batch: usize,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 64)]
    t: usize,
    #[arg(long, default_value_t = 512)]
    max_len: usize,
    #[arg(long, default_value = "half-mean")]
    dist: LengthKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    block_q: usize,
    #[arg(long, default_value_t = 64)]
    block_k: usize,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    shape: Shape,
    #[arg(long, default_value = "f32")]
    precision: Precision,
    #[arg(long, default_value_t = 20)]
    iters: usize,
    #[arg(long, default_value_t = 3)]
    warmup: usize,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value = "csv")]
    format: OutputFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self, grid: Vec<usize>) -> BenchConfig {
        let s = &self.shape;
        BenchConfig {
            op: s.op,
            batch: s.batch,
            dim: s.dim,
            t: s.t,
            max_len: s.max_len,
            grid,
            dist: s.dist,
            seed: s.seed,
            precision: self.precision,
            iters: self.iters,
            warmup: self.warmup,
            threads: self.threads,
            blocks: Blocks { q: s.block_q, k: s.block_k },
            format: self.format,
            out: self.out.clone(),
        }
    }
}

enum Failure {
    Correctness(String),
    Usage(String),
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        if e.is_correctness() {
            Self::Correctness(e.to_string())
        } else {
            Self::Usage(e.to_string())
        }
    }
}

impl From<jagged_core::JaggedError> for Failure {
    fn from(e: jagged_core::JaggedError) -> Self {
        Self::Usage(e.to_string())
    }
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn bench(mode: BenchMode) -> Result<(), Failure> {
    let (cfg, records) = match mode {
        BenchMode::Op { run, grid } => {
            let cfg = run.config(grid);
            let records = if cfg.grid.is_empty() { run_bench(&cfg)? } else { run_op_sweep(&cfg)? };
            (cfg, records)
        }
        BenchMode::Sweep { ops, grid, run } => {
            let base = run.config(grid);
            let mut records = Vec::new();
            for name in &ops {
                if name == "attention" {
                    records.extend(run_sweep(&base)?);
                } else {
                    let op: OpId = name.parse()?;
                    records.extend(run_op_sweep(&BenchConfig { op, ..base.clone() })?);
                }
            }
            (base, records)
        }
    };
    for r in &records {
        eprintln!("checksum {}/{} max_len={} {}", r.op, r.variant, r.max_len, format_checksum(r.checksum));
    }
    emit(&render_report(&records, cfg.format)?, cfg.out.as_ref())
}

fn check(op: &str, seed: u64, verbose: bool) -> Result<(), Failure> {
    let op = match op {
        "all" => None,
        id => Some(id.parse::<OpId>()?),
    };
    let outcomes = run_checks(op, seed)?;
    let failed: Vec<_> = outcomes.iter().filter(|o| !o.pass).collect();
    for o in &outcomes {
        if verbose || !o.pass {
            let status = if o.pass { "PASS" } else { "FAIL" };
            println!("{status} {} metric={:.3e} threshold={:.1e}", o.name, o.metric, o.threshold);
        }
    }
    println!("{}/{} checks passed", outcomes.len() - failed.len(), outcomes.len());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Correctness(format!("{} checks failed", failed.len())))
    }
}

fn cost(shape: Shape, grid: Vec<usize>, format: OutputFormat, out: Option<PathBuf>) -> Result<(), Failure> {
    let grid = if grid.is_empty() { vec![shape.max_len] } else { grid };
    let dist = LengthDistribution::new(shape.dist, shape.max_len, shape.seed);
    let reports = grid
        .iter()
        .map(|&max_len| {
            let lengths = gen_lengths(&dist.with_max_len(max_len), shape.batch);
            let cfg = OpConfig::new(shape.op, shape.dim, shape.t, lengths)
                .with_padded_len(max_len)
                .with_blocks(shape.block_q, shape.block_k);
            cost_report(&cfg)
        })
        .collect::<Result<Vec<_>, _>>()?;
    emit(&render_cost(&reports, format)?, out.as_ref())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bench { mode } => bench(mode),
        Command::Check { op, seed, verbose } => check(&op, seed, verbose),
        Command::Cost { shape, grid, format, out } => cost(shape, grid, format, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Correctness(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(CORRECTNESS_FAILURE)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(BAD_ARGUMENTS)
        }
    }
}
