//! `hss`: compress, solve and analyze HSS matrices from the command line.
//!
//! Every command prints a JSON report (`"schema": 1`) to stdout and, with
//! `--json`, also writes it to a file. The exit code is 0 only when every
//! check the command performs passes.

mod commands;
mod problem;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "hss", version, about = "HSS compression, ULV solves and parallel planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compress a matrix and report ranks, storage and flops.
    Compress(CompressArgs),
    /// Compress, factor, solve and refine.
    Solve(SolveArgs),
    /// Compare HSS products against products with the source.
    MatvecBench(MatvecArgs),
    /// Dominant eigenvalue by power iteration, HSS against reference.
    Power(PowerArgs),
    /// Proportional mapping of the tree onto processes.
    MapPlan(MapArgs),
    /// Leading-order communication costs.
    CommModel(CommArgs),
    /// Comb-structured matrix on a balanced tree, a comb tree and a weighted mapping.
    CombDemo(CombArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
pub enum MatrixKind {
    ToeplitzSimple,
    ToeplitzQchem,
    Synthetic,
    File,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
pub enum TreeKind {
    Binary,
    Comb,
}

#[derive(Args, Debug, Clone)]
pub struct ProblemArgs {
    #[arg(long, value_enum, default_value = "toeplitz-simple")]
    pub matrix: MatrixKind,
    /// Matrix order; taken from the file for `--matrix file`.
    #[arg(long, default_value_t = 1024)]
    pub n: usize,
    /// Dense matrix file for `--matrix file`.
    #[arg(long)]
    pub path: Option<PathBuf>,
    /// Prescribed HSS rank for `--matrix synthetic`.
    #[arg(long, default_value_t = 8)]
    pub rank: usize,
    /// Grid spacing of the quantum chemistry Toeplitz matrix.
    #[arg(long, default_value_t = 1.0)]
    pub spacing: f64,
    #[arg(long, value_enum, default_value = "binary")]
    pub tree: TreeKind,
    #[arg(long, default_value_t = 64)]
    pub leaf_size: usize,
    /// Leaf sizes of a comb tree, left to right.
    #[arg(long, value_delimiter = ',')]
    pub leaf_sizes: Option<Vec<usize>>,
}

#[derive(Args, Debug, Clone)]
pub struct SamplingArgs {
    #[arg(long, default_value_t = 1e-8)]
    pub eps: f64,
    #[arg(long, default_value_t = 32)]
    pub d0: usize,
    #[arg(long, default_value_t = 32)]
    pub delta_d: usize,
    #[arg(long, default_value_t = 10)]
    pub gap: usize,
    #[arg(long, default_value_t = 4096)]
    pub max_d: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone)]
pub struct OutputArgs {
    /// Also write the report to this file.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Include wall-clock seconds in the report.
    #[arg(long)]
    pub timings: bool,
}

#[derive(Args, Debug)]
pub struct CompressArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub sampling: SamplingArgs,
    /// Check the reconstruction against the dense matrix.
    #[arg(long)]
    pub compare_dense: bool,
    /// Save the compressed form to this file.
    #[arg(long)]
    pub save: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub sampling: SamplingArgs,
    /// Number of right-hand sides.
    #[arg(long, default_value_t = 1)]
    pub rhs: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub ir_tol: f64,
    #[arg(long, default_value_t = 10)]
    pub ir_max_iters: usize,
    /// Also solve with dense LU and compare.
    #[arg(long)]
    pub compare_dense: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct MatvecArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub sampling: SamplingArgs,
    #[arg(long, default_value_t = 1)]
    pub rhs: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct PowerArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub sampling: SamplingArgs,
    #[arg(long, default_value_t = 1e-5)]
    pub power_tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub power_max_iters: usize,
    /// Use the dense matrix for the reference run instead of the source.
    #[arg(long)]
    pub compare_dense: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct MapArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub sampling: SamplingArgs,
    #[arg(long, default_value_t = 64)]
    pub p: usize,
    /// `uniform`, `right:<fraction>` or `ranks` (compresses first).
    #[arg(long, default_value = "uniform")]
    pub weights: String,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
pub enum CommKindArg {
    DenseLu,
    Nonrandomized,
    Randomized,
}

#[derive(Args, Debug)]
pub struct CommArgs {
    #[arg(long, value_enum)]
    pub kind: CommKindArg,
    #[arg(long)]
    pub n: f64,
    #[arg(long)]
    pub p: f64,
    /// HSS rank.
    #[arg(long, default_value_t = 0.0)]
    pub r: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct CombArgs {
    #[arg(long, default_value_t = 4000)]
    pub n: usize,
    #[arg(long, default_value_t = 64)]
    pub p: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub eps: f64,
    #[arg(long, default_value_t = 128)]
    pub d0: usize,
    #[arg(long, default_value_t = 128)]
    pub delta_d: usize,
    #[arg(long, default_value_t = 10)]
    pub gap: usize,
    #[arg(long, default_value_t = 4096)]
    pub max_d: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Weights of the third row's mapping.
    #[arg(long, default_value = "right:0.75")]
    pub weights: String,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Compress(a) => commands::compress(&a),
        Command::Solve(a) => commands::solve(&a),
        Command::MatvecBench(a) => commands::matvec_bench(&a),
        Command::Power(a) => commands::power(&a),
        Command::MapPlan(a) => commands::map_plan(&a),
        Command::CommModel(a) => commands::comm_model(&a),
        Command::CombDemo(a) => commands::comb_demo(&a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
