//! Command-line surface of the Kernel K-means workspace: dataset ingestion,
//! synthetic generators, experiment orchestration and CSV output.

pub mod commands;
pub mod config;
pub mod error;
pub mod libsvm;
pub mod metrics;
pub mod synth;

use std::ffi::OsString;

use clap::{Args, Parser, Subcommand};
use kkm_core::distributed::{Algorithm, Fault};

pub use error::CliError;

use crate::config::{AlgoChoice, ConfigArgs, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "kkm", version, about = "Kernel K-means on virtual ranks with exact communication accounting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cluster once; writes assignments.csv, trace.csv and ledger.csv.
    Run(ConfigArgs),
    /// Check distributed schedules against the sequential oracle.
    Verify(VerifyArgs),
    /// Measured vs predicted words per phase; writes bench.csv.
    Bench(BenchArgs),
    /// Cost-model table; writes predict.csv.
    Predict(SweepArgs),
    /// Write the configured dataset as data.libsvm.
    Gen(ConfigArgs),
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Algorithms to check, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1d,h1d,1.5d,2d")]
    pub algos: Vec<AlgoChoice>,
    /// Rank counts to check, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,4,16")]
    pub rank_list: Vec<usize>,
    /// Negative control: drop the E reduction.
    #[arg(long, hide = true)]
    pub skip_e_reduce: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, value_delimiter = ',', default_value = "1d,h1d,1.5d,2d")]
    pub algos: Vec<AlgoChoice>,
    #[arg(long, value_delimiter = ',', default_value = "4,16")]
    pub rank_list: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, value_delimiter = ',', default_value = "1,4,16,64,256")]
    pub rank_list: Vec<usize>,
}

/// Process exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Ok = 0,
    VerifyFailed = 1,
    Error = 2,
}

fn dist_only(algos: &[AlgoChoice]) -> Result<Vec<Algorithm>, CliError> {
    algos
        .iter()
        .map(|a| match a {
            AlgoChoice::Dist(alg) => Ok(*alg),
            other => Err(CliError::Usage(format!("{other} has no communication to benchmark"))),
        })
        .collect()
}

pub fn dispatch(command: Command) -> Result<Status, CliError> {
    match command {
        Command::Run(args) => {
            let cfg = RunConfig::resolve(&args)?;
            let s = commands::cmd_run(&cfg)?;
            let ari = s.ari.map_or_else(|| "n/a".to_string(), |a| format!("{a:.4}"));
            println!(
                "{} n={} d={} P={} iterations={} objective={} words={} ari={ari} -> {}",
                cfg.algo,
                s.n,
                s.d,
                cfg.ranks,
                s.iterations,
                s.final_objective,
                s.total_words,
                cfg.out.display()
            );
            Ok(Status::Ok)
        }
        Command::Verify(args) => {
            let cfg = RunConfig::resolve(&args.config)?;
            let fault = args.skip_e_reduce.then_some(Fault::SkipEReduce);
            let report = commands::cmd_verify(&cfg, &args.algos, &args.rank_list, fault)?;
            for line in report.lines() {
                println!("{line}");
            }
            Ok(if report.passed() { Status::Ok } else { Status::VerifyFailed })
        }
        Command::Bench(args) => {
            let cfg = RunConfig::resolve(&args.config)?;
            let rows = commands::cmd_bench(&cfg, &dist_only(&args.algos)?, &args.rank_list)?;
            print!("{}", commands::bench_csv(&rows));
            Ok(Status::Ok)
        }
        Command::Predict(args) => {
            let cfg = RunConfig::resolve(&args.config)?;
            print!("{}", commands::cmd_predict(&cfg, &args.rank_list)?);
            Ok(Status::Ok)
        }
        Command::Gen(args) => {
            let cfg = RunConfig::resolve(&args)?;
            let data = commands::cmd_gen(&cfg)?;
            let (n, d) = data.points.shape();
            println!("wrote {n}x{d} points to {}", cfg.out.join("data.libsvm").display());
            Ok(Status::Ok)
        }
    }
}

/// Parses `args` (program name first) and runs the command, reporting
/// errors on stderr.
pub fn main_with<I, A>(args: I) -> Status
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { Status::Error } else { Status::Ok };
        }
    };
    match dispatch(cli.command) {
        Ok(status) => status,
        Err(e) => {
            eprintln!("kkm: {e}");
            Status::Error
        }
    }
}
