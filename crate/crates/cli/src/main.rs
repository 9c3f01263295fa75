//! `tads`: train, reduce, compile and verify ReLU classifiers.
//!
//! Exit codes: 0 success or robust, 1 not robust, 2 usage, configuration or
//! input error, 3 training diverged, 4 indeterminate, 5 robust on the
//! searched subspace only.

mod commands;
mod config;
mod data;
mod error;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::export::ExportOpts;
use commands::pca::PcaOpts;
use commands::plot::PlotOpts;
use commands::sweep::SweepOpts;
use commands::train::TrainOpts;
use commands::verify::VerifyOpts;
use commands::Ctx;
use config::{ConfigFile, Global};
use error::CliError;

#[derive(Parser)]
#[command(name = "tads", version, about = "Exact verification of ReLU classifiers through affine decision structures")]
struct Cli {
    /// TOML file: global keys at top level, one [command] table per subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// PRNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores); 1 makes every artifact bit-reproducible.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (default: runs/<command>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    Train(TrainOpts),
    Pca(PcaOpts),
    Verify(VerifyOpts),
    Export(ExportOpts),
    Plot(PlotOpts),
    Sweep(SweepOpts),
}

fn execute(cli: Cli) -> Result<u8, CliError> {
    let config = ConfigFile::load(cli.config.as_deref())?;
    let flags = Global { seed: cli.seed, threads: cli.threads, out: cli.out };
    let global = flags.overlay(config.global()?);
    if let Some(t) = global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    let ctx = Ctx { config, global };
    match cli.command {
        Command::Train(o) => commands::train::run(o.overlay(ctx.config.section("train")?), &ctx),
        Command::Pca(o) => commands::pca::run(o.overlay(ctx.config.section("pca")?), &ctx),
        Command::Verify(o) => commands::verify::run(o.overlay(ctx.config.section("verify")?), &ctx),
        Command::Export(o) => commands::export::run(o.overlay(ctx.config.section("export")?), &ctx),
        Command::Plot(o) => commands::plot::run(o.overlay(ctx.config.section("plot")?), &ctx),
        Command::Sweep(o) => commands::sweep::run(o.overlay(ctx.config.section("sweep")?), &ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
