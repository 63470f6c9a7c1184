//! `gridwx`: batch front end over the core pipelines.
//!
//! Exit codes: 0 success, 1 validation or I/O error, 2 when every requested
//! metric came out undefined, 64 on a usage error.

mod commands;
mod data;
mod out;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "gridwx", version, about = "Icing analytics for grid assets")]
struct Cli {
    /// Worker threads; defaults to the available cores. Outputs do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

/// Inputs shared by every catalog-driven subcommand.
#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// Catalog manifest listing the data files and their hashes.
    #[arg(long)]
    pub catalog: PathBuf,
    /// `key=value` run configuration; flags below take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated leads for verification, e.g. `0,6,12`.
    #[arg(long)]
    pub lead_hours: Option<String>,
    #[arg(long)]
    pub window_hours: Option<u32>,
    #[arg(long, allow_hyphen_values = true)]
    pub utc_offset: Option<i32>,
    /// `threshold` or `hysteresis`.
    #[arg(long)]
    pub policy: Option<String>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum LabelSource {
    Sygivre,
    Windfarm,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Icing proxy over reanalysis profiles: hourly rates and windowed flags.
    Index(RunArgs),
    /// Binary icing labels from cycle counters or wind-farm production.
    Label {
        #[arg(value_enum)]
        source: LabelSource,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Score forecasts against labels and observations.
    Verify(RunArgs),
    /// Simulate dispatch policies and report relative economic value.
    Decide(RunArgs),
    /// Relative economic value across a grid of one cost parameter.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// `c_d`, `alpha` or `loss`.
        #[arg(long)]
        axis: String,
        /// `start:stop:step` or a comma list.
        #[arg(long)]
        grid: String,
    },
    /// Write a seeded synthetic scenario with its catalog.
    Synth(commands::synth::SynthArgs),
    /// Compare core routines against the reference oracles.
    Selfcheck {
        /// Also write `selfcheck.csv` here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// How a successful run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// Everything was computed but no metric had a defined value.
    UndefinedOnly,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.jobs {
        pool = pool.num_threads(n.max(1));
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| run(cli.command)) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::UndefinedOnly) => {
            eprintln!("warning: every metric was undefined");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> anyhow::Result<Status> {
    match command {
        Command::Index(run) => commands::index::run(&run),
        Command::Label { source, run } => commands::label::run(source, &run),
        Command::Verify(run) => commands::verify::run(&run),
        Command::Decide(run) => commands::decide::run(&run),
        Command::Sweep { run, axis, grid } => commands::decide::sweep(&run, &axis, &grid),
        Command::Synth(args) => commands::synth::run(&args),
        Command::Selfcheck { out, seed } => commands::selfcheck::run(out.as_deref(), seed),
    }
}
