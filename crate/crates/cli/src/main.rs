use std::path::{Path, PathBuf};
use std::process::ExitCode;

use blaschke_cli::pipeline::{
    cmd_all, cmd_covariance, cmd_flat_limit, cmd_length, cmd_solve, cmd_variance_mc, cmd_xray,
};
use blaschke_cli::{Report, RunConfig, Session};
use blaschke_core::Error;
use clap::{Parser, Subcommand};

const EXIT_INVARIANT: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "blaschke", version, about = "Blaschke metrics on the genus-2 octagon surface")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration; defaults apply to missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the configuration).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed for all sampling (overrides the configuration).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Progress and timings on stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Clone, Copy, Subcommand)]
enum Command {
    /// Solve Wang's equation along the t grid and check the family invariants.
    Solve,
    /// Fiber norm, mean-term table, length table and Monte-Carlo cross-check.
    Covariance,
    /// Convergence of t^{-1/3} e^u to the flat metric away from the zeros of q.
    FlatLimit,
    /// Lower bound on the length of the ray t ↦ tq and its logarithmic fit.
    Length,
    /// Monte-Carlo variances of the first eigenfunctions against the spectral formula.
    VarianceMc,
    /// X-ray transforms of potential tensors along short closed geodesics.
    Xray,
    /// Every pipeline, plus a run summary.
    All,
}

fn load_config(cli: &Cli) -> Result<RunConfig, String> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(|e| e.to_string())?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        config.out = out.clone();
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate().map_err(|e| e.to_string())?;
    Ok(config)
}

fn run(command: Command, session: &mut Session) -> Result<Vec<Report>, Error> {
    Ok(match command {
        Command::Solve => vec![cmd_solve(session)?],
        Command::Covariance => cmd_covariance(session)?,
        Command::FlatLimit => vec![cmd_flat_limit(session)?],
        Command::Length => vec![cmd_length(session)?],
        Command::VarianceMc => vec![cmd_variance_mc(session)?],
        Command::Xray => vec![cmd_xray(session)?],
        Command::All => cmd_all(session)?,
    })
}

fn write_reports(dir: &Path, reports: &[Report]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for artifact in reports.iter().flat_map(|r| &r.artifacts) {
        std::fs::write(dir.join(&artifact.name), &artifact.contents)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let out = config.out.clone();
    let result = Session::new(config, cli.verbose).and_then(|mut s| run(cli.command, &mut s));
    let reports = match result {
        Ok(r) => r,
        Err(e @ (Error::InvalidArgument(_) | Error::InsufficientRange { .. })) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_NUMERICAL);
        }
    };
    if let Err(e) = write_reports(&out, &reports) {
        eprintln!("error: cannot write to {}: {e}", out.display());
        return ExitCode::from(EXIT_NUMERICAL);
    }
    let failed: Vec<String> = reports
        .iter()
        .filter(|r| r.command != "summary")
        .flat_map(|r| r.failures().into_iter().map(move |c| format!("{}/{} (margin {:e})", r.command, c.name, c.margin)))
        .collect();
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        for f in &failed {
            eprintln!("invariant failed: {f}");
        }
        ExitCode::from(EXIT_INVARIANT)
    }
}
