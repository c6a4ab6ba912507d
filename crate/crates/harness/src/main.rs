use std::path::PathBuf;
use std::process::ExitCode;

use bbm_harness::{run, ExperimentConfig, Mode, RunContext, RunError};
use clap::{Args, Parser, Subcommand};

/// Branching Brownian motion experiments and verification suites.
#[derive(Parser)]
#[command(name = "bbm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate trajectories and write one snapshot file per observation time.
    Simulate(RunArgs),
    /// Run the deterministic special-function suite.
    VerifySpecfun(RunArgs),
    /// Compare forward simulation with the many-to-one quadrature.
    VerifyManyToOne(RunArgs),
    /// Tabulate the additive and Hermite martingales along trajectories.
    Martingales(RunArgs),
    /// Residuals of the half-space expansion.
    ExpansionThm1(RunArgs),
    /// Residuals of the box (local) expansion.
    ExpansionThm2(RunArgs),
    /// Monte Carlo growth of E[(W+1) log^(1+λ)(W+1)].
    MomentGrowth(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment configuration. Optional for verify-specfun.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "bbm-out")]
    out: PathBuf,
    /// Worker threads; overrides the config.
    #[arg(long)]
    workers: Option<usize>,
    /// Population cap per trajectory; overrides the config.
    #[arg(long)]
    cap: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, args) = match cli.command {
        Command::Simulate(a) => (Mode::Simulate, a),
        Command::VerifySpecfun(a) => (Mode::VerifySpecfun, a),
        Command::VerifyManyToOne(a) => (Mode::VerifyManyToOne, a),
        Command::Martingales(a) => (Mode::Martingales, a),
        Command::ExpansionThm1(a) => (Mode::ExpansionThm1, a),
        Command::ExpansionThm2(a) => (Mode::ExpansionThm2, a),
        Command::MomentGrowth(a) => (Mode::MomentGrowth, a),
    };
    let code = match execute(mode, &args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}

fn execute(mode: Mode, args: &RunArgs) -> Result<i32, RunError> {
    let config = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None if mode == Mode::VerifySpecfun => ExperimentConfig::new(mode),
        None => return Err(RunError::config("--config", "required for this mode")),
    };
    let ctx = RunContext { out_dir: args.out.clone(), workers: args.workers, cap: args.cap };
    let outcome = run(mode, &config, &ctx)?;
    for check in outcome.manifest.checks.iter().filter(|c| !c.passed) {
        eprintln!("check failed: {} = {:e} (tolerance {:e})", check.name, check.value, check.tolerance);
    }
    println!("{}", outcome.manifest_path.display());
    Ok(outcome.exit_code())
}
