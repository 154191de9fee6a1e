use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use extruder_cli::{commands, CliError};
use extruder_core::config::RunConfig;

/// Screw-extruder melt interface simulations.
#[derive(Parser)]
#[command(name = "extruder", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; every key has a default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: `output_dir` from the config, else `out/<command>`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override a configuration key, e.g. `--override b=0.01`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VAL", global = true)]
    overrides: Vec<String>,
    /// Exit with status 4 when an invariant check fails.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Equilibrium profile, inlet heat input and barrel temperature bounds.
    Steady,
    /// Kernel constants and tabulated gain functions.
    Gains,
    /// One closed-loop simulation.
    Run,
    /// Runs over the configured screw speeds and gains.
    Sweep,
    /// Backstepping against the PI baseline on the same physics.
    ComparePi,
    /// Recompute the invariant report and decay fits of a run directory.
    Analyze {
        /// Directory written by `run`.
        run_dir: PathBuf,
    },
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    let text = match &common.config {
        Some(p) => std::fs::read_to_string(p).map_err(|source| CliError::Io { path: p.clone(), source })?,
        None => String::new(),
    };
    Ok(RunConfig::from_toml_str(&text, &common.overrides)?)
}

fn out_dir(common: &Common, cfg: &RunConfig, default: &str) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| Path::new("out").join(default))
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let c = &cli.common;
    if let Command::Analyze { run_dir } = &cli.command {
        let out = c.out.clone().unwrap_or_else(|| run_dir.join("analysis"));
        return commands::analyze(run_dir, &out, c.strict);
    }
    let cfg = load(c)?;
    match &cli.command {
        Command::Steady => commands::steady(&cfg, &out_dir(c, &cfg, "steady")),
        Command::Gains => commands::gains(&cfg, &out_dir(c, &cfg, "gains")),
        Command::Run => commands::run(&cfg, &out_dir(c, &cfg, "run"), c.strict),
        Command::Sweep => commands::sweep_runs(&cfg, &out_dir(c, &cfg, "sweep"), c.strict),
        Command::ComparePi => commands::compare_pi(&cfg, &out_dir(c, &cfg, "compare-pi"), c.strict),
        Command::Analyze { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
