use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fracdirac::{Error, Result};
use fracdirac_cli::{run, Experiment, RunConfig};

/// Dirac points and wave packets of fractional Schrödinger operators with
/// honeycomb potentials.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Band tables along a path, on a patch around K, or at random points.
    Bands(Common),
    /// Dirac-point data, cone fit and gap opening.
    Dirac(Common),
    /// One wave-packet evolution with snapshots.
    Evolve(Common),
    /// Convergence study of the effective-dynamics approximation.
    Validate(Common),
    /// Small-potential limit against its asymptotics.
    ShallowCheck(Common),
    /// Product-rule remainder of the fractional operator.
    ProductRule(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long, value_name = "PATH", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
    /// Built-in configuration.
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
}

impl Command {
    fn split(self) -> (Experiment, Common) {
        match self {
            Command::Bands(c) => (Experiment::Bands, c),
            Command::Dirac(c) => (Experiment::Dirac, c),
            Command::Evolve(c) => (Experiment::Evolve, c),
            Command::Validate(c) => (Experiment::Validate, c),
            Command::ShallowCheck(c) => (Experiment::ShallowCheck, c),
            Command::ProductRule(c) => (Experiment::ProductRule, c),
        }
    }
}

fn execute(command: Command) -> Result<()> {
    let (experiment, common) = command.split();
    let mut cfg = match (&common.preset, &common.config) {
        (Some(name), _) => RunConfig::preset(name)?,
        (None, Some(path)) => RunConfig::load(path)?,
        (None, None) => RunConfig::default(),
    };
    if cfg.experiment != experiment && (common.preset.is_some() || common.config.is_some()) {
        log::info!("running `{}` (configuration names `{}`)", experiment.name(), cfg.experiment.name());
    }
    cfg.experiment = experiment;
    if let Some(out) = common.out {
        cfg.output_dir = out;
    }
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(Error::config("threads", "must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::config("threads", e.to_string()))?;
    }
    let output = run(&cfg)?;
    print!("{}", output.summary);
    println!("wrote {} files to {}", output.files.len(), cfg.output_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
