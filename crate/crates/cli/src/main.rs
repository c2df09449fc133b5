//! `linboltz` command-line driver.
//!
//! Exit codes: 0 all assertions passed, 1 an assertion failed, 2 bad
//! configuration or parameters, 3 numerical failure or exhausted budget.

mod config;
mod experiments;
mod outcome;
mod presets;

use clap::{Parser, Subcommand};
use config::Config;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "linboltz", version, about = "Entropy decay experiments for the linear Boltzmann equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Overrides `seed` in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default `out/<experiment>`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List named kernels, density suites and experiments.
    ListPresets,
    /// Parse and check a config without running it.
    Validate { config: PathBuf },
}

#[derive(Debug)]
pub enum RunError {
    Config(String),
    Numerical(String),
}

impl From<linboltz::Error> for RunError {
    fn from(e: linboltz::Error) -> Self {
        use linboltz::Error as E;
        match e {
            E::InvalidParameter(_) | E::DimensionMismatch { .. } | E::NotNormalized { .. } | E::GridMismatch(_) => {
                RunError::Config(e.to_string())
            }
            _ => RunError::Numerical(e.to_string()),
        }
    }
}

impl RunError {
    fn exit(&self) -> ExitCode {
        match self {
            RunError::Config(m) => {
                eprintln!("error: {m}");
                ExitCode::from(2)
            }
            RunError::Numerical(m) => {
                eprintln!("numerical error: {m}");
                ExitCode::from(3)
            }
        }
    }
}

fn configure_threads() -> Result<(), RunError> {
    if let Ok(v) = std::env::var("LINBOLTZ_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| RunError::Config(format!("LINBOLTZ_THREADS must be a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| RunError::Numerical(e.to_string()))?;
    }
    Ok(())
}

fn load(path: &Path) -> Result<Config, RunError> {
    Config::load(path).map_err(|e| RunError::Config(e.to_string()))
}

fn real_main(cli: Cli) -> Result<ExitCode, RunError> {
    configure_threads()?;
    match cli.command {
        Command::ListPresets => {
            print!("{}", presets::catalog());
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { config } => {
            let cfg = load(&config)?;
            let seed = cfg.seed.unwrap_or(0);
            experiments::dry_run(&experiments::Context { cfg: &cfg, seed })?;
            println!("{}: ok ({})", config.display(), cfg.experiment);
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { config, seed, out } => {
            let cfg = load(&config)?;
            let seed = seed.or(cfg.seed);
            if cfg.experiment.is_stochastic() && seed.is_none() {
                return Err(RunError::Config(format!("config key `seed`: {} needs a seed (config or --seed)", cfg.experiment)));
            }
            let dir = out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out").join(cfg.experiment.name()));
            let ctx = experiments::Context { cfg: &cfg, seed: seed.unwrap_or(0) };
            let o = experiments::run(&ctx)?;
            outcome::write_all(&dir, cfg.experiment.name(), seed, &o)
                .map_err(|e| RunError::Numerical(format!("cannot write {}: {e}", dir.display())))?;
            print!("{}", outcome::report_text(cfg.experiment.name(), seed, &o));
            println!("outputs in {}", dir.display());
            Ok(if o.passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match real_main(cli) {
        Ok(code) => code,
        Err(e) => e.exit(),
    }
}
