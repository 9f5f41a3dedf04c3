//! `empiric`: command-line front end for the stochastic stability laboratory.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use config::RawConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("audit failed: {0}")]
    Audit(String),

    #[error(transparent)]
    Core(#[from] empiric_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Audit(_) => 3,
            CliError::Core(_) | CliError::Io(_) => 1,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "empiric",
    version,
    about = "Empiric stochastic stability experiments on one-dimensional maps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    common: Common,
}

#[derive(Args, Clone, Debug)]
struct Common {
    /// Catalog map name, or `custom` (see `map.custom`)
    #[arg(long, global = true)]
    map: Option<String>,

    /// circle or interval
    #[arg(long, global = true)]
    topology: Option<String>,

    #[arg(long = "n-cells", global = true, value_name = "N")]
    n_cells: Option<String>,

    /// Noise radius; `evolve` accepts a comma list
    #[arg(long, global = true)]
    epsilon: Option<String>,

    /// Flat `key = value` file with dotted keys
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long = "out-dir", global = true, default_value = "out")]
    out_dir: PathBuf,

    #[arg(long, global = true)]
    seed: Option<String>,

    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Override any config key, e.g. `--set schedule.rho=0.1,0.05`
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Clone, Copy, Debug)]
enum Command {
    /// Export the noise kernel as sparse triplets with a row-sum audit
    Kernel,
    /// Noisy and zero-noise empiric probabilities with their W1 distances
    Evolve,
    /// Strong basin membership of a target measure or set
    Basin,
    /// Empiric stochastic stability verdict
    Stability,
    /// Scan for pseudo-physical measures
    Scan,
    /// Lyapunov integral against block entropy
    Pesin,
    /// Monte Carlo occupation measures against the transfer operator
    Oracle,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Kernel => "kernel",
            Command::Evolve => "evolve",
            Command::Basin => "basin",
            Command::Stability => "stability",
            Command::Scan => "scan",
            Command::Pesin => "pesin",
            Command::Oracle => "oracle",
        }
    }
}

fn resolve(common: &Common) -> Result<RawConfig, CliError> {
    let mut cfg = RawConfig::defaults();
    if let Some(path) = &common.config {
        cfg.apply_file(path)?;
    }
    for s in &common.set {
        cfg.apply_set(s)?;
    }
    cfg.apply_flag("map.name", "--map", common.map.as_deref());
    cfg.apply_flag("topology", "--topology", common.topology.as_deref());
    cfg.apply_flag("grid.n_cells", "--n-cells", common.n_cells.as_deref());
    cfg.apply_flag("noise.epsilon", "--epsilon", common.epsilon.as_deref());
    cfg.apply_flag("seed", "--seed", common.seed.as_deref());
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.common.threads {
        if t == 0 {
            return Err(CliError::Config("flag --threads: must be at least 1".into()));
        }
        pool = pool.num_threads(t);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Config(format!("flag --threads: {e}")))?;
    pool.install(|| dispatch(&cli))
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve(&cli.common)?;
    let name = cli.command.name();
    let out = output::Outputs::new(cli.common.out_dir.clone(), name, cfg.echo())?;
    match cli.command {
        Command::Kernel => commands::kernel(&cfg, out),
        Command::Evolve => commands::evolve(&cfg, out),
        Command::Basin => commands::basin(&cfg, out),
        Command::Stability => commands::stability(&cfg, out),
        Command::Scan => commands::scan(&cfg, out),
        Command::Pesin => commands::pesin(&cfg, out),
        Command::Oracle => commands::oracle(&cfg, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
