mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ConfigError, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "iontweezer", version, about = "Tweezer-controlled oscillating-field gates in ion crystals")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Config file, or the name of a bundled preset.
    #[arg(long, global = true, default_value = "fig2")]
    config: String,

    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Integrator tolerance, overriding the config.
    #[arg(long, global = true)]
    tol: Option<f64>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Equilibrium positions and axial normal modes.
    Modes,
    /// COM phase-space trajectory for each qubit basis state.
    Phasespace,
    /// Process fidelity and phase diagnostics at one operating point.
    Gate,
    /// Fidelity over the configured sweep grid.
    Sweep,
    /// Every pair of a four-ion chain.
    Table4,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use iontweezer::Error as E;
    if err.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<E>() {
        Some(E::InvalidParameter(_) | E::IndexOutOfRange { .. } | E::SpaceTooLarge { .. } | E::CutoffTooSmall { .. } | E::NotBracketed { .. }) => 2,
        _ => 3,
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let mut cfg = RunConfig::load(&cli.config)?;
    if let Some(tol) = cli.tol {
        cfg.numerics.tol = tol;
    }
    cfg.options().validate().map_err(|e| ConfigError(e.to_string()))?;
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(ConfigError("--jobs must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    let out = commands::Output::new(&cli.out_dir, &cfg)?;
    match cli.command {
        Command::Modes => commands::modes(&cfg, &out),
        Command::Phasespace => commands::phasespace(&cfg, &out),
        Command::Gate => commands::gate(&cfg, &out),
        Command::Sweep => commands::sweep(&cfg, &out),
        Command::Table4 => commands::table4(&cfg, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
