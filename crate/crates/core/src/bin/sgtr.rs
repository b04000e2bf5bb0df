use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sgtr::commands::{cmd_compare, cmd_design, cmd_ident, cmd_simulate, cmd_sweep, RunOptions};
use sgtr::config::{EpsGrid, ProjectConfig};
use sgtr::Error;

#[derive(Parser)]
#[command(name = "sgtr", version, about = "Single-gain tuning regulator design and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design, certify and estimate the stability threshold
    Design(Common),
    /// Scan eps and report per-point metrics
    Sweep(Common),
    /// Simulate the loop against the configured disturbance
    Simulate(Common),
    /// Compare against the sequential Davison design
    Compare(Common),
    /// Acquire frequency data from the plant
    Ident(Common),
}

#[derive(Args)]
struct Common {
    /// Config file, or `preset:<name>` for a bundled preset
    #[arg(long)]
    config: String,
    /// Output directory (overrides the config)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    eps: Option<f64>,
    /// Log-spaced grid `start:stop:points`
    #[arg(long = "eps-grid")]
    eps_grid: Option<String>,
    /// Use transfer evaluation instead of probing
    #[arg(long = "from-model")]
    from_model: bool,
}

type Handler = fn(&ProjectConfig, &RunOptions) -> sgtr::Result<String>;

fn run(cli: Cli) -> Result<String, Error> {
    let (common, cmd): (&Common, Handler) = match &cli.command {
        Command::Design(c) => (c, cmd_design),
        Command::Sweep(c) => (c, cmd_sweep),
        Command::Simulate(c) => (c, cmd_simulate),
        Command::Compare(c) => (c, cmd_compare),
        Command::Ident(c) => (c, cmd_ident),
    };
    let cfg = ProjectConfig::load_spec(&common.config)?;
    if let Some(eps) = common.eps {
        if eps <= 0.0 || !eps.is_finite() {
            return Err(Error::Config(format!("--eps must be positive, got {eps}")));
        }
    }
    let opts = RunOptions {
        out: common.out.clone(),
        eps: common.eps,
        eps_grid: common.eps_grid.as_deref().map(EpsGrid::parse).transpose()?,
        from_model: common.from_model,
    };
    cmd(&cfg, &opts)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
