use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fshe_cli::{commands, CliError, ExperimentConfig, Outcome, RunContext};

#[derive(Parser)]
#[command(name = "fshe", version, about = "Stochastic heat equation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment file; defaults apply when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Also write two-column `.dat` files under `<out>/plot/`.
    #[arg(long, global = true)]
    emit_plot_data: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Monte Carlo moments, written to moments.csv.
    Simulate,
    /// Lyapunov slopes across noise levels, written to phase.csv.
    ScanXi,
    /// Chaos terms and their time exponents, written to rho.csv.
    FitRho,
    /// Kernel and bound checks, written to verify.json.
    Verify,
}

fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let ctx = RunContext::new(config, cli.seed, cli.out.clone(), cli.emit_plot_data);
    match cli.command {
        Command::Simulate => commands::simulate(&ctx),
        Command::ScanXi => commands::scan_xi(&ctx),
        Command::FitRho => commands::fit_rho(&ctx),
        Command::Verify => commands::verify(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code as u8)
        }
    }
}
