//! `satlab`: batch front-end for saturation constants, the 1D quantity
//! `ρ_p` and the p-adaptive FEM demo.

mod afem;
mod constants;
mod crosscheck;
mod output;
mod presets;
mod rho1d;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "satlab", version, about)]
struct Cli {
    /// Treat empirical tripwires as failures.
    #[arg(long, global = true)]
    strict: bool,
    /// Worker threads (all cores when absent).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Saturation constants on the reference triangle.
    Constants(constants::ConstantsArgs),
    /// The 1D saturation quantity ρ²_p.
    Rho1d(rho1d::Rho1dArgs),
    /// p-adaptive loop with equilibrated-flux estimators.
    Afem(afem::AfemArgs),
    /// Raviart–Thomas minimal fluxes against overkill dual norms.
    Crosscheck(crosscheck::CrosscheckArgs),
}

/// Exit status when some asserted check fails.
const CHECK_FAILED: u8 = 1;
/// Exit status on invalid input or a numerical error.
const RUN_ERROR: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(RUN_ERROR);
        }
    }
    let result = match &cli.command {
        Command::Constants(a) => constants::run(a),
        Command::Rho1d(a) => rho1d::run(a),
        Command::Afem(a) => afem::run(a),
        Command::Crosscheck(a) => crosscheck::run(a),
    };
    match result {
        Ok(checks) => {
            eprintln!(
                "{} checks passed, {} failed, {} tripwires",
                checks.passed,
                checks.failed.len(),
                checks.tripped.len()
            );
            if checks.success(cli.strict) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(CHECK_FAILED)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(RUN_ERROR)
        }
    }
}
