//! Command-line front end for the cylinder Wentzell-flow simulator.
//!
//! ```text
//! wentzell run     --config run.json [--out DIR] [--seed N] [--quiet]
//! wentzell plot    trajectory.csv    [--out DIR] [--quiet]
//! wentzell sweep   --config run.json [--out DIR] [--seed N] [--quiet]
//! wentzell certify --config run.json [--out DIR] [--seed N] [--quiet] [--dump-matrix]
//! ```
//!
//! Every flag can also be supplied through the environment
//! (`WENTZELL_CONFIG`, `WENTZELL_OUT`, `WENTZELL_SEED`, `WENTZELL_QUIET`).
//! Exit codes: 0 success, 1 certificate failure, 2 bad configuration,
//! 3 simulation failure.

mod artifacts;
mod commands;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "wentzell",
    about = "Simulate heat and Schrödinger flow with dynamical Wentzell boundary \
             conditions on a cylinder with a time-dependent metric",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long, env = "WENTZELL_CONFIG")]
    config: PathBuf,
    /// Output directory (defaults to the configuration's `output`, then a
    /// command-specific directory).
    #[arg(long, env = "WENTZELL_OUT")]
    out: Option<PathBuf>,
    /// Overrides the configuration's random seed.
    #[arg(long, env = "WENTZELL_SEED")]
    seed: Option<u64>,
    /// Suppresses per-check console output.
    #[arg(long, env = "WENTZELL_QUIET")]
    quiet: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one configuration; writes trajectory.csv, final_state.json,
    /// and report.json.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Render norm-versus-time figures from a trajectory CSV.
    Plot {
        /// Trajectory CSV produced by `run` or `sweep`.
        csv: PathBuf,
        /// Output directory (defaults to the CSV's directory).
        #[arg(long, env = "WENTZELL_OUT")]
        out: Option<PathBuf>,
        #[arg(long, env = "WENTZELL_QUIET")]
        quiet: bool,
    },
    /// Run every point of the configuration's sweep section concurrently
    /// and aggregate certificates and convergence orders.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Check the structural operator certificates (symmetry, dissipativity,
    /// resolvent bounds, …) without time stepping.
    Certify {
        #[command(flatten)]
        common: Common,
        /// Also dump the t = 0 stiffness matrix in coordinate text format.
        #[arg(long)]
        dump_matrix: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.cmd {
        Cmd::Run { common } => {
            commands::cmd_run(&common.config, common.out, common.seed, common.quiet)
        }
        Cmd::Plot { csv, out, quiet } => commands::cmd_plot(&csv, out, quiet),
        Cmd::Sweep { common } => {
            commands::cmd_sweep(&common.config, common.out, common.seed, common.quiet)
        }
        Cmd::Certify { common, dump_matrix } => commands::cmd_certify(
            &common.config,
            common.out,
            common.seed,
            common.quiet,
            dump_matrix,
        ),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
