//! `alpha-dynamo`: command-line driver for the alpha-effect dynamo pipeline.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod exit;

use clap::{Parser, Subcommand};

use config::{Flags, RunConfig};

#[derive(Parser)]
#[command(
    name = "alpha-dynamo",
    version,
    about = "Alpha-effect dynamo instability toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the alpha matrix of a flow; writes alpha.json.
    Alpha,
    /// Select the most unstable large-scale wavevector; writes xi.json.
    FindXi,
    /// Continue the growth rate in epsilon; writes branch.csv, branch.json, mode files.
    Branch,
    /// Compare a Bloch DNS growth rate with a packaged mode; writes growth.csv, growth.json.
    ValidateDns,
    /// Nonlinear instability sweep over perturbation sizes; writes instability.json and CSVs.
    Nonlinear,
    /// Run the invariant suite.
    Check,
}

fn run(cli: &Cli) -> Result<(), exit::Failure> {
    if let Command::Check = cli.command {
        if let Some(n) = cli.flags.threads {
            alpha_dynamo::par::init_threads(n);
        }
        return commands::cmd_check();
    }
    let cfg = RunConfig::resolve(&cli.flags)?;
    if let Some(n) = cfg.threads.filter(|&n| n > 0) {
        alpha_dynamo::par::init_threads(n);
    }
    match cli.command {
        Command::Alpha => commands::cmd_alpha(&cfg),
        Command::FindXi => commands::cmd_find_xi(&cfg),
        Command::Branch => commands::cmd_branch(&cfg),
        Command::ValidateDns => commands::cmd_validate(&cfg),
        Command::Nonlinear => commands::cmd_nonlinear(&cfg),
        Command::Check => unreachable!(),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let msg = e.to_string();
            eprintln!(
                "error[config]: {}",
                msg.lines()
                    .next()
                    .unwrap_or("")
                    .trim_start_matches("error: ")
            );
            std::process::exit(2);
        }
        Err(e) => {
            let _ = e.print();
            std::process::exit(0);
        }
    };
    if let Err(f) = run(&cli) {
        eprintln!("{}", f.line());
        std::process::exit(f.code);
    }
}
