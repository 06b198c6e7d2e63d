use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod output;

#[derive(Parser, Debug)]
#[command(name = "ksbm", version, about = "Kernels, interval solvers and checks for subordinate Brownian motion")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Laplace exponent evaluation and scaling fits
    #[command(subcommand)]
    Phi(commands::PhiCmd),
    #[command(subcommand, hide = true)]
    Quad(commands::QuadCmd),
    /// Tables of psi, j, u^q, h and the free Green functions
    #[command(subcommand)]
    Kernel(commands::KernelCmd),
    /// Interval solvers and their diagnostics
    #[command(subcommand)]
    Solve(commands::SolveCmd),
    /// Path simulation
    #[command(subcommand)]
    Mc(commands::McCmd),
    /// Run the check suite
    #[command(subcommand)]
    Verify(commands::VerifyCmd),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Phi(c) => commands::phi(c),
        Cmd::Quad(c) => commands::quad(c),
        Cmd::Kernel(c) => commands::kernel(c),
        Cmd::Solve(c) => commands::solve(c),
        Cmd::Mc(c) => commands::mc(c),
        Cmd::Verify(c) => commands::verify(c),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::error_code(&e))
        }
    }
}
