//! `dsgame` — synthesize and verify candidate equilibria of a two-player
//! linear-quadratic stochastic differential game with two independent noises
//! and partial observation.
//!
//! Exit codes: 0 = command ran and its check passed, 1 = a verification
//! check failed, 2 = usage or input error, 3 = numerical breakdown.

mod commands;
mod parallel;
mod specfile;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};

use commands::{CmdResult, Ctx, Failure, RawArgs};

#[derive(Parser)]
#[command(
    name = "dsgame",
    version,
    about = "Equilibrium synthesis and exact verification for a two-noise \
             linear-quadratic stochastic differential game"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Problem description file (`key = value` lines)
    #[arg(long, value_name = "PATH")]
    spec: Option<PathBuf>,

    /// Number of time steps; repeat the flag for multi-grid studies
    #[arg(long, value_name = "N", action = ArgAction::Append)]
    depth: Vec<usize>,

    /// Monte Carlo path count [default: 10000]
    #[arg(long, value_name = "COUNT")]
    paths: Option<usize>,

    /// Seed for the counter-based noise streams [default: 42]
    #[arg(long, value_name = "INT")]
    seed: Option<u64>,

    /// Check tolerance; defaults depend on the command (5e-3 for the
    /// equilibrium and saddle checks, ten step sizes for the
    /// discretization-limited ones)
    #[arg(long, value_name = "REAL")]
    tol: Option<f64>,

    /// Directory for data files and the run manifest
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,

    /// Worker threads; results are byte-identical for any value
    #[arg(long, value_name = "INT", default_value_t = 1)]
    threads: usize,

    /// Policy table CSV replacing the synthesized candidate
    /// (oracle, verify-nash, verify-saddle, gateaux)
    #[arg(long, value_name = "PATH")]
    policy: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a problem file and check its constraints
    Validate(Common),
    /// Synthesize the candidate equilibrium: Riccati decoupling + policy
    Solve(Common),
    /// Monte Carlo simulation of the filtered states under the candidate
    Simulate(Common),
    /// Evaluate a policy exactly in the discretized game on the noise tree
    Oracle(Common),
    /// Check that no unilateral deviation beats the candidate
    VerifyNash(Common),
    /// Check the saddle inequalities of a zero-sum instance
    VerifySaddle(Common),
    /// Directional-derivative and pointwise stationarity checks
    Gateaux(Common),
    /// Compare tree-filtered states against the filter recursion
    Consistency(Common),
    /// Grid-refinement study of the tree solution
    Converge(Common),
    /// Summarize the artifacts already in the output directory
    Report(Common),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Validate(_) => "validate",
            Command::Solve(_) => "solve",
            Command::Simulate(_) => "simulate",
            Command::Oracle(_) => "oracle",
            Command::VerifyNash(_) => "verify-nash",
            Command::VerifySaddle(_) => "verify-saddle",
            Command::Gateaux(_) => "gateaux",
            Command::Consistency(_) => "consistency",
            Command::Converge(_) => "converge",
            Command::Report(_) => "report",
        }
    }

    fn common(self) -> Common {
        match self {
            Command::Validate(c)
            | Command::Solve(c)
            | Command::Simulate(c)
            | Command::Oracle(c)
            | Command::VerifyNash(c)
            | Command::VerifySaddle(c)
            | Command::Gateaux(c)
            | Command::Consistency(c)
            | Command::Converge(c)
            | Command::Report(c) => c,
        }
    }
}

fn run(cli: Cli) -> CmdResult {
    let name = cli.command.name();
    let common = cli.command.common();
    let raw = RawArgs {
        spec: common.spec,
        depth: common.depth,
        paths: common.paths,
        seed: common.seed,
        tol: common.tol,
        out: common.out,
        threads: common.threads,
        policy: common.policy,
    };
    let default_depths: &[usize] = match name {
        "consistency" => &[4, 6, 8],
        "converge" => &[4, 6, 8, 10],
        _ => &[8],
    };
    let spec_required = name != "report";
    let ctx = Ctx::resolve(name, raw, default_depths, spec_required)?;
    match name {
        "validate" => commands::cmd_validate(&ctx),
        "solve" => commands::cmd_solve(&ctx),
        "simulate" => commands::cmd_simulate(&ctx),
        "oracle" => commands::cmd_oracle(&ctx),
        "verify-nash" => commands::cmd_verify_nash(&ctx),
        "verify-saddle" => commands::cmd_verify_saddle(&ctx),
        "gateaux" => commands::cmd_gateaux(&ctx),
        "consistency" => commands::cmd_consistency(&ctx),
        "converge" => commands::cmd_converge(&ctx),
        "report" => commands::cmd_report(&ctx),
        other => unreachable!("unknown command {other}"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical breakdown: {msg}");
            ExitCode::from(3)
        }
    }
}
