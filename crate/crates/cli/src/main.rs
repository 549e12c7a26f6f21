use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use frag_avalanche::ClipPolicy;
use frag_avalanche_cli::{execute, exit, Command, Overrides, RunConfig};

#[derive(Parser)]
#[command(
    name = "frag-avalanche",
    version,
    about = "Avalanche fragmentation-branching simulator and verifier"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Rupture factor.
    #[arg(long, global = true)]
    r: Option<f64>,
    /// Starting size(s), comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    x0: Option<Vec<f64>>,
    #[arg(long, global = true)]
    t_end: Option<f64>,
    #[arg(long, global = true)]
    replicas: Option<usize>,
    /// Master seed (falls back to FRAG_AVALANCHE_SEED, then 0).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of thresholds.
    #[arg(long, global = true)]
    depth: Option<usize>,
    /// `edge` or `conditioned`.
    #[arg(long, global = true)]
    clip_policy: Option<ClipPolicy>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Validate the model and print derived constants and bands.
    Params,
    /// Write the reachable state space.
    Support,
    /// Write the transition function, generator, resolvent and cumulant solution.
    Semigroup,
    SimulateChain,
    SimulateSde,
    SimulateBranching,
    SimulateSizes,
    /// Run the acceptance suite.
    Verify,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Params => Command::Params,
            Sub::Support => Command::Support,
            Sub::Semigroup => Command::Semigroup,
            Sub::SimulateChain => Command::SimulateChain,
            Sub::SimulateSde => Command::SimulateSde,
            Sub::SimulateBranching => Command::SimulateBranching,
            Sub::SimulateSizes => Command::SimulateSizes,
            Sub::Verify => Command::Verify,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                exit::INVALID
            } else {
                exit::SUCCESS
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let mut cfg = match &cli.config {
        Some(path) => match RunConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(exit::INVALID as u8);
            }
        },
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        r: cli.r,
        x0: cli.x0.clone(),
        t_end: cli.t_end,
        replicas: cli.replicas,
        seed: cli.seed,
        depth: cli.depth,
        clip_policy: cli.clip_policy,
        out: cli.out.clone(),
        workers: cli.workers,
    });

    let started = std::time::Instant::now();
    match execute(cli.command.into(), &cfg) {
        Ok(outcome) => {
            print!("{}", outcome.stdout);
            eprintln!("wall time {:.3} s", started.elapsed().as_secs_f64());
            let code = if outcome.acceptance_failed {
                exit::ACCEPTANCE_FAILURE
            } else {
                exit::SUCCESS
            };
            ExitCode::from(code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit::INVALID as u8)
        }
    }
}
