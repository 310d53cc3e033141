//! `ssiter`: experiment runner for the self-stabilizing iterative solver.
//!
//! Exit codes: 0 ok, 1 usage or parse error, 2 violation detected
//! (envelope or staleness), 3 numerical refusal (non-contractive or
//! singular system).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Config;

/// A command failure carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub msg: String,
}

impl Failure {
    pub fn usage(msg: impl Into<String>) -> Self {
        Failure { code: 1, msg: msg.into() }
    }

    pub fn violation(msg: impl Into<String>) -> Self {
        Failure { code: 2, msg: msg.into() }
    }

    pub fn refusal(msg: impl Into<String>) -> Self {
        Failure { code: 3, msg: msg.into() }
    }
}

impl From<String> for Failure {
    fn from(msg: String) -> Self {
        Failure::usage(msg)
    }
}

#[derive(Parser)]
#[command(name = "ssiter", version, about = "Self-stabilizing Jacobi iteration simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a weighted topology, print its norms, and emit the matrix.
    GenTopology(GenTopologyArgs),
    /// Execute one run and check the convergence envelope.
    Run(RunArgs),
    /// Average final errors over a (delta x iterations) grid.
    Heatmap(CommonArgs),
    /// Compare simulated output moments against the Gaussian output laws.
    Dist(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Flat key=value config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; all randomness derives from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Primary output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// sync | async
    #[arg(long)]
    engine: Option<String>,
    /// round-robin | random-fair
    #[arg(long)]
    policy: Option<String>,
    /// Starvation window K of random-fair (forces a node after K*n steps).
    #[arg(long)]
    fair_window: Option<usize>,
    /// Trials per heatmap cell.
    #[arg(long)]
    trials: Option<usize>,
    /// Rounds discarded before estimating output moments.
    #[arg(long)]
    burn_in: Option<usize>,
}

impl CommonArgs {
    fn resolve(&self) -> Result<Config, Failure> {
        let mut cfg = match &self.config {
            Some(path) => Config::load(path)?,
            None => Config::empty(),
        };
        if let Some(v) = self.seed {
            cfg.set("seed", v);
        }
        if let Some(v) = &self.out {
            cfg.set("out", v.display());
        }
        if let Some(v) = &self.engine {
            cfg.set("engine", v);
        }
        if let Some(v) = &self.policy {
            cfg.set("policy", v);
        }
        if let Some(v) = self.fair_window {
            cfg.set("fair_window", v);
        }
        if let Some(v) = self.trials {
            cfg.set("trials", v);
        }
        if let Some(v) = self.burn_in {
            cfg.set("burn_in", v);
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct GenTopologyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// circle | unit-disc | file
    kind: Option<String>,
    /// Node count.
    #[arg(long)]
    n: Option<usize>,
    /// Circle diagonal weight.
    #[arg(long)]
    diag: Option<f64>,
    /// Circle off-diagonal weight.
    #[arg(long, allow_hyphen_values = true)]
    off: Option<f64>,
    /// Unit-disc plane side length.
    #[arg(long)]
    side: Option<f64>,
    /// Unit-disc connection radius.
    #[arg(long)]
    radius: Option<f64>,
    /// Unit-disc dominance ratio (row sum / diagonal).
    #[arg(long)]
    ratio: Option<f64>,
    /// Matrix file to load when kind = file.
    #[arg(long)]
    matrix: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Keep and emit the full atomic-step log (async engine).
    #[arg(long)]
    log_steps: bool,
    /// Step indices to snapshot all registers and locals at (async engine).
    #[arg(long, value_delimiter = ',')]
    snapshot: Vec<usize>,
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::GenTopology(args) => {
            let mut cfg = args.common.resolve()?;
            if let Some(kind) = &args.kind {
                cfg.set("topology", kind);
            }
            if let Some(v) = args.n {
                cfg.set("n", v);
            }
            if let Some(v) = args.diag {
                cfg.set("diag", v);
            }
            if let Some(v) = args.off {
                cfg.set("off", v);
            }
            if let Some(v) = args.side {
                cfg.set("side", v);
            }
            if let Some(v) = args.radius {
                cfg.set("radius", v);
            }
            if let Some(v) = args.ratio {
                cfg.set("ratio", v);
            }
            if let Some(v) = &args.matrix {
                cfg.set("matrix", v.display());
                cfg.set("topology", "file");
            }
            // gen-topology's --seed names the construction seed
            if let Some(v) = args.common.seed {
                cfg.set("topology_seed", v);
            }
            commands::cmd_gen_topology(&cfg)
        }
        Command::Run(args) => {
            let cfg = args.common.resolve()?;
            let flags =
                commands::RunFlags { log_steps: args.log_steps, snapshot_at: args.snapshot };
            commands::cmd_run(&cfg, &flags)
        }
        Command::Heatmap(common) => commands::cmd_heatmap(&common.resolve()?),
        Command::Dist(common) => commands::cmd_dist(&common.resolve()?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
