mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use stablelt_core::artifacts::{write_metadata, RunMetadata};

use commands::Ctx;

/// Local times of additive stable processes: simulations, moments and
/// variational constants.
#[derive(Parser, Debug)]
#[command(name = "stablelt", version)]
struct Cli {
    /// TOML file with dotted keys, e.g. `model.alpha = 1.0`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides `seed` in the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Also write SVG plots.
    #[arg(long, global = true)]
    svg: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Simulate one sheet of p independent paths.
    Simulate,
    /// Occupation histograms and the mollified estimator.
    Localtime,
    /// Moments at exponential times by three routes.
    Moments,
    /// The variational constant rho on a grid.
    Rho,
    /// The lattice constant for a finitely supported pi.
    RhoLattice,
    /// The periodized constants rho_M along a sequence of M.
    RhoM,
    /// The constant M_psi and its relation to rho.
    Mpsi,
    /// Brute-force lattice sums S_n and their growth rate.
    Discrete,
    /// Upper-tail fit of the local time at the origin.
    Tails,
    /// Self-similarity check in time.
    Scaling,
    /// LIL running maximum (diagnostic).
    Lil,
    /// Additive local time versus intersection local time.
    Identity,
    /// Collate all verdicts in the output directory.
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Localtime => "localtime",
            Command::Moments => "moments",
            Command::Rho => "rho",
            Command::RhoLattice => "rho-lattice",
            Command::RhoM => "rho-m",
            Command::Mpsi => "mpsi",
            Command::Discrete => "discrete",
            Command::Tails => "tails",
            Command::Scaling => "scaling",
            Command::Lil => "lil",
            Command::Identity => "identity",
            Command::Report => "report",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match config::load(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    if cli.command == Command::Report {
        return match commands::report(&out) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::from(1),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        };
    }
    let workers = cli
        .workers
        .or(cfg.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        eprintln!("error: invalid `workers`: must be at least 1");
        return ExitCode::from(2);
    }
    let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    if let Err(e) = std::fs::create_dir_all(&out) {
        eprintln!("error: cannot create {}: {e}", out.display());
        return ExitCode::from(3);
    }
    let ctx = Ctx {
        seed: cli.seed.unwrap_or(cfg.seed),
        cfg,
        out: out.clone(),
        svg: cli.svg,
    };
    let start = Instant::now();
    let result = match cli.command {
        Command::Simulate => commands::simulate(&ctx),
        Command::Localtime => commands::localtime(&ctx),
        Command::Moments => commands::moments(&ctx),
        Command::Rho => commands::rho(&ctx),
        Command::RhoLattice => commands::rho_lattice(&ctx),
        Command::RhoM => commands::rho_m(&ctx),
        Command::Mpsi => commands::mpsi(&ctx),
        Command::Discrete => commands::discrete(&ctx),
        Command::Tails => commands::tails(&ctx),
        Command::Scaling => commands::scaling(&ctx),
        Command::Lil => commands::lil(&ctx),
        Command::Identity => commands::identity(&ctx),
        Command::Report => unreachable!(),
    };
    let meta = RunMetadata {
        command: cli.command.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        workers,
        unix_time: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
        elapsed_seconds: start.elapsed().as_secs_f64(),
    };
    if let Err(e) = write_metadata(&out, cli.command.name(), &meta) {
        eprintln!("warning: metadata not written: {e}");
    }
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("{}: hard gate failed", cli.command.name());
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
