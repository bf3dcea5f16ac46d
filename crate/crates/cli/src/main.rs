//! `cfmm-fees`: routing, fee-game and replay jobs from the command line.

mod commands;
mod config;
mod error;
mod format;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "cfmm-fees", version, about, args_override_self = true)]
pub struct Cli {
    /// Directory receiving result files. Without it results go to stdout.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Cap on worker threads for parallel evaluations.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// JSON job file whose keys are flag names; explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct MarketArgs {
    /// Pools as a JSON file or inline JSON array. Entries are either
    /// `{"reserve", "fee"}` (already balanced units) or raw snapshots
    /// `{"reserve_source", "reserve_target", "fee"}`.
    #[arg(long, value_name = "JSON|FILE")]
    pub pools: String,
}

#[derive(Debug, Args)]
pub struct DemandArgs {
    /// Size of a single trade in source tokens.
    #[arg(long, visible_alias = "amount", conflicts_with = "trades")]
    pub trade: Option<f64>,
    /// Trade CSV (`block,side,amount_in`) whose empirical distribution is the demand.
    #[arg(long, value_name = "CSV")]
    pub trades: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Solver {
    Ternary,
    Waterfill,
    ClosedForm,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimal split of one trade across the pools.
    Route {
        #[command(flatten)]
        market: MarketArgs,
        #[arg(long, visible_alias = "amount")]
        trade: f64,
        /// Relative solver tolerance.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, value_enum, default_value_t = Solver::Ternary)]
        solver: Solver,
    },
    /// Parameter sweeps as CSV.
    Sweep {
        /// trade_split, split_vs_fee, utility_vs_fee, two_pool_share or three_pool_share.
        #[arg(long)]
        kind: Option<String>,
        /// JSON sweep job.
        #[arg(long, value_name = "FILE")]
        spec: Option<PathBuf>,
        #[arg(long, value_name = "JSON|FILE")]
        pools: Option<String>,
        /// Number of points of the default grid.
        #[arg(long)]
        points: Option<usize>,
        #[arg(long, visible_alias = "amount")]
        trade: Option<f64>,
        /// Starting fee of the equilibrium searches.
        #[arg(long)]
        start: Option<f64>,
        /// Fee convergence tolerance of the equilibrium searches.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iters: Option<usize>,
        /// Varied pool (1-based).
        #[arg(long)]
        pool: Option<usize>,
    },
    /// Revenue-maximizing fee of one pool against the others' fees.
    BestResponse {
        #[command(flatten)]
        market: MarketArgs,
        #[command(flatten)]
        demand: DemandArgs,
        /// Responding pool (1-based).
        #[arg(long, default_value_t = 1)]
        pool: usize,
        /// Comma-separated fee profile; defaults to the pools' own fees.
        #[arg(long)]
        fees: Option<String>,
        /// Width of the final fee bracket.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Pure Nash equilibrium by cyclic best responses, with a deviation audit.
    Equilibrium {
        #[command(flatten)]
        market: MarketArgs,
        #[command(flatten)]
        demand: DemandArgs,
        /// Starting fee for every pool, or a comma-separated profile.
        #[arg(long)]
        start: Option<String>,
        /// Convergence threshold on fee changes over a full round.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iters: Option<usize>,
    },
    /// Fees each pool collects over a trade history.
    Replay {
        #[command(flatten)]
        market: MarketArgs,
        #[arg(long, value_name = "CSV")]
        trades: PathBuf,
        #[arg(long)]
        fees: Option<String>,
        /// Relative routing tolerance.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Expected fees per trade, also evaluated at the mean trade size.
    ExpectedFees {
        #[command(flatten)]
        market: MarketArgs,
        #[command(flatten)]
        demand: DemandArgs,
        #[arg(long)]
        fees: Option<String>,
    },
    /// Seeded synthetic trade history as CSV.
    SynthTrades {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        count: Option<usize>,
        /// Median trade size in source tokens.
        #[arg(long)]
        median: Option<f64>,
        /// Log-scale standard deviation of trade sizes.
        #[arg(long)]
        sigma: Option<f64>,
        /// Source tokens per target token for `t2s` amounts.
        #[arg(long)]
        price: Option<f64>,
    },
}

fn run(args: Vec<String>) -> Result<(), CliError> {
    let args = config::expand(args)?;
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            e.print().map_err(|io| CliError::io("stdout", io))?;
            return Ok(());
        }
        Err(e) => {
            let text = e.render().to_string();
            return Err(CliError::Config(text.trim_end().trim_start_matches("error: ").to_string()));
        }
    };
    match cli.jobs {
        Some(0) => Err(CliError::Config("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?
            .install(|| commands::dispatch(&cli)),
        None => commands::dispatch(&cli),
    }
}

fn main() -> ExitCode {
    match run(std::env::args().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
