//! Optimal routing and fee competition for constant-product market makers.
//!
//! * [`pool`]: balanced pools, markets and the constant-product trade function.
//! * [`routing`]: optimal splitting of a trade across pools.
//! * [`game`]: the fee game between pools, best responses and equilibria.
//! * [`flow`]: trade-size distributions, historical trade ingestion and replay.
//! * [`sweep`]: parameter sweeps producing the data series behind the figures.

pub mod error;
pub mod flow;
pub mod game;
pub mod pool;
pub mod routing;
mod search;
pub mod sweep;

pub use error::{Error, Result};
pub use flow::{
    build_distribution, expected_utility, mean_size_reduction, normalize_snapshots, replay, PoolSnapshot, ReplayReport,
    Side, TradeRecord, TradeSizeDistribution,
};
pub use game::{
    best_response, find_equilibrium, pool_utility, quasiconcavity_cubic, utility_level_sets_are_intervals,
    BestResponseResult, CubicLevelSet, EquilibriumResult, FeeProfile,
};
pub use pool::{marginal_price, trade_output, Allocation, Market, Pool, TradeFunction};
pub use routing::{closed_form_allocation, solve_otp, solve_otp_waterfill, split_fraction_curve, RouteResult};
pub use sweep::{run_sweep, SweepKind, SweepSpec, Table};
