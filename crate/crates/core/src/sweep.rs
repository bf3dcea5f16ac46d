//! Parameter sweeps behind the figure data series.
//!
//! Each [`SweepKind`] maps one abscissa grid to a table of named columns.
//! Grid points are independent and are evaluated in parallel; rows are
//! always returned in grid order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{find_equilibrium_with, FeeProfile, GameConfig, SingleTrade, STANDARD_FEE};
use crate::pool::{check_fee, Market, Pool};
use crate::routing::{closed_form_allocation, solve_otp, DEFAULT_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    /// Total output against the fraction of the trade sent to pool 1.
    TradeSplit,
    /// Optimal fraction in a pool against that pool's fee.
    SplitVsFee,
    /// A pool's fee revenue against its own fee.
    UtilityVsFee,
    /// Two-pool equilibria against pool 1's share of the total size.
    TwoPoolShare,
    /// Three-pool equilibria: pools 1 and 2 split a fixed size, pool 3 is fixed.
    ThreePoolShare,
}

impl SweepKind {
    pub const ALL: [SweepKind; 5] = [
        SweepKind::TradeSplit,
        SweepKind::SplitVsFee,
        SweepKind::UtilityVsFee,
        SweepKind::TwoPoolShare,
        SweepKind::ThreePoolShare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepKind::TradeSplit => "trade_split",
            SweepKind::SplitVsFee => "split_vs_fee",
            SweepKind::UtilityVsFee => "utility_vs_fee",
            SweepKind::TwoPoolShare => "two_pool_share",
            SweepKind::ThreePoolShare => "three_pool_share",
        }
    }

    pub fn parse(name: &str) -> Option<SweepKind> {
        SweepKind::ALL.into_iter().find(|k| k.name() == name.replace('-', "_"))
    }

    /// Uniform default grid of `points` abscissae in the kind's domain.
    pub fn default_grid(self, points: usize) -> Vec<f64> {
        let points = points.max(2);
        match self {
            SweepKind::TradeSplit => (0..points).map(|k| k as f64 / (points - 1) as f64).collect(),
            SweepKind::SplitVsFee | SweepKind::UtilityVsFee => {
                (0..points).map(|k| 0.01 * k as f64 / (points - 1) as f64).collect()
            }
            SweepKind::TwoPoolShare | SweepKind::ThreePoolShare => {
                (1..=points).map(|k| k as f64 / (points + 1) as f64).collect()
            }
        }
    }

    fn check_abscissa(self, x: f64) -> std::result::Result<(), String> {
        let ok = match self {
            SweepKind::TradeSplit => (0.0..=1.0).contains(&x),
            SweepKind::SplitVsFee | SweepKind::UtilityVsFee => (0.0..1.0).contains(&x),
            SweepKind::TwoPoolShare | SweepKind::ThreePoolShare => x > 0.0 && x < 1.0,
        };
        if ok {
            Ok(())
        } else {
            let domain = match self {
                SweepKind::TradeSplit => "[0, 1]",
                SweepKind::SplitVsFee | SweepKind::UtilityVsFee => "[0, 1)",
                _ => "(0, 1)",
            };
            Err(format!("{x} is outside {domain}"))
        }
    }
}

/// Number of grid points when a sweep does not specify its grid.
pub const DEFAULT_GRID_POINTS: usize = 200;

/// Market parameters of a sweep, as `(reserve, fee)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolParams {
    pub reserve: f64,
    pub fee: f64,
}

/// A sweep job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub kind: SweepKind,
    /// Pools for the single-market kinds (trade split, split/utility vs fee).
    #[serde(default = "example_pools")]
    pub pools: Vec<PoolParams>,
    /// Pool whose fee (or share) is varied.
    #[serde(default)]
    pub pool_index: usize,
    /// Abscissae; filled with the default grid when empty.
    #[serde(default)]
    pub grid: Vec<f64>,
    #[serde(default = "default_trade")]
    pub trade: f64,
    /// Total size shared by the varied pools in the share sweeps.
    #[serde(default)]
    pub total_size: Option<f64>,
    /// Size of the fixed third pool in the three-pool sweep.
    #[serde(default)]
    pub fixed_size: Option<f64>,
    /// Starting fee of every equilibrium search.
    #[serde(default = "default_start")]
    pub start_fee: f64,
    #[serde(default = "default_fee_tol")]
    pub fee_tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
}

fn example_pools() -> Vec<PoolParams> {
    vec![
        PoolParams { reserve: 1e6, fee: 0.003 },
        PoolParams { reserve: 2e6, fee: 0.003 },
    ]
}

fn default_trade() -> f64 {
    1000.0
}

fn default_start() -> f64 {
    STANDARD_FEE
}

fn default_fee_tol() -> f64 {
    GameConfig::default().fee_tol
}

fn default_max_iters() -> usize {
    GameConfig::default().max_iters
}

impl SweepSpec {
    /// Spec with every default filled in for `kind`.
    pub fn new(kind: SweepKind) -> Self {
        SweepSpec {
            kind,
            pools: example_pools(),
            pool_index: 0,
            grid: kind.default_grid(DEFAULT_GRID_POINTS),
            trade: default_trade(),
            total_size: None,
            fixed_size: None,
            start_fee: default_start(),
            fee_tol: default_fee_tol(),
            max_iters: default_max_iters(),
        }
    }

    /// Parses a JSON job, fills in the default grid and validates it.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut spec: SweepSpec = serde_json::from_str(text)
            .map_err(|e| Error::config(format!("line {}, column {}", e.line(), e.column()), e.to_string()))?;
        if spec.grid.is_empty() {
            spec.grid = spec.kind.default_grid(DEFAULT_GRID_POINTS);
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn total_size(&self) -> f64 {
        self.total_size.unwrap_or(match self.kind {
            SweepKind::ThreePoolShare => 3e6,
            _ => 6e6,
        })
    }

    pub fn fixed_size(&self) -> f64 {
        self.fixed_size.unwrap_or(3e6)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::config("grid", "grid is empty"));
        }
        for (k, &x) in self.grid.iter().enumerate() {
            self.kind
                .check_abscissa(x)
                .map_err(|m| Error::config(format!("grid[{k}]"), m))?;
            if k > 0 && x <= self.grid[k - 1] {
                return Err(Error::config(format!("grid[{k}]"), "grid must be strictly increasing"));
            }
        }
        if !(self.trade.is_finite() && self.trade > 0.0) {
            return Err(Error::config("trade", format!("must be positive, got {}", self.trade)));
        }
        for (name, v) in [("total_size", self.total_size), ("fixed_size", self.fixed_size)] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::config(name, format!("must be positive, got {v}")));
                }
            }
        }
        check_fee(self.start_fee).map_err(|e| Error::config("start_fee", e.to_string()))?;
        if !(self.fee_tol > 0.0) {
            return Err(Error::config("fee_tol", "must be positive"));
        }
        if matches!(self.kind, SweepKind::TradeSplit | SweepKind::SplitVsFee | SweepKind::UtilityVsFee) {
            self.market()?;
            let needed = if self.kind == SweepKind::TradeSplit { 2 } else { self.pool_index + 1 };
            if self.pools.len() < needed {
                return Err(Error::config("pools", format!("needs at least {needed} pools")));
            }
            if self.kind == SweepKind::TradeSplit && self.pools.len() != 2 {
                return Err(Error::config("pools", "trade_split needs exactly 2 pools"));
            }
        }
        Ok(())
    }

    pub fn market(&self) -> Result<Market> {
        let pools = self
            .pools
            .iter()
            .enumerate()
            .map(|(k, p)| Pool::new(p.reserve, p.fee).map_err(|e| Error::config(format!("pools[{k}]"), e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        Market::new(pools).map_err(|e| Error::config("pools", e.to_string()))
    }

    pub fn game_config(&self) -> GameConfig {
        GameConfig {
            fee_tol: self.fee_tol,
            max_iters: self.max_iters,
            ..GameConfig::default()
        }
    }

    /// Market of a share sweep at abscissa `share` (pool sizes, not reserves).
    pub fn share_market(&self, share: f64) -> Result<Market> {
        let total = self.total_size();
        let fee = self.start_fee;
        let mut sizes = vec![total * share, total * (1.0 - share)];
        if self.kind == SweepKind::ThreePoolShare {
            sizes.push(self.fixed_size());
        }
        Market::new(sizes.into_iter().map(|s| Pool::new(s / 2.0, fee)).collect::<Result<Vec<_>>>()?)
    }
}

/// A named-column table of numbers, one row per grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

/// Evaluates every grid point of `spec`.
pub fn run_sweep(spec: &SweepSpec) -> Result<Table> {
    spec.validate()?;
    let columns: Vec<String> = match spec.kind {
        SweepKind::TradeSplit => vec!["fraction_pool1", "output"],
        SweepKind::SplitVsFee => vec!["fee", "fraction", "fraction_closed_form"],
        SweepKind::UtilityVsFee => vec!["fee", "utility"],
        SweepKind::TwoPoolShare => vec![
            "share", "fee_pool1", "fee_pool2", "relfee_pool1", "relfee_pool2", "converged",
        ],
        SweepKind::ThreePoolShare => vec![
            "share", "fee_pool1", "fee_pool2", "fee_pool3", "relfee_pool1", "relfee_pool2", "relfee_pool3",
            "relfee_weighted_avg", "converged",
        ],
    }
    .into_iter()
    .map(String::from)
    .collect();

    let rows = spec
        .grid
        .par_iter()
        .map(|&x| sweep_row(spec, x))
        .collect::<Result<Vec<_>>>()?;
    Ok(Table { columns, rows })
}

fn sweep_row(spec: &SweepSpec, x: f64) -> Result<Vec<f64>> {
    let t = spec.trade;
    match spec.kind {
        SweepKind::TradeSplit => {
            let m = spec.market()?;
            Ok(vec![x, m.output(&[x * t, (1.0 - x) * t])])
        }
        SweepKind::SplitVsFee => {
            let m = spec.market()?.with_fee(spec.pool_index, x)?;
            let route = solve_otp(&m, t, DEFAULT_TOL)?;
            let raw = closed_form_allocation(&m, t)?;
            Ok(vec![x, route.allocation.fraction(spec.pool_index), raw.fraction(spec.pool_index)])
        }
        SweepKind::UtilityVsFee => {
            let m = spec.market()?;
            let profile = FeeProfile::of(&m).with(spec.pool_index, x)?;
            Ok(vec![x, crate::game::pool_utility(&m, &profile, spec.pool_index, t)?])
        }
        SweepKind::TwoPoolShare | SweepKind::ThreePoolShare => {
            let m = spec.share_market(x)?;
            let start = FeeProfile::of(&m);
            let eq = find_equilibrium_with(&m, &start, &SingleTrade(t), &spec.game_config())?;
            let rel: Vec<f64> = eq
                .utilities
                .iter()
                .zip(m.pools())
                .map(|(u, p)| u / p.size())
                .collect();
            let mut row = vec![x];
            row.extend_from_slice(eq.fees.fees());
            row.extend_from_slice(&rel);
            if spec.kind == SweepKind::ThreePoolShare {
                let (s1, s2) = (m.pools()[0].size(), m.pools()[1].size());
                row.push((eq.utilities[0] + eq.utilities[1]) / (s1 + s2));
            }
            row.push(if eq.converged { 1.0 } else { 0.0 });
            Ok(row)
        }
    }
}
