//! Order flow: trade-size distributions, historical trade ingestion and replay.
//!
//! Pools are assumed balanced before every trade (arbitrage restores the
//! common price between trades), so each recorded trade is routed against the
//! same market and no state carries from one trade to the next.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{Demand, FeeProfile, SingleTrade};
use crate::pool::{Market, Pool};
use crate::routing::solve_otp;

/// Default relative price disagreement tolerated between pool snapshots.
pub const BALANCE_TOLERANCE: f64 = 0.01;

/// Discrete distribution of trade sizes (source tokens) with normalized weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeSizeDistribution {
    entries: Vec<(f64, f64)>,
}

impl TradeSizeDistribution {
    /// Builds a distribution from `(size, weight)` pairs; weights are normalized.
    pub fn new(entries: Vec<(f64, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::domain("trade size distribution is empty"));
        }
        for (j, &(t, p)) in entries.iter().enumerate() {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::domain(format!("entry {j}: trade size must be positive, got {t}")));
            }
            if !(p.is_finite() && p > 0.0) {
                return Err(Error::domain(format!("entry {j}: weight must be positive, got {p}")));
            }
        }
        let total: f64 = entries.iter().map(|e| e.1).sum();
        let entries = entries.into_iter().map(|(t, p)| (t, p / total)).collect();
        Ok(TradeSizeDistribution { entries })
    }

    /// All trade sizes equally likely.
    pub fn uniform(sizes: &[f64]) -> Result<Self> {
        TradeSizeDistribution::new(sizes.iter().map(|&t| (t, 1.0)).collect())
    }

    pub fn point(t: f64) -> Result<Self> {
        TradeSizeDistribution::new(vec![(t, 1.0)])
    }

    pub fn entries(&self) -> &[(f64, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.entries.iter().map(|&(t, p)| t * p).sum()
    }

    pub fn max_size(&self) -> f64 {
        self.entries.iter().map(|e| e.0).fold(0.0, f64::max)
    }
}

impl Demand for TradeSizeDistribution {
    /// `sum_j p_j s_i x_i*(s, t_j)` for every pool.
    fn revenues(&self, market: &Market, tol: f64) -> Result<Vec<f64>> {
        let per_atom = self
            .entries
            .par_iter()
            .map(|&(t, p)| {
                let r = SingleTrade(t).revenues(market, tol)?;
                Ok(r.into_iter().map(|v| p * v).collect::<Vec<f64>>())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(sum_columns(market.len(), &per_atom))
    }
}

/// Column sums in row order, so results do not depend on thread scheduling.
fn sum_columns(n: usize, rows: &[Vec<f64>]) -> Vec<f64> {
    let mut acc = vec![0.0; n];
    for row in rows {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    acc
}

/// Expected fees of pool `i` when the next trade is drawn from `dist`.
pub fn expected_utility(market: &Market, profile: &FeeProfile, i: usize, dist: &TradeSizeDistribution) -> Result<f64> {
    crate::game::utility_with(market, profile, i, dist, &crate::game::GameConfig::default())
}

/// `sum_j p_j t_j`.
///
/// Expected utility over `dist` equals the single-trade utility at this size
/// only while every pool receives flow at every `t_j`: the interior allocation
/// is affine in `t`, the constrained one is not.
pub fn mean_size_reduction(dist: &TradeSizeDistribution) -> f64 {
    dist.mean()
}

/// Direction of a recorded swap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    #[serde(rename = "s2t")]
    SourceToTarget,
    #[serde(rename = "t2s")]
    TargetToSource,
}

/// One historical swap. `amount_in` is denominated in the input token.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub block: u64,
    pub side: Side,
    pub amount_in: f64,
}

impl TradeRecord {
    /// Trade size in source tokens, converting target-token inputs at
    /// `target_price` source tokens per target token.
    pub fn source_size(&self, target_price: f64) -> f64 {
        match self.side {
            Side::SourceToTarget => self.amount_in,
            Side::TargetToSource => self.amount_in * target_price,
        }
    }
}

/// Raw pool reserves before choosing the target unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSnapshot {
    pub reserve_source: f64,
    pub reserve_target: f64,
    pub fee: f64,
}

impl PoolSnapshot {
    /// Source tokens per target token implied by the reserves.
    pub fn price(&self) -> f64 {
        self.reserve_source / self.reserve_target
    }
}

impl From<&Pool> for PoolSnapshot {
    fn from(p: &Pool) -> Self {
        PoolSnapshot {
            reserve_source: p.reserve(),
            reserve_target: p.reserve(),
            fee: p.fee(),
        }
    }
}

/// A market built from snapshots plus the unit change that was applied.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedMarket {
    pub market: Market,
    /// Aggregate price, source tokens per raw target token. Raw target
    /// amounts times this price are normalized amounts.
    pub target_price: f64,
}

/// [`normalize_snapshots_with`] at the default balancedness tolerance.
pub fn normalize_snapshots(snapshots: &[PoolSnapshot]) -> Result<Market> {
    normalize_snapshots_with(snapshots, BALANCE_TOLERANCE).map(|n| n.market)
}

/// Rescales the target unit so that every pool has equal reserves.
///
/// The unit is set by the aggregate price `sum reserve_source / sum
/// reserve_target`. Each pool's normalized reserve is the geometric mean of
/// its source reserve and its rescaled target reserve, which keeps the
/// constant product and equals `reserve_source` for an exactly balanced pool.
/// Pools whose own price deviates from the aggregate by more than `tolerance`
/// (relative) are rejected.
pub fn normalize_snapshots_with(snapshots: &[PoolSnapshot], tolerance: f64) -> Result<NormalizedMarket> {
    if snapshots.is_empty() {
        return Err(Error::domain("no pool snapshots"));
    }
    for (k, s) in snapshots.iter().enumerate() {
        if !(s.reserve_source.is_finite() && s.reserve_source > 0.0 && s.reserve_target.is_finite() && s.reserve_target > 0.0) {
            return Err(Error::config(format!("pools[{k}]"), "reserves must be positive"));
        }
    }
    let price = snapshots.iter().map(|s| s.reserve_source).sum::<f64>() / snapshots.iter().map(|s| s.reserve_target).sum::<f64>();
    let offending: Vec<(usize, f64)> = snapshots
        .iter()
        .enumerate()
        .map(|(k, s)| (k, s.price() / price - 1.0))
        .filter(|(_, dev)| dev.abs() > tolerance)
        .collect();
    if !offending.is_empty() {
        return Err(Error::Imbalance { offending, tolerance });
    }
    let pools = snapshots
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let reserve = (s.reserve_source * s.reserve_target * price).sqrt();
            Pool::new(reserve, s.fee).map_err(|e| Error::config(format!("pools[{k}]"), e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NormalizedMarket {
        market: Market::new(pools)?,
        target_price: price,
    })
}

/// Empirical distribution of records already expressed in normalized units
/// (the balanced price is 1), each trade weighted `1/N`.
pub fn build_distribution(records: &[TradeRecord]) -> Result<TradeSizeDistribution> {
    build_distribution_at(records, 1.0)
}

/// Empirical distribution, converting target-token inputs at `target_price`.
pub fn build_distribution_at(records: &[TradeRecord], target_price: f64) -> Result<TradeSizeDistribution> {
    if records.is_empty() {
        return Err(Error::domain("no trade records"));
    }
    TradeSizeDistribution::uniform(&records.iter().map(|r| r.source_size(target_price)).collect::<Vec<_>>())
}

/// Fees every pool collects over a replay of historical trades.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayReport {
    pub per_pool_fees_collected: Vec<f64>,
    pub fee_profile: FeeProfile,
    pub trade_count: usize,
}

/// [`replay_at`] for records in normalized units.
pub fn replay(market: &Market, profile: &FeeProfile, records: &[TradeRecord]) -> Result<ReplayReport> {
    replay_at(market, profile, records, 1.0, crate::game::GameConfig::default().route_tol)
}

/// Routes every record optimally against the balanced market under `profile`
/// and sums the fees each pool collects.
pub fn replay_at(market: &Market, profile: &FeeProfile, records: &[TradeRecord], target_price: f64, tol: f64) -> Result<ReplayReport> {
    let m = profile.apply(market)?;
    let per_trade = records
        .par_iter()
        .map(|r| {
            let t = r.source_size(target_price);
            let route = solve_otp(&m, t, tol)?;
            Ok(m.pools().iter().zip(route.amounts()).map(|(p, &x)| p.fee() * x).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(ReplayReport {
        per_pool_fees_collected: sum_columns(m.len(), &per_trade),
        fee_profile: profile.clone(),
        trade_count: records.len(),
    })
}

/// Parses a trade CSV with header `block,side,amount_in`.
///
/// `side` is `s2t` or `t2s`; `amount_in` must be a positive decimal. Errors
/// name the offending line.
pub fn parse_trades_csv(text: &str) -> Result<Vec<TradeRecord>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::config("line 1", format!("unreadable header: {e}")))?
        .clone();
    let expected = ["block", "side", "amount_in"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::config(
            "line 1",
            format!("expected header `block,side,amount_in`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut records = Vec::new();
    for (k, row) in reader.deserialize::<TradeRecord>().enumerate() {
        let line = k + 2;
        let record = row.map_err(|e| Error::config(format!("line {line}"), csv_message(&e)))?;
        if !(record.amount_in.is_finite() && record.amount_in > 0.0) {
            return Err(Error::config(
                format!("line {line}, field amount_in"),
                format!("must be positive, got {}", record.amount_in),
            ));
        }
        records.push(record);
    }
    Ok(records)
}

fn csv_message(e: &csv::Error) -> String {
    match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => match err.field() {
            Some(f) => format!("field {}: {}", ["block", "side", "amount_in"].get(f as usize).unwrap_or(&"?"), err.kind()),
            None => err.kind().to_string(),
        },
        _ => e.to_string(),
    }
}

/// Inverse of [`parse_trades_csv`].
pub fn write_trades_csv(records: &[TradeRecord]) -> String {
    let mut out = String::from("block,side,amount_in\n");
    for r in records {
        let side = match r.side {
            Side::SourceToTarget => "s2t",
            Side::TargetToSource => "t2s",
        };
        out.push_str(&format!("{},{},{}\n", r.block, side, r.amount_in));
    }
    out
}

/// Parses a JSON array of pool snapshots.
pub fn parse_pool_snapshots(text: &str) -> Result<Vec<PoolSnapshot>> {
    let snapshots: Vec<PoolSnapshot> = serde_json::from_str(text).map_err(|e| Error::config(format!("line {}, column {}", e.line(), e.column()), e.to_string()))?;
    if snapshots.is_empty() {
        return Err(Error::config("pools", "at least one pool is required"));
    }
    for (k, s) in snapshots.iter().enumerate() {
        for (name, v) in [("reserve_source", s.reserve_source), ("reserve_target", s.reserve_target)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("pools[{k}].{name}"), format!("must be positive, got {v}")));
            }
        }
        if !(s.fee.is_finite() && (0.0..1.0).contains(&s.fee)) {
            return Err(Error::config(format!("pools[{k}].fee"), format!("must lie in [0, 1), got {}", s.fee)));
        }
    }
    Ok(snapshots)
}

/// Parameters of a seeded synthetic trade sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticTrades {
    pub seed: u64,
    pub count: usize,
    /// Median trade size in source tokens.
    pub median_size: f64,
    /// Log-scale standard deviation of the trade size.
    pub sigma: f64,
    /// Source tokens per raw target token, used to express `t2s` inputs.
    pub target_price: f64,
    pub first_block: u64,
}

impl Default for SyntheticTrades {
    fn default() -> Self {
        SyntheticTrades {
            seed: 12_000_000,
            count: 2000,
            median_size: 10_000.0,
            sigma: 1.2,
            target_price: 1.0,
            first_block: 11_990_000,
        }
    }
}

impl SyntheticTrades {
    /// Log-normal sizes, both directions equally likely, sorted by block.
    /// Amounts are rounded to 1e-6 input tokens so they survive CSV text.
    pub fn generate(&self) -> Result<Vec<TradeRecord>> {
        let sizes = LogNormal::new(self.median_size.ln(), self.sigma).map_err(|e| Error::domain(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let blocks: BTreeSet<u64> = std::iter::from_fn(|| Some(self.first_block + rng.random_range(0..10_000)))
            .take(self.count * 4)
            .collect();
        let blocks: Vec<u64> = blocks.into_iter().collect();
        let mut records = Vec::with_capacity(self.count);
        for k in 0..self.count {
            let size: f64 = sizes.sample(&mut rng);
            let side = if rng.random_bool(0.5) { Side::SourceToTarget } else { Side::TargetToSource };
            let amount = match side {
                Side::SourceToTarget => size,
                Side::TargetToSource => size / self.target_price,
            };
            let amount_in = ((amount * 1e6).round() / 1e6).max(1e-6);
            let block = blocks.get(k * blocks.len() / self.count.max(1)).copied().unwrap_or(self.first_block);
            records.push(TradeRecord { block, side, amount_in });
        }
        Ok(records)
    }
}
