//! The fee game: pools choose fees to maximize the fees they collect from
//! optimally routed trades.
//!
//! Pool `i` earns `u_i(s) = s_i x_i(s)` where `x_i` is its part of the optimal
//! (constrained) route. For a single trade size the utility is quasiconcave in
//! the pool's own fee, so best responses are found by unimodal search and
//! equilibria by cyclic best-response iteration. Every equilibrium candidate
//! is audited afterwards on a dense fee grid.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pool::{check_fee, Market};
use crate::routing::solve_otp;
use crate::search::golden_max;

/// Upper end of the fee strategy interval. A fee of exactly 1 zeroes the
/// trade function and is never a best response.
pub const FEE_CAP: f64 = 1.0 - 1e-9;

/// Starting fee for equilibrium searches, the common 0.3% tier.
pub const STANDARD_FEE: f64 = 0.003;

/// A fee vector `s = (s_1, ..., s_n)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct FeeProfile {
    fees: Vec<f64>,
}

impl FeeProfile {
    pub fn new(fees: Vec<f64>) -> Result<Self> {
        for &f in &fees {
            check_fee(f)?;
        }
        Ok(FeeProfile { fees })
    }

    pub fn uniform(n: usize, fee: f64) -> Result<Self> {
        FeeProfile::new(vec![fee; n])
    }

    /// The fees currently set on a market.
    pub fn of(market: &Market) -> Self {
        FeeProfile { fees: market.fees() }
    }

    pub fn fees(&self) -> &[f64] {
        &self.fees
    }

    pub fn len(&self) -> usize {
        self.fees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fees.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.fees[i]
    }

    /// `s_{-i}`: all fees except pool `i`'s.
    pub fn others(&self, i: usize) -> Vec<f64> {
        self.fees
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &f)| f)
            .collect()
    }

    pub fn with(&self, i: usize, fee: f64) -> Result<Self> {
        check_fee(fee)?;
        let mut fees = self.fees.clone();
        fees[i] = fee;
        Ok(FeeProfile { fees })
    }

    pub fn apply(&self, market: &Market) -> Result<Market> {
        market.with_fees(&self.fees)
    }
}

/// Order flow the pools compete for.
pub trait Demand: Sync {
    /// Fees collected by every pool of `market` (fees already applied),
    /// routing with relative tolerance `tol`.
    fn revenues(&self, market: &Market, tol: f64) -> Result<Vec<f64>>;
}

/// A single trade of fixed size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleTrade(pub f64);

impl Demand for SingleTrade {
    fn revenues(&self, market: &Market, tol: f64) -> Result<Vec<f64>> {
        let route = solve_otp(market, self.0, tol)?;
        Ok(market
            .pools()
            .iter()
            .zip(route.amounts())
            .map(|(p, &x)| p.fee() * x)
            .collect())
    }
}

/// Numerical settings shared by best responses and equilibrium searches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GameConfig {
    /// Relative routing tolerance used inside utility evaluations.
    pub route_tol: f64,
    /// Final bracket width of the best-response search, in fee units.
    pub response_tol: f64,
    /// Convergence threshold on `max_i |delta s_i|` over a full round.
    pub fee_tol: f64,
    pub max_iters: usize,
    /// Largest relative utility gain a deviation may offer at a certified equilibrium.
    pub deviation_tol: f64,
    /// Points of each audit grid (one global, one around the candidate fee).
    pub audit_points: usize,
}

impl Default for GameConfig {
    fn default() -> Self {
        GameConfig {
            route_tol: 1e-12,
            response_tol: 1e-10,
            fee_tol: 1e-7,
            max_iters: 10_000,
            deviation_tol: 1e-4,
            audit_points: 1001,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BestResponseResult {
    pub fee: f64,
    pub utility: f64,
    /// Number of utility evaluations spent.
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumResult {
    pub fees: FeeProfile,
    pub utilities: Vec<f64>,
    pub iterations: usize,
    /// The iteration reached a fixed point and the deviation audit passed.
    pub converged: bool,
    /// Largest relative utility gain any single pool finds on the audit grid.
    pub max_gain: f64,
    /// Per-pool relative gains from the audit.
    pub gains: Vec<f64>,
    /// Largest fee change in the last round.
    pub last_step: f64,
}

fn check_index(market: &Market, profile: &FeeProfile, i: usize) -> Result<()> {
    if profile.len() != market.len() {
        return Err(Error::domain(format!(
            "fee profile has {} entries for {} pools",
            profile.len(),
            market.len()
        )));
    }
    market.pool(i).map(|_| ())
}

fn utility_at(market: &Market, profile: &FeeProfile, i: usize, fee: f64, demand: &dyn Demand, tol: f64) -> Result<f64> {
    let m = profile.with(i, fee)?.apply(market)?;
    Ok(demand.revenues(&m, tol)?[i])
}

/// `u_i(s) = s_i x_i` for a single trade of size `t`, routed optimally.
pub fn pool_utility(market: &Market, profile: &FeeProfile, i: usize, t: f64) -> Result<f64> {
    utility_with(market, profile, i, &SingleTrade(t), &GameConfig::default())
}

/// Utility of pool `i` under an arbitrary demand.
pub fn utility_with(market: &Market, profile: &FeeProfile, i: usize, demand: &dyn Demand, cfg: &GameConfig) -> Result<f64> {
    check_index(market, profile, i)?;
    utility_at(market, profile, i, profile.get(i), demand, cfg.route_tol)
}

/// All pools' utilities at a profile.
pub fn utilities_with(market: &Market, profile: &FeeProfile, demand: &dyn Demand, cfg: &GameConfig) -> Result<Vec<f64>> {
    let m = profile.apply(market)?;
    demand.revenues(&m, cfg.route_tol)
}

/// `b_i(s_{-i})` for a single trade of size `t`, with the search refined to a
/// fee bracket of width `tol`.
pub fn best_response(market: &Market, profile: &FeeProfile, i: usize, t: f64, tol: f64) -> Result<BestResponseResult> {
    let cfg = GameConfig {
        response_tol: tol,
        ..GameConfig::default()
    };
    best_response_with(market, profile, i, &SingleTrade(t), &cfg)
}

/// Best response of pool `i` against an arbitrary demand.
///
/// Golden-section search over `[0, FEE_CAP]`; flat optima resolve to the
/// smallest maximizing fee. Only exact for demands whose utility is
/// quasiconcave in the own fee, which holds for a single trade size.
pub fn best_response_with(
    market: &Market,
    profile: &FeeProfile,
    i: usize,
    demand: &dyn Demand,
    cfg: &GameConfig,
) -> Result<BestResponseResult> {
    check_index(market, profile, i)?;
    if !(cfg.response_tol > 0.0) {
        return Err(Error::domain(format!("tolerance must be positive, got {}", cfg.response_tol)));
    }
    let (best, evaluations) = golden_max(
        0.0,
        FEE_CAP,
        cfg.response_tol,
        |fee| utility_at(market, profile, i, fee, demand, cfg.route_tol),
        |a, b| a - b,
    )?;
    Ok(BestResponseResult {
        fee: best.x,
        utility: best.value,
        evaluations,
    })
}

/// Cyclic best-response iteration for a single trade of size `t`.
pub fn find_equilibrium(market: &Market, start: &FeeProfile, t: f64, tol: f64, max_iters: usize) -> Result<EquilibriumResult> {
    let cfg = GameConfig {
        fee_tol: tol,
        max_iters,
        ..GameConfig::default()
    };
    find_equilibrium_with(market, start, &SingleTrade(t), &cfg)
}

/// Cyclic (Gauss-Seidel, pools in index order) best-response iteration.
///
/// Stops once a full round changes no fee by more than `cfg.fee_tol`, or after
/// `cfg.max_iters` rounds. The end point is then audited: a pool deviating to
/// any fee of the audit grid must not gain more than `cfg.deviation_tol`
/// relative. Non-convergence is reported through `converged`, not as an error.
///
/// For demands other than [`SingleTrade`] pure equilibria need not exist and
/// the result is a heuristic; the audit still measures how far from one it is.
pub fn find_equilibrium_with(market: &Market, start: &FeeProfile, demand: &dyn Demand, cfg: &GameConfig) -> Result<EquilibriumResult> {
    check_index(market, start, 0)?;
    let n = market.len();
    let mut profile = start.clone();
    let mut iterations = 0;
    let mut last_step = f64::INFINITY;
    let mut fixed_point = false;
    while iterations < cfg.max_iters {
        iterations += 1;
        let mut step: f64 = 0.0;
        for i in 0..n {
            let br = best_response_with(market, &profile, i, demand, cfg)?;
            step = step.max((br.fee - profile.get(i)).abs());
            profile = profile.with(i, br.fee)?;
        }
        last_step = step;
        if step < cfg.fee_tol {
            fixed_point = true;
            break;
        }
    }

    let utilities = utilities_with(market, &profile, demand, cfg)?;
    let gains = deviation_gains(market, &profile, &utilities, demand, cfg)?;
    let max_gain = gains.iter().copied().fold(0.0, f64::max);
    Ok(EquilibriumResult {
        converged: fixed_point && max_gain <= cfg.deviation_tol,
        fees: profile,
        utilities,
        iterations,
        max_gain,
        gains,
        last_step,
    })
}

/// Fee grid used to audit pool `i`: uniform over the whole strategy interval
/// plus a finer grid around the current fee.
fn audit_grid(fee: f64, points: usize) -> Vec<f64> {
    let points = points.max(2);
    let step = FEE_CAP / (points - 1) as f64;
    let mut grid: Vec<f64> = (0..points).map(|k| k as f64 * step).collect();
    let half_width = fee.max(1e-3);
    let (lo, hi) = ((fee - half_width).max(0.0), (fee + half_width).min(FEE_CAP));
    let local_step = (hi - lo) / (points - 1) as f64;
    grid.extend((0..points).map(|k| lo + k as f64 * local_step));
    grid
}

fn relative_gain(best: f64, current: f64) -> f64 {
    if best <= current {
        0.0
    } else if current > 0.0 {
        ((best - current) / current).min(f64::MAX)
    } else {
        f64::MAX
    }
}

/// Relative gain each pool could obtain by a unilateral deviation on the audit grid.
pub fn deviation_gains(
    market: &Market,
    profile: &FeeProfile,
    utilities: &[f64],
    demand: &dyn Demand,
    cfg: &GameConfig,
) -> Result<Vec<f64>> {
    (0..market.len())
        .map(|i| {
            let grid = audit_grid(profile.get(i), cfg.audit_points);
            let best = grid
                .par_iter()
                .map(|&fee| utility_at(market, profile, i, fee, demand, cfg.route_tol))
                .collect::<Result<Vec<f64>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            Ok(relative_gain(best, utilities[i]))
        })
        .collect()
}

/// The cubic whose sublevel set characterizes a superlevel set of the
/// interior utility.
///
/// With `tau = sqrt(1 - s_i)`, `u_i(s_i) / A_i >= alpha` holds exactly when
/// `f(tau) = C' tau^3 + (alpha - 1) tau^2 + (alpha D' - C') tau + 1 <= 0`,
/// where `C' = C / D`, `D' = A_i / D`, `C = t + sum_{j != i} A_j / (1 - s_j)`
/// and `D = sum_{j != i} A_j / sqrt(1 - s_j)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CubicLevelSet {
    pub alpha: f64,
    pub c_prime: f64,
    pub d_prime: f64,
}

impl CubicLevelSet {
    pub fn new(alpha: f64, c_prime: f64, d_prime: f64) -> Result<Self> {
        if !(c_prime > 0.0 && d_prime > 0.0 && c_prime.is_finite() && d_prime.is_finite() && alpha.is_finite()) {
            return Err(Error::domain(format!(
                "cubic level set needs finite alpha and positive C', D'; got ({alpha}, {c_prime}, {d_prime})"
            )));
        }
        Ok(CubicLevelSet { alpha, c_prime, d_prime })
    }

    /// The cubic for pool `i` at utility level `level` (in source tokens).
    pub fn for_pool(market: &Market, profile: &FeeProfile, i: usize, t: f64, level: f64) -> Result<Self> {
        let (c, d) = interior_constants(market, profile, i, t)?;
        let a_i = market.pool(i)?.reserve();
        CubicLevelSet::new(level / a_i, c / d, a_i / d)
    }

    pub fn eval(&self, tau: f64) -> f64 {
        quasiconcavity_cubic(self, tau)
    }
}

/// `f(tau) = C' tau^3 + (alpha - 1) tau^2 + (alpha D' - C') tau + 1`.
pub fn quasiconcavity_cubic(level: &CubicLevelSet, tau: f64) -> f64 {
    let CubicLevelSet { alpha, c_prime, d_prime } = *level;
    ((c_prime * tau + (alpha - 1.0)) * tau + (alpha * d_prime - c_prime)) * tau + 1.0
}

/// `(C, D)` for pool `i`; requires at least one other pool.
fn interior_constants(market: &Market, profile: &FeeProfile, i: usize, t: f64) -> Result<(f64, f64)> {
    check_index(market, profile, i)?;
    if market.len() < 2 {
        return Err(Error::domain("interior constants need at least two pools"));
    }
    let (mut c, mut d) = (t, 0.0);
    for (j, pool) in market.pools().iter().enumerate() {
        if j != i {
            let factor = 1.0 - profile.get(j);
            c += pool.reserve() / factor;
            d += pool.reserve() / factor.sqrt();
        }
    }
    Ok((c, d))
}

/// Utility of pool `i` with the unconstrained (interior) allocation:
/// `A_i s_i (C' - 1/sqrt(1 - s_i)) / (D' + sqrt(1 - s_i))`.
///
/// A single pool always receives the whole trade, giving `s t`.
pub fn interior_utility(market: &Market, profile: &FeeProfile, i: usize, t: f64, fee: f64) -> Result<f64> {
    if market.len() == 1 {
        check_index(market, profile, i)?;
        return Ok(fee * t);
    }
    let (c, d) = interior_constants(market, profile, i, t)?;
    let a_i = market.pool(i)?.reserve();
    let tau = (1.0 - fee).sqrt();
    Ok(a_i * fee * (c / d - 1.0 / tau) / (a_i / d + tau))
}

/// Number of samples used by [`utility_level_sets_are_intervals`].
pub const LEVEL_SET_SAMPLES: usize = 10_001;

/// Samples the interior utility of pool `i` over `[0, 1)` and checks that
/// every superlevel set of the samples is a single run.
pub fn utility_level_sets_are_intervals(market: &Market, profile: &FeeProfile, i: usize, t: f64) -> bool {
    let step = 1.0 / LEVEL_SET_SAMPLES as f64;
    let values: Result<Vec<f64>> = (0..LEVEL_SET_SAMPLES)
        .map(|k| interior_utility(market, profile, i, t, k as f64 * step))
        .collect();
    match values {
        Ok(v) => superlevel_sets_are_intervals(&v),
        Err(_) => false,
    }
}

/// True when the sequence has no interior dip, i.e. every set
/// `{k : v_k >= alpha}` is contiguous. Dips within a relative `1e-12` of the
/// surrounding values are treated as rounding noise.
pub fn superlevel_sets_are_intervals(values: &[f64]) -> bool {
    let n = values.len();
    if n < 3 {
        return true;
    }
    let mut suffix_max = vec![f64::NEG_INFINITY; n + 1];
    for k in (0..n).rev() {
        suffix_max[k] = suffix_max[k + 1].max(values[k]);
    }
    let mut prefix_max = f64::NEG_INFINITY;
    for k in 0..n {
        let wall = prefix_max.min(suffix_max[k + 1]);
        if wall.is_finite() && values[k] < wall - 1e-12 * wall.abs().max(values[k].abs()) {
            return false;
        }
        prefix_max = prefix_max.max(values[k]);
    }
    true
}

/// True when `{k : inside[k]}` is empty or a single contiguous run.
pub fn is_single_run(inside: impl IntoIterator<Item = bool>) -> bool {
    let mut runs = 0;
    let mut prev = false;
    for b in inside {
        if b && !prev {
            runs += 1;
        }
        prev = b;
    }
    runs <= 1
}
