//! Optimal trade routing: splitting a trade of size `t` across the pools of a
//! market so that the total output is maximal, subject to `x_i >= 0` and
//! `sum x_i = t`.
//!
//! Three solvers are provided:
//!
//! * [`closed_form_allocation`]: the stationary point of the Lagrangian,
//!   ignoring the sign constraints. Exact when every pool receives flow.
//! * [`solve_otp`]: pairwise golden-section (ternary) search over the simplex.
//!   It only evaluates the trade functions, never their derivatives.
//! * [`solve_otp_waterfill`]: bisection on the common marginal price `lambda`
//!   using the inverse of each pool's marginal price.
//!
//! The two constrained solvers share no code path and are used to validate
//! each other.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pool::{check_fee, Allocation, Market, Pool, TradeFunction};
use crate::search::golden_max;

/// Default relative tolerance for the routing solvers.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Result of a constrained routing solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RouteResult {
    pub allocation: Allocation,
    /// Total target tokens received.
    pub output: f64,
    /// Common marginal price of the used pools, when the solver produces it.
    pub lambda: Option<f64>,
    /// Every pool receives a positive amount.
    pub interior: bool,
}

impl RouteResult {
    fn new(market: &Market, amounts: Vec<f64>, total: f64, lambda: Option<f64>) -> Self {
        let output = market.output(&amounts);
        let interior = amounts.iter().all(|&x| x > 0.0);
        RouteResult {
            allocation: Allocation::unchecked(amounts, total),
            output,
            lambda,
            interior,
        }
    }

    pub fn amounts(&self) -> &[f64] {
        self.allocation.amounts()
    }
}

fn check_trade(t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("trade size must be positive, got {t}")))
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if tol.is_finite() && tol > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("tolerance must be positive, got {tol}")))
    }
}

/// Unconstrained optimum of the routing problem.
///
/// With `w_i = A_i / sqrt(1 - s_i)` the stationary point is
///
/// ```text
/// x_i = w_i (sum_j A_j/(1-s_j) + t) / (sum_j w_j) - A_i/(1-s_i)
/// ```
///
/// Entries may be negative when a pool is priced out; use [`solve_otp`] when
/// feasibility matters. The formula is evaluated in the rearranged form
///
/// ```text
/// x_i = w_i / W * (t + sum_j w_j (1/sqrt(c_j) - 1/sqrt(c_i)))
/// ```
///
/// with the bracketed differences expressed through `s_j - s_i`, so equal fees
/// give `t A_i / sum A_j` without cancellation.
pub fn closed_form_allocation(market: &Market, t: f64) -> Result<Allocation> {
    check_trade(t)?;
    let pools = market.pools();
    let roots: Vec<f64> = pools.iter().map(|p| p.fee_factor().sqrt()).collect();
    let weights: Vec<f64> = pools.iter().zip(&roots).map(|(p, r)| p.reserve() / r).collect();
    let weight_sum: f64 = weights.iter().sum();

    let amounts = (0..pools.len())
        .map(|i| {
            let shift: f64 = (0..pools.len())
                .filter(|&j| j != i)
                .map(|j| {
                    // 1/sqrt(c_j) - 1/sqrt(c_i) = (c_i - c_j) / (sqrt(c_i) sqrt(c_j) (sqrt(c_i) + sqrt(c_j)))
                    let dc = pools[j].fee() - pools[i].fee();
                    weights[j] * dc / (roots[i] * roots[j] * (roots[i] + roots[j]))
                })
                .sum();
            weights[i] / weight_sum * (t + shift)
        })
        .collect();
    Ok(Allocation::unchecked(amounts, t))
}

/// Constrained optimum by pairwise golden-section (ternary) search.
///
/// Starting from the split proportional to reserves, the solver sweeps over
/// every pair of pools and moves flow between the two along the edge of the
/// simplex that keeps their combined amount fixed. Each move is a unimodal
/// one-dimensional problem because the objective is concave. Sweeps repeat
/// until no pair moves by more than `tol * t`. A point no pairwise move can
/// improve satisfies the optimality conditions, so this is the global optimum.
pub fn solve_otp(market: &Market, t: f64, tol: f64) -> Result<RouteResult> {
    check_trade(t)?;
    check_tol(tol)?;
    let pools = market.pools();
    let total = market.total_reserve();
    let mut amounts: Vec<f64> = pools.iter().map(|p| t * (p.reserve() / total)).collect();
    let (last, rest) = amounts.split_last_mut().expect("market is non-empty");
    *last = (t - rest.iter().sum::<f64>()).max(0.0);

    let width = tol * t;
    let mut radius = f64::INFINITY;
    for _ in 0..MAX_SWEEPS {
        let mut moved: f64 = 0.0;
        for i in 0..pools.len() {
            for j in i + 1..pools.len() {
                let step = pair_move(&pools[i], &pools[j], &mut amounts, i, j, width, radius)?;
                moved = moved.max(step);
            }
        }
        if moved <= width {
            break;
        }
        radius = 8.0 * moved;
    }
    Ok(RouteResult::new(market, amounts, t, None))
}

const MAX_SWEEPS: usize = 100_000;

/// Optimally redistributes `amounts[i] + amounts[j]` between pools `i` and `j`.
/// The search first looks within `radius` of the current split and falls back
/// to the full edge when the optimum sits on that window's border. The current
/// split is kept unless the search finds a strictly better one. Returns the
/// distance moved.
fn pair_move(
    first: &Pool,
    second: &Pool,
    amounts: &mut [f64],
    i: usize,
    j: usize,
    width: f64,
    radius: f64,
) -> Result<f64> {
    let pair_total = amounts[i] + amounts[j];
    if pair_total <= 0.0 {
        return Ok(0.0);
    }
    let current = amounts[i].min(pair_total);
    let gain = |a: &(f64, f64), b: &(f64, f64)| pair_gain(first, second, *a, *b);
    let search = |lo: f64, hi: f64| golden_max(lo, hi, width, |y| Ok(exact_split(pair_total, y)), gain).map(|(best, _)| best.value);

    let (lo, hi) = ((current - radius).max(0.0), (current + radius).min(pair_total));
    let mut best = search(lo, hi)?;
    let on_window_edge = (best.0 == lo && lo > 0.0) || (best.0 == hi && hi < pair_total);
    if on_window_edge {
        best = search(0.0, pair_total)?;
    }
    let stay = exact_split(pair_total, current);
    if gain(&best, &stay) <= 0.0 {
        best = stay;
    }
    let step = (best.0 - amounts[i]).abs();
    amounts[i] = best.0;
    amounts[j] = best.1;
    Ok(step)
}

/// Output gained by moving from split `b` to split `a` of the same pair total.
///
/// Each pool's output change is `K (x_a - x_b)` with the secant slope
/// `K = c / ((1 + u)(1 + v))`, `u = c x_a / A`, `v = c x_b / A`. Because the
/// two splits share their total, the gain is `(a.0 - b.0) (K_first - K_second)`,
/// and the slope difference is expanded so the leading ones cancel
/// symbolically. This keeps the sign right even when the trade is many orders
/// of magnitude smaller than the reserves.
fn pair_gain(first: &Pool, second: &Pool, a: (f64, f64), b: (f64, f64)) -> f64 {
    let spread = |p: &Pool, xa: f64, xb: f64| {
        let c = p.fee_factor();
        let (u, v) = (c * xa / p.reserve(), c * xb / p.reserve());
        (u + v + u * v, (1.0 + u) * (1.0 + v))
    };
    let (w1, d1) = spread(first, a.0, b.0);
    let (w2, d2) = spread(second, a.1, b.1);
    let (c1, c2) = (first.fee_factor(), second.fee_factor());
    let numerator = (second.fee() - first.fee()) + c1 * w2 - c2 * w1;
    (a.0 - b.0) * numerator / (d1 * d2)
}

/// Splits `total` into `(left, right)` with `left ~ y` and `left + right == total`
/// exactly. Whichever part is at least `total / 2` is subtracted from `total`
/// last, which is exact by Sterbenz's lemma. Candidates compared by the search
/// must carry identical sums.
fn exact_split(total: f64, y: f64) -> (f64, f64) {
    let y = y.clamp(0.0, total);
    if y >= 0.5 * total {
        (y, total - y)
    } else {
        let right = total - y;
        (total - right, right)
    }
}

/// Amount a pool takes when its marginal price is driven down to `lambda`:
/// the inverse of `(1-s) A^2 / (A + (1-s) x)^2 = lambda`, clamped at zero.
fn inverse_marginal(pool: &Pool, lambda: f64) -> f64 {
    let c = pool.fee_factor();
    let root_lambda = lambda.sqrt();
    let x = pool.reserve() / c * (c.sqrt() - root_lambda) / root_lambda;
    x.max(0.0)
}

/// Constrained optimum by bisection on the common marginal price.
///
/// Each pool's allocation at price `lambda` is `max(0, A (sqrt((1-s)/lambda) - 1) / (1-s))`,
/// decreasing in `lambda`; bisection finds the price at which the allocations
/// sum to `t` within `tol * t`. The remaining residual is removed by a final
/// proportional rescale of the active pools.
pub fn solve_otp_waterfill(market: &Market, t: f64, tol: f64) -> Result<RouteResult> {
    check_trade(t)?;
    check_tol(tol)?;
    let pools = market.pools();
    let allocate = |lambda: f64| -> Vec<f64> { pools.iter().map(|p| inverse_marginal(p, lambda)).collect() };

    // At `hi` nothing is traded; at `lo` every pool alone would absorb `t`.
    let mut hi = pools.iter().map(Pool::fee_factor).fold(0.0, f64::max);
    let mut lo = pools
        .iter()
        .map(|p| p.marginal_price(t))
        .fold(f64::INFINITY, f64::min);

    let mut lambda = 0.5 * (lo + hi);
    let mut amounts = allocate(lambda);
    for _ in 0..200 {
        let sum: f64 = amounts.iter().sum();
        if (sum - t).abs() <= tol * t {
            break;
        }
        if sum > t {
            lo = lambda;
        } else {
            hi = lambda;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        lambda = mid;
        amounts = allocate(lambda);
    }

    let sum: f64 = amounts.iter().sum();
    if sum > 0.0 {
        let scale = t / sum;
        amounts.iter_mut().for_each(|x| *x *= scale);
    } else {
        // Only reachable when `t` is below the bisection's resolution: send
        // everything to the cheapest pool.
        let best = pools
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.fee_factor().total_cmp(&b.1.fee_factor()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        amounts[best] = t;
    }
    Ok(RouteResult::new(market, amounts, t, Some(lambda)))
}

/// Share of the optimal trade that pool `pool_index` receives as its own fee
/// moves along `fee_grid`, with the other fees held fixed.
pub fn split_fraction_curve(
    market: &Market,
    t: f64,
    pool_index: usize,
    fee_grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    market.pool(pool_index)?;
    fee_grid
        .iter()
        .map(|&fee| {
            check_fee(fee)?;
            let m = market.with_fee(pool_index, fee)?;
            let route = solve_otp(&m, t, DEFAULT_TOL)?;
            Ok((fee, route.allocation.fraction(pool_index)))
        })
        .collect()
}
