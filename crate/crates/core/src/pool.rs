//! Pools, markets and the constant-product trade function.
//!
//! Pools are stored after normalizing the target-token unit so that both
//! reserves are equal (`A = B`). A pool is then fully described by its
//! reserve `A` (in source tokens) and its fee fraction `s`, and trading `x`
//! source tokens returns
//!
//! ```text
//! r(x) = A - A^2 / (A + (1 - s) x)
//! ```
//!
//! target tokens.

use serde::Serialize;

use crate::error::{Error, Result};

/// Contract for a pool's trade function `r: [0, inf) -> [0, bound)`.
///
/// Implementations must be increasing, concave, continuous and satisfy
/// `r(0) = 0`. Callers guarantee non-negative finite inputs.
pub trait TradeFunction {
    fn output(&self, x: f64) -> f64;

    fn marginal_price(&self, x: f64) -> f64;

    /// `r(a) - r(b)`.
    ///
    /// Solvers compare nearly optimal allocations through this difference, so
    /// implementations should avoid the cancellation of the naive form.
    fn output_difference(&self, a: f64, b: f64) -> f64 {
        self.output(a) - self.output(b)
    }

    /// Supremum of `output`.
    fn output_bound(&self) -> f64;
}

/// A balanced constant-product pool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Pool {
    reserve: f64,
    fee: f64,
}

impl Pool {
    pub fn new(reserve: f64, fee: f64) -> Result<Self> {
        if !(reserve.is_finite() && reserve > 0.0) {
            return Err(Error::domain(format!("reserve must be positive, got {reserve}")));
        }
        check_fee(fee)?;
        Ok(Pool { reserve, fee })
    }

    pub fn reserve(&self) -> f64 {
        self.reserve
    }

    pub fn fee(&self) -> f64 {
        self.fee
    }

    /// Pool size in source tokens, `2A`.
    pub fn size(&self) -> f64 {
        2.0 * self.reserve
    }

    pub fn with_fee(&self, fee: f64) -> Result<Self> {
        Pool::new(self.reserve, fee)
    }

    /// `1 - s`, the fraction of the input that reaches the curve.
    pub fn fee_factor(&self) -> f64 {
        1.0 - self.fee
    }
}

pub(crate) fn check_fee(fee: f64) -> Result<()> {
    if fee.is_finite() && (0.0..1.0).contains(&fee) {
        Ok(())
    } else {
        Err(Error::domain(format!("fee must lie in [0, 1), got {fee}")))
    }
}

impl TradeFunction for Pool {
    fn output(&self, x: f64) -> f64 {
        // Algebraically equal to A - A^2/(A + c x) without the cancellation.
        let a = self.reserve;
        let cx = self.fee_factor() * x;
        a * cx / (a + cx)
    }

    fn marginal_price(&self, x: f64) -> f64 {
        let a = self.reserve;
        let c = self.fee_factor();
        let d = a + c * x;
        c * (a / d) * (a / d)
    }

    fn output_difference(&self, a: f64, b: f64) -> f64 {
        let r = self.reserve;
        let c = self.fee_factor();
        (r / (r + c * a)) * (r * c * (a - b) / (r + c * b))
    }

    fn output_bound(&self) -> f64 {
        self.reserve
    }
}

fn check_amount(x: f64) -> Result<()> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("trade amount must be non-negative, got {x}")))
    }
}

/// Target tokens received for `x` source tokens.
pub fn trade_output(pool: &Pool, x: f64) -> Result<f64> {
    check_amount(x)?;
    Ok(pool.output(x))
}

/// Derivative of [`trade_output`] at `x`.
pub fn marginal_price(pool: &Pool, x: f64) -> Result<f64> {
    check_amount(x)?;
    Ok(pool.marginal_price(x))
}

/// Balanced pools trading the same token pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Market {
    pools: Vec<Pool>,
}

impl Market {
    pub fn new(pools: Vec<Pool>) -> Result<Self> {
        if pools.is_empty() {
            return Err(Error::domain("a market needs at least one pool"));
        }
        Ok(Market { pools })
    }

    /// Builds a market from `(reserve, fee)` pairs.
    pub fn from_params(params: &[(f64, f64)]) -> Result<Self> {
        let pools = params
            .iter()
            .map(|&(reserve, fee)| Pool::new(reserve, fee))
            .collect::<Result<Vec<_>>>()?;
        Market::new(pools)
    }

    pub fn pools(&self) -> &[Pool] {
        &self.pools
    }

    pub fn pool(&self, i: usize) -> Result<&Pool> {
        self.pools
            .get(i)
            .ok_or_else(|| Error::domain(format!("pool index {i} out of range for {} pools", self.len())))
    }

    pub fn len(&self) -> usize {
        self.pools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pools.is_empty()
    }

    pub fn fees(&self) -> Vec<f64> {
        self.pools.iter().map(Pool::fee).collect()
    }

    pub fn total_reserve(&self) -> f64 {
        self.pools.iter().map(Pool::reserve).sum()
    }

    /// Same reserves, fees replaced entry by entry.
    pub fn with_fees(&self, fees: &[f64]) -> Result<Self> {
        if fees.len() != self.len() {
            return Err(Error::domain(format!(
                "expected {} fees, got {}",
                self.len(),
                fees.len()
            )));
        }
        let pools = self
            .pools
            .iter()
            .zip(fees)
            .map(|(p, &f)| p.with_fee(f))
            .collect::<Result<Vec<_>>>()?;
        Ok(Market { pools })
    }

    pub fn with_fee(&self, i: usize, fee: f64) -> Result<Self> {
        let pool = self.pool(i)?.with_fee(fee)?;
        let mut pools = self.pools.clone();
        pools[i] = pool;
        Ok(Market { pools })
    }

    /// Total target tokens for a split, `sum r_i(x_i)`.
    pub fn output(&self, amounts: &[f64]) -> f64 {
        self.pools.iter().zip(amounts).map(|(p, &x)| p.output(x)).sum()
    }
}

/// A split of a trade across the pools of a market.
///
/// Allocations produced by the constrained solvers are feasible (non-negative
/// and summing to `total`). The raw closed form may carry negative entries;
/// see [`Allocation::is_feasible`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Allocation {
    amounts: Vec<f64>,
    total: f64,
}

/// Relative slack on `sum x_i == total`.
pub const SUM_TOLERANCE: f64 = 1e-9;

impl Allocation {
    /// Validated constructor: entries non-negative, sum equal to `total`.
    pub fn new(amounts: Vec<f64>, total: f64) -> Result<Self> {
        let alloc = Allocation { amounts, total };
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::domain(format!("trade size must be positive, got {total}")));
        }
        if !alloc.is_feasible() {
            return Err(Error::domain(format!(
                "allocation {:?} is not a non-negative split of {total}",
                alloc.amounts
            )));
        }
        Ok(alloc)
    }

    pub(crate) fn unchecked(amounts: Vec<f64>, total: f64) -> Self {
        Allocation { amounts, total }
    }

    pub fn amounts(&self) -> &[f64] {
        &self.amounts
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.amounts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amounts.is_empty()
    }

    /// Share of the trade routed to pool `i`.
    pub fn fraction(&self, i: usize) -> f64 {
        self.amounts[i] / self.total
    }

    pub fn sum_error(&self) -> f64 {
        (self.amounts.iter().sum::<f64>() - self.total).abs()
    }

    pub fn is_feasible(&self) -> bool {
        self.amounts.iter().all(|&x| x.is_finite() && x >= 0.0)
            && self.sum_error() <= SUM_TOLERANCE * self.total
    }

    pub fn into_amounts(self) -> Vec<f64> {
        self.amounts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(a: f64, s: f64) -> Pool {
        Pool::new(a, s).unwrap()
    }

    #[test]
    fn zero_input_gives_zero_output() {
        assert_eq!(trade_output(&pool(1e6, 0.003), 0.0).unwrap(), 0.0);
    }

    #[test]
    fn output_vanishes_as_fee_approaches_one() {
        assert!(trade_output(&pool(1e6, 0.999_999), 1000.0).unwrap() < 0.002);
    }

    #[test]
    fn output_matches_exact_rational() {
        // 1e6 * 997 / 1_000_997
        let expected = 996.006_981_039_903_2;
        let got = trade_output(&pool(1e6, 0.003), 1000.0).unwrap();
        assert!((got - expected).abs() < 1e-9, "{got}");
    }

    #[test]
    fn marginal_price_examples() {
        assert_eq!(marginal_price(&pool(1e6, 0.0), 0.0).unwrap(), 1.0);
        assert!((marginal_price(&pool(1e6, 0.003), 0.0).unwrap() - 0.997).abs() < 1e-15);
        let p = pool(1e6, 0.003);
        let got = marginal_price(&p, 1000.0).unwrap();
        let h = 1e-3;
        let fd = (p.output(1000.0 + h) - p.output(1000.0 - h)) / (2.0 * h);
        assert!((got - 0.995_015).abs() < 1e-6, "{got}");
        assert!((got - fd).abs() < 1e-6 * got);
    }

    #[test]
    fn negative_amounts_are_rejected() {
        let p = pool(1e6, 0.003);
        assert!(matches!(trade_output(&p, -1.0), Err(Error::Domain(_))));
        assert!(matches!(marginal_price(&p, -1e-12), Err(Error::Domain(_))));
        assert!(trade_output(&p, f64::NAN).is_err());
    }

    #[test]
    fn pool_invariants_are_enforced() {
        assert!(Pool::new(0.0, 0.003).is_err());
        assert!(Pool::new(-5.0, 0.003).is_err());
        assert!(Pool::new(1.0, 1.0).is_err());
        assert!(Pool::new(1.0, -0.1).is_err());
        assert_eq!(pool(3e6, 0.0).size(), 6e6);
        assert!(Market::new(vec![]).is_err());
    }

    #[test]
    fn output_difference_agrees_with_naive_form() {
        let p = pool(2e6, 0.01);
        for &(a, b) in &[(10.0, 3.0), (0.0, 700.0), (5e5, 5e5 + 1.0)] {
            let naive = p.output(a) - p.output(b);
            assert!((p.output_difference(a, b) - naive).abs() <= 1e-9 * naive.abs().max(1e-9));
        }
    }

    #[test]
    fn allocation_validation() {
        assert!(Allocation::new(vec![1.0, 2.0], 3.0).is_ok());
        assert!(Allocation::new(vec![-1.0, 4.0], 3.0).is_err());
        assert!(Allocation::new(vec![1.0, 2.1], 3.0).is_err());
        assert!(Allocation::new(vec![0.0], 0.0).is_err());
    }
}
