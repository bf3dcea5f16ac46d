//! Reference computations for integration tests. Nothing here calls the
//! solvers under test; each oracle is a direct evaluation or a brute-force
//! search.
#![allow(dead_code)]

use cfmm_fees::Market;

/// Constant-product output written straight from the swap invariant
/// `(A + c x)(A - r) = A^2`.
pub fn naive_output(reserve: f64, fee: f64, x: f64) -> f64 {
    let after = reserve + (1.0 - fee) * x;
    reserve - reserve * reserve / after
}

/// Total output of an allocation, evaluated with [`naive_output`].
pub fn naive_total(market: &Market, amounts: &[f64]) -> f64 {
    market
        .pools()
        .iter()
        .zip(amounts)
        .map(|(p, &x)| naive_output(p.reserve(), p.fee(), x))
        .sum()
}

/// Marginal price by centered differences of [`naive_output`].
pub fn numeric_marginal(reserve: f64, fee: f64, x: f64) -> f64 {
    let h = 1e-4 * (reserve + x);
    let lo = (x - h).max(0.0);
    (naive_output(reserve, fee, x + h) - naive_output(reserve, fee, lo)) / (x + h - lo)
}

/// Best split fraction of a two-pool market: a grid with step 1e-6 followed
/// by ternary refinement around the best grid point.
pub fn brute_force_two_pool(market: &Market, t: f64) -> f64 {
    let total = |f: f64| naive_total(market, &[f * t, (1.0 - f) * t]);
    let mut best = (0.0, total(0.0));
    for k in 1..=1_000_000 {
        let f = k as f64 * 1e-6;
        let v = total(f);
        if v > best.1 {
            best = (f, v);
        }
    }
    let (mut lo, mut hi) = ((best.0 - 1e-6).max(0.0), (best.0 + 1e-6).min(1.0));
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if total(m1) >= total(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let mid = 0.5 * (lo + hi);
    [0.0, mid, 1.0].into_iter().fold((0.0, f64::NEG_INFINITY), |acc, f| {
        let v = total(f);
        if v > acc.1 {
            (f, v)
        } else {
            acc
        }
    })
    .0
}

/// Arg max and max of `f` over `lo, lo + step, ..., hi`.
pub fn grid_argmax(lo: f64, hi: f64, step: f64, mut f: impl FnMut(f64) -> f64) -> (f64, f64) {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n)
        .map(|k| lo + k as f64 * step)
        .map(|x| (x, f(x)))
        .fold((lo, f64::NEG_INFINITY), |acc, p| if p.1 > acc.1 { p } else { acc })
}
