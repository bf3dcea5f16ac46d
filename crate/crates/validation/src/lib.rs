//! Independent reference checks for the `cfmm-fees` acceptance suite.
//! Nothing here calls the solvers under test.

use rand::Rng;

/// Sample whose logarithm is uniform on `[ln lo, ln hi)`.
pub fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// Arg max and max of `f` over `lo, lo + step, ..., hi`.
pub fn grid_argmax(lo: f64, hi: f64, step: f64, mut f: impl FnMut(f64) -> f64) -> (f64, f64) {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n)
        .map(|k| lo + k as f64 * step)
        .map(|x| (x, f(x)))
        .fold((lo, f64::NEG_INFINITY), |acc, p| if p.1 > acc.1 { p } else { acc })
}

/// Quasiconcavity of a sampled curve: nondecreasing up to its maximum and
/// nonincreasing after it, up to a relative slack.
pub fn rises_then_falls(values: &[f64], slack: f64) -> bool {
    let Some((peak, _)) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
    else {
        return true;
    };
    let ok = |a: f64, b: f64| b >= a - slack * a.abs().max(b.abs());
    values[..=peak].windows(2).all(|w| ok(w[0], w[1])) && values[peak..].windows(2).all(|w| ok(w[1], w[0]))
}

/// Number of maximal runs of `true`.
pub fn count_runs(mask: &[bool]) -> usize {
    mask.iter()
        .enumerate()
        .filter(|&(k, &b)| b && (k == 0 || !mask[k - 1]))
        .count()
}
