//! Derivative-free maximization of unimodal functions on an interval.

use crate::error::Result;

const INV_PHI: f64 = 0.618_033_988_749_894_8;
const MAX_ITERS: usize = 400;

/// A probe point together with whatever the objective produced there.
#[derive(Debug, Clone)]
pub(crate) struct Probe<T> {
    pub x: f64,
    pub value: T,
}

/// Golden-section search for the maximum of a unimodal objective on `[lo, hi]`.
///
/// `eval` produces the objective's payload at a point; `gain(a, b)` returns
/// `f(a) - f(b)`. Working with differences instead of values lets callers
/// compare nearly optimal candidates without catastrophic cancellation.
///
/// The bracket is shrunk until narrower than `width`. Ties keep the left part
/// of the bracket, and the final pick prefers the smallest point among equal
/// maxima, so flat tops resolve to their left edge. Both bracket ends are
/// evaluated at the end, which lets boundary optima come out exact.
pub(crate) fn golden_max<T>(
    lo: f64,
    hi: f64,
    width: f64,
    mut eval: impl FnMut(f64) -> Result<T>,
    mut gain: impl FnMut(&T, &T) -> f64,
) -> Result<(Probe<T>, usize)> {
    let (mut a, mut b) = (lo, hi);
    let mut evals = 0;
    let mut probe = |x: f64, evals: &mut usize| -> Result<Probe<T>> {
        *evals += 1;
        Ok(Probe { x, value: eval(x)? })
    };

    if b - a <= width {
        let left = probe(a, &mut evals)?;
        let right = probe(b, &mut evals)?;
        let best = if gain(&right.value, &left.value) > 0.0 { right } else { left };
        return Ok((best, evals));
    }

    let mut p1 = probe(b - INV_PHI * (b - a), &mut evals)?;
    let mut p2 = probe(a + INV_PHI * (b - a), &mut evals)?;
    let mut iters = 0;
    while b - a > width && iters < MAX_ITERS {
        iters += 1;
        if gain(&p1.value, &p2.value) >= 0.0 {
            b = p2.x;
            p2 = p1;
            p1 = probe(b - INV_PHI * (b - a), &mut evals)?;
        } else {
            a = p1.x;
            p1 = p2;
            p2 = probe(a + INV_PHI * (b - a), &mut evals)?;
        }
        // Points can cross once the bracket is a few ulps wide.
        if p1.x > p2.x {
            std::mem::swap(&mut p1, &mut p2);
        }
    }

    let left = probe(a, &mut evals)?;
    let right = probe(b, &mut evals)?;
    let mut best = left;
    for cand in [p1, p2, right] {
        if gain(&cand.value, &best.value) > 0.0 {
            best = cand;
        }
    }
    Ok((best, evals))
}
