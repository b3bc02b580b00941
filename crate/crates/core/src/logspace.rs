//! Log-space arithmetic helpers.
//!
//! Zero probabilities are represented as `f64::NEG_INFINITY` and propagate
//! through every helper without producing NaN.

pub const NEG_INF: f64 = f64::NEG_INFINITY;

/// Relative tolerance under which two log scores count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// `ln(p)` with `ln(0) = -inf`.
#[inline]
pub fn ln(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        NEG_INF
    }
}

/// Stable `ln(exp(a) + exp(b))`.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == NEG_INF {
        return b;
    }
    if b == NEG_INF {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Stable `ln(sum_i exp(xs_i))`. Empty or all `-inf` input yields `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(NEG_INF, f64::max);
    if max == NEG_INF {
        return NEG_INF;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Whether `candidate` beats `best` by more than the tie tolerance.
#[inline]
pub fn strictly_greater(candidate: f64, best: f64) -> bool {
    if best == NEG_INF {
        return candidate > NEG_INF;
    }
    if candidate == NEG_INF {
        return false;
    }
    candidate - best > TIE_TOLERANCE * best.abs().max(1.0)
}

/// Index of the maximum, smallest index on ties (within the tie tolerance).
pub fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if strictly_greater(v, values[best]) {
            best = i;
        }
    }
    best
}

/// Index of the minimum, smallest index on ties (within the tie tolerance).
pub fn argmin_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if strictly_greater(-v, -values[best]) {
            best = i;
        }
    }
    best
}
