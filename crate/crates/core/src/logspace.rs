//! Log-domain arithmetic. Weights are carried as natural logs with `-inf`
//! standing for zero weight.

use std::f64::consts::LN_2;

/// `ln(exp(a) + exp(b))`.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(sum(exp(x)))` over a slice; `-inf` for an empty slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Pairwise tree reduction of partial log-sums. The reduction shape depends
/// only on the input length, so results are independent of how the partial
/// sums were produced.
pub fn log_sum_exp_tree(mut partials: Vec<f64>) -> f64 {
    if partials.is_empty() {
        return f64::NEG_INFINITY;
    }
    while partials.len() > 1 {
        partials = partials
            .chunks(2)
            .map(|pair| match pair {
                [a, b] => log_add_exp(*a, *b),
                [a] => *a,
                _ => unreachable!(),
            })
            .collect();
    }
    partials[0]
}

/// `ln(2^hi - 2^lo)` for `lo < hi`.
///
/// For adjacent exponents this is exactly `lo * ln 2`, which keeps slice
/// widths of neighbouring quantiles bit-identical wherever they are computed.
pub fn ln_pow2_diff(lo: usize, hi: usize) -> f64 {
    debug_assert!(lo < hi);
    let gap = (hi - lo) as f64;
    let base = lo as f64 * LN_2;
    if hi - lo == 1 {
        base
    } else {
        base + gap * LN_2 + (-(-gap).exp2()).ln_1p()
    }
}

#[inline]
pub fn ln_to_log10(x: f64) -> f64 {
    x / std::f64::consts::LN_10
}
