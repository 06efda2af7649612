//! Scalar helpers shared by the density code.

/// `0.5 * ln(2π)`.
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// `0.5 * ln(2πe)`, the entropy of a unit-variance Gaussian coordinate.
pub const HALF_LN_2PI_E: f64 = 1.418_938_533_204_672_7;

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

/// Max-shifted `ln(Σ exp(x_i))`. Returns `-inf` for an empty slice or when
/// every term is `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for &x in xs {
        if x > max {
            max = x;
        }
    }
    if !max.is_finite() {
        return max;
    }
    let mut sum = 0.0;
    for &x in xs {
        sum += exp(x - max);
    }
    max + ln(sum)
}

/// Normalizes log-weights in place so that `Σ exp(w_i) = 1`.
pub fn normalize_log_weights(ws: &mut [f64]) {
    let z = log_sum_exp(ws);
    for w in ws.iter_mut() {
        *w -= z;
    }
}

/// Mean and standard error of the mean.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, sqrt(var / n))
}

/// Empirical quantile with the "lower" convention: the `ceil(q·n)`-th
/// smallest value (1-based), clamped to the sample range. `q = 1` returns the
/// maximum.
pub fn lower_quantile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    let rank = libm::ceil(q * n as f64) as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Binomial standard error of a proportion.
pub fn binomial_stderr(p: f64, trials: usize) -> f64 {
    sqrt((p * (1.0 - p)).max(0.0) / trials as f64)
}
