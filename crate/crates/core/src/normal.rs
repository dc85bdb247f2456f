//! Standard normal distribution helpers.

use statrs::distribution::{ContinuousCDF, Normal};

fn standard() -> Normal {
    Normal::standard()
}

/// Standard normal CDF.
pub fn cdf(x: f64) -> f64 {
    standard().cdf(x)
}

/// Upper tail `1 - Φ(x)`, accurate for large `x`.
pub fn sf(x: f64) -> f64 {
    standard().sf(x)
}

/// Standard normal quantile for `p` in (0, 1).
pub fn quantile(p: f64) -> f64 {
    standard().inverse_cdf(p)
}

/// Two-sided critical value `z` with `P(|Z| <= z) = level`.
pub fn two_sided_critical(level: f64) -> f64 {
    quantile(0.5 * (1.0 + level))
}
