//! Ratio estimation and confidence intervals from (noisy) sums.
//!
//! Everything here is post-processing of [`ReleasedSums`]; nothing touches
//! raw records. Three variance strategies are provided:
//!
//! - **no correction**: plug the noisy sums into the usual weighted plug-in
//!   moments and the delta-method variance, ignoring the injected noise;
//! - **Monte Carlo**: re-noise the two ratio sums `B` times at the release
//!   variances and add the empirical spread of the re-noised ratio;
//! - **analytical**: add the release noise variances of `Σws` and `Σwy` to
//!   the sum-scale variance terms before applying the delta method.
//!
//! Intervals are Wald intervals on either the ratio or the log-ratio scale.

use rand::Rng;
use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::mechanisms::ReleasedSums;
use crate::normal;
use crate::sums::{SumVector, Sums};

/// Default number of Monte Carlo re-noising draws.
pub const DEFAULT_MC_DRAWS: usize = 200;

/// Rejected Monte Carlo draws allowed per requested draw.
pub const MC_REJECTION_FACTOR: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Ratio,
    Log,
}

impl Scale {
    pub fn name(self) -> &'static str {
        match self {
            Scale::Ratio => "ratio",
            Scale::Log => "log",
        }
    }

    /// Maps a ratio-scale value onto this scale.
    pub fn transform(self, ratio: f64) -> f64 {
        match self {
            Scale::Ratio => ratio,
            Scale::Log => ratio.ln(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Public,
    NoCorrection,
    MonteCarlo,
    Analytical,
}

impl Method {
    pub const PRIVATE: [Method; 3] = [Method::NoCorrection, Method::MonteCarlo, Method::Analytical];

    pub fn name(self) -> &'static str {
        match self {
            Method::Public => "public",
            Method::NoCorrection => "no_correction",
            Method::MonteCarlo => "monte_carlo",
            Method::Analytical => "analytical",
        }
    }
}

/// Diagnostics raised when a plug-in quantity had to be floored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    NegativeScoreVariance,
    NegativeLabelVariance,
    NegativeDeltaVariance,
    CovarianceExceedsVariances,
}

/// Plug-in means, variances of the means and their covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mu_s: f64,
    pub mu_y: f64,
    pub var_s_bar: f64,
    pub var_y_bar: f64,
    pub cov_ys_bar: f64,
    pub flags: Vec<Flag>,
}

impl Moments {
    /// Moments with no diagnostics attached.
    pub fn new(mu_s: f64, mu_y: f64, var_s_bar: f64, var_y_bar: f64, cov_ys_bar: f64) -> Self {
        Self {
            mu_s,
            mu_y,
            var_s_bar,
            var_y_bar,
            cov_ys_bar,
            flags: Vec::new(),
        }
    }
}

/// Weighted plug-in moments from a set of sums.
///
/// The mean is `Σwx/Σw`; the variance of the mean is
/// `(Σw²/(Σw)²)·(Σwx²/Σw − (Σwx/Σw)²)` and the covariance is formed the same
/// way from `Σwys`. Negative variances are floored at zero and flagged.
pub fn moments_from_sums(sums: &Sums) -> Result<Moments> {
    let w = sums.sum_w;
    if !(w > 0.0) || !sums.is_finite() {
        return Err(Error::DegenerateDenominator(format!(
            "sum of weights must be positive and finite, got {w}"
        )));
    }
    let mu_s = sums.sum_ws / w;
    let mu_y = sums.sum_wy / w;
    let design = sums.sum_w2 / (w * w);
    let mut var_s_bar = design * (sums.sum_ws2 / w - mu_s * mu_s);
    let mut var_y_bar = design * (sums.sum_wy2 / w - mu_y * mu_y);
    let cov_ys_bar = design * (sums.sum_wys / w - sums.sum_wy * sums.sum_ws / (w * w));

    let mut flags = Vec::new();
    if var_s_bar < 0.0 {
        var_s_bar = 0.0;
        flags.push(Flag::NegativeScoreVariance);
    }
    if var_y_bar < 0.0 {
        var_y_bar = 0.0;
        flags.push(Flag::NegativeLabelVariance);
    }
    if cov_ys_bar * cov_ys_bar > var_s_bar * var_y_bar {
        flags.push(Flag::CovarianceExceedsVariances);
    }
    Ok(Moments {
        mu_s,
        mu_y,
        var_s_bar,
        var_y_bar,
        cov_ys_bar,
        flags,
    })
}

/// Moments computed from the noisy sums of a release.
pub fn plug_in_moments(released: &ReleasedSums) -> Result<Moments> {
    moments_from_sums(&released.values)
}

/// Delta-method variance before flooring.
fn raw_delta_variance(scale: Scale, m: &Moments) -> Result<f64> {
    if m.mu_y == 0.0 {
        return Err(Error::DegenerateDenominator("mean label is zero".into()));
    }
    match scale {
        Scale::Ratio => {
            let (mu_s, mu_y) = (m.mu_s, m.mu_y);
            let mu_y2 = mu_y * mu_y;
            Ok(
                m.var_s_bar / mu_y2 - 2.0 * mu_s / (mu_y2 * mu_y) * m.cov_ys_bar
                    + mu_s * mu_s / (mu_y2 * mu_y2) * m.var_y_bar,
            )
        }
        Scale::Log => {
            if m.mu_s == 0.0 {
                return Err(Error::DegenerateNumerator("mean score is zero".into()));
            }
            let (mu_s, mu_y) = (m.mu_s, m.mu_y);
            Ok(
                m.var_s_bar / (mu_s * mu_s) - 2.0 / (mu_s * mu_y) * m.cov_ys_bar
                    + m.var_y_bar / (mu_y * mu_y),
            )
        }
    }
}

/// Asymptotic variance of `s̄/ȳ`, floored at zero.
pub fn ratio_variance(m: &Moments) -> Result<f64> {
    raw_delta_variance(Scale::Ratio, m).map(|v| v.max(0.0))
}

/// Asymptotic variance of `ln(s̄/ȳ)`, floored at zero.
pub fn log_ratio_variance(m: &Moments) -> Result<f64> {
    raw_delta_variance(Scale::Log, m).map(|v| v.max(0.0))
}

fn floored_delta_variance(scale: Scale, m: &Moments, flags: &mut Vec<Flag>) -> Result<f64> {
    let raw = raw_delta_variance(scale, m)?;
    if raw < 0.0 {
        flags.push(Flag::NegativeDeltaVariance);
        Ok(0.0)
    } else {
        Ok(raw)
    }
}

/// Ratio of the numerator and denominator sums on the requested scale.
fn ratio_of_sums(numerator: f64, denominator: f64, scale: Scale) -> Result<f64> {
    if !(denominator > 0.0) {
        return Err(Error::DegenerateDenominator(format!(
            "label sum must be positive, got {denominator}"
        )));
    }
    match scale {
        Scale::Ratio => Ok(numerator / denominator),
        Scale::Log => {
            if !(numerator > 0.0) {
                return Err(Error::DegenerateNumerator(format!(
                    "score sum must be positive on the log scale, got {numerator}"
                )));
            }
            Ok((numerator / denominator).ln())
        }
    }
}

/// Point estimate `(Σws)_dp / (Σwy)_dp`, or its logarithm.
pub fn point_estimate(released: &ReleasedSums, scale: Scale) -> Result<f64> {
    ratio_of_sums(released.values.sum_ws, released.values.sum_wy, scale)
}

/// Wald interval `point ± z·√variance` at the given two-sided level.
pub fn wald_interval(point: f64, variance: f64, level: f64) -> (f64, f64) {
    let half = normal::two_sided_critical(level) * variance.max(0.0).sqrt();
    (point - half, point + half)
}

/// A point estimate with its variance and Wald interval.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioEstimate {
    pub point: f64,
    pub variance: f64,
    pub scale: Scale,
    pub method: Method,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub level: f64,
    pub flags: Vec<Flag>,
}

impl RatioEstimate {
    fn build(
        point: f64,
        variance: f64,
        scale: Scale,
        method: Method,
        level: f64,
        flags: Vec<Flag>,
    ) -> Self {
        let (ci_lower, ci_upper) = wald_interval(point, variance, level);
        Self {
            point,
            variance,
            scale,
            method,
            ci_lower,
            ci_upper,
            level,
            flags,
        }
    }

    pub fn width(&self) -> f64 {
        self.ci_upper - self.ci_lower
    }

    pub fn covers(&self, truth: f64) -> bool {
        self.ci_lower <= truth && truth <= self.ci_upper
    }

    /// Interval mapped back to the ratio scale.
    pub fn ratio_interval(&self) -> (f64, f64) {
        match self.scale {
            Scale::Ratio => (self.ci_lower, self.ci_upper),
            Scale::Log => (self.ci_lower.exp(), self.ci_upper.exp()),
        }
    }
}

impl Serialize for RatioEstimate {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = serializer.serialize_struct("RatioEstimate", 7)?;
        st.serialize_field("point", &self.point)?;
        st.serialize_field("variance", &self.variance)?;
        st.serialize_field("scale", &self.scale)?;
        st.serialize_field("method", &self.method)?;
        st.serialize_field("ci", &[self.ci_lower, self.ci_upper])?;
        st.serialize_field("level", &self.level)?;
        st.serialize_field("flags", &self.flags)?;
        st.end()
    }
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "level must lie in (0, 1), got {level}"
        )))
    }
}

/// Estimate from `sums` with the plug-in variance, optionally inflated by
/// per-sum noise variances of `Σws` and `Σwy`.
fn delta_method_estimate(
    sums: &Sums,
    noise: Option<(f64, f64)>,
    scale: Scale,
    level: f64,
    method: Method,
) -> Result<RatioEstimate> {
    check_level(level)?;
    let point = ratio_of_sums(sums.sum_ws, sums.sum_wy, scale)?;
    let mut m = moments_from_sums(sums)?;
    if let Some((noise_ws, noise_wy)) = noise {
        // Adding σ²_noise to the sum-scale variance W²·σ²_x̄ and dividing back
        // by W² is the same as adding σ²_noise/W² to the mean-scale variance;
        // the delta-method formula is invariant to the common W scaling.
        let w2 = sums.sum_w * sums.sum_w;
        m.var_s_bar += noise_ws / w2;
        m.var_y_bar += noise_wy / w2;
    }
    let mut flags = std::mem::take(&mut m.flags);
    let variance = floored_delta_variance(scale, &m, &mut flags)?;
    Ok(RatioEstimate::build(
        point, variance, scale, method, level, flags,
    ))
}

/// Non-private estimate from exact sums.
pub fn public_estimate(sums: &SumVector, scale: Scale, level: f64) -> Result<RatioEstimate> {
    if sums.count < 2 {
        return Err(Error::InsufficientData(sums.count));
    }
    delta_method_estimate(&sums.sums, None, scale, level, Method::Public)
}

/// Interval that ignores the injected noise.
pub fn ci_no_correction(
    released: &ReleasedSums,
    scale: Scale,
    level: f64,
) -> Result<RatioEstimate> {
    delta_method_estimate(&released.values, None, scale, level, Method::NoCorrection)
}

/// Interval whose variance includes the release noise of the two ratio sums.
pub fn ci_analytical(released: &ReleasedSums, scale: Scale, level: f64) -> Result<RatioEstimate> {
    let noise = (
        released.noise_variance.sum_ws,
        released.noise_variance.sum_wy,
    );
    delta_method_estimate(
        &released.values,
        Some(noise),
        scale,
        level,
        Method::Analytical,
    )
}

/// Extra variance of the ratio from re-noising `Σws` and `Σwy` `draws` times.
///
/// Draws that make the ratio undefined on `scale` are rejected and redrawn;
/// more than `MC_REJECTION_FACTOR · draws` rejections is an error.
pub fn monte_carlo_extra_variance<R: Rng + ?Sized>(
    released: &ReleasedSums,
    scale: Scale,
    draws: usize,
    rng: &mut R,
) -> Result<f64> {
    if draws < 2 {
        return Err(Error::InvalidConfig(format!(
            "monte carlo needs at least 2 draws, got {draws}"
        )));
    }
    let numerator = released.values.sum_ws;
    let denominator = released.values.sum_wy;
    let center = ratio_of_sums(numerator, denominator, scale)?;
    let var_s = released.noise_variance.sum_ws;
    let var_y = released.noise_variance.sum_wy;
    if !(var_s >= 0.0 && var_y >= 0.0 && var_s.is_finite() && var_y.is_finite()) {
        return Err(Error::InvalidSums(format!(
            "noise variances must be non-negative and finite, got {var_s} and {var_y}"
        )));
    }
    let mechanism = released.mechanism;

    mean_squared_deviation(draws, center, || {
        let e_s = mechanism.sample_noise(var_s, rng);
        let e_y = mechanism.sample_noise(var_y, rng);
        ratio_of_sums(numerator + e_s, denominator + e_y, scale).ok()
    })
}

/// Mean of `(r_b - center)²` over `draws` accepted values of `draw`. `None`
/// marks a rejected draw.
fn mean_squared_deviation(
    draws: usize,
    center: f64,
    mut draw: impl FnMut() -> Option<f64>,
) -> Result<f64> {
    let cap = MC_REJECTION_FACTOR * draws;
    let mut rejected = 0;
    let mut accepted = 0;
    let mut total = 0.0;
    while accepted < draws {
        match draw() {
            Some(r) => {
                let d = r - center;
                total += d * d;
                accepted += 1;
            }
            None => {
                rejected += 1;
                if rejected > cap {
                    return Err(Error::MonteCarloExhausted { rejected, cap });
                }
            }
        }
    }
    Ok(total / draws as f64)
}

/// No-correction variance plus the Monte Carlo extra variance.
pub fn ci_monte_carlo<R: Rng + ?Sized>(
    released: &ReleasedSums,
    scale: Scale,
    level: f64,
    draws: usize,
    rng: &mut R,
) -> Result<RatioEstimate> {
    let base = ci_no_correction(released, scale, level)?;
    let extra = monte_carlo_extra_variance(released, scale, draws, rng)?;
    Ok(RatioEstimate::build(
        base.point,
        base.variance + extra,
        scale,
        Method::MonteCarlo,
        level,
        base.flags,
    ))
}

/// Two-sided z-test of equal ratios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoRatioTest {
    pub difference: f64,
    pub variance: f64,
    pub z_statistic: f64,
    pub p_value: f64,
}

pub fn two_ratio_test(a: &RatioEstimate, b: &RatioEstimate) -> Result<TwoRatioTest> {
    if a.scale != b.scale {
        return Err(Error::ScaleMismatch);
    }
    let variance = a.variance + b.variance;
    if !(variance > 0.0) {
        return Err(Error::DegenerateVariance);
    }
    let difference = a.point - b.point;
    let z = difference / variance.sqrt();
    Ok(TwoRatioTest {
        difference,
        variance,
        z_statistic: z,
        p_value: (2.0 * normal::sf(z.abs())).min(1.0),
    })
}
