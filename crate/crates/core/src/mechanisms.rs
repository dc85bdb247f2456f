//! Noise calibration and release of privatized sums.
//!
//! Each distinct sum of a [`Profile`] is released once with independent noise
//! at an even share of the total budget (basic composition). Aliased sums
//! mirror the value of the sum they duplicate.
//!
//! - Gaussian: `σ = Δ·√(2·ln(1.25/δ))/ε`, (ε, δ)-DP with δ > 0.
//! - Laplace: scale `b = Δ/ε`, variance `2b²`, pure ε-DP (δ = 0).

use rand::distr::{Distribution, Open01};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sums::{sensitivity, Bounds, Profile, SumVector, Sums};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        let budget = PrivacyBudget { epsilon, delta };
        budget.validate()?;
        Ok(budget)
    }

    pub fn pure(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidBudget(format!(
                "epsilon must be positive and finite, got {}",
                self.epsilon
            )));
        }
        if !(0.0..1.0).contains(&self.delta) {
            return Err(Error::InvalidBudget(format!(
                "delta must lie in [0, 1), got {}",
                self.delta
            )));
        }
        Ok(())
    }

    /// Checks the δ convention of `mechanism`.
    pub fn validate_for(&self, mechanism: MechanismKind) -> Result<()> {
        self.validate()?;
        match mechanism {
            MechanismKind::Gaussian if self.delta == 0.0 => Err(Error::MechanismMismatch(
                "the Gaussian mechanism requires delta > 0".into(),
            )),
            MechanismKind::Laplace if self.delta != 0.0 => Err(Error::MechanismMismatch(format!(
                "the Laplace mechanism is pure epsilon-DP and requires delta = 0, got {}",
                self.delta
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MechanismKind {
    Gaussian,
    Laplace,
}

impl MechanismKind {
    pub fn name(self) -> &'static str {
        match self {
            MechanismKind::Gaussian => "gaussian",
            MechanismKind::Laplace => "laplace",
        }
    }

    /// Variance of the noise added to a sum with the given sensitivity.
    pub fn noise_variance(self, sensitivity: f64, per_sum: &PrivacyBudget) -> Result<f64> {
        match self {
            MechanismKind::Gaussian => gaussian_sigma(sensitivity, per_sum).map(|s| s * s),
            MechanismKind::Laplace => {
                per_sum.validate_for(self)?;
                laplace_scale(sensitivity, per_sum.epsilon).map(|b| 2.0 * b * b)
            }
        }
    }

    /// Draws one zero-mean noise value with the given variance.
    pub fn sample_noise<R: Rng + ?Sized>(self, variance: f64, rng: &mut R) -> f64 {
        match self {
            MechanismKind::Gaussian => {
                let z: f64 = StandardNormal.sample(rng);
                variance.sqrt() * z
            }
            MechanismKind::Laplace => sample_laplace((0.5 * variance).sqrt(), rng),
        }
    }
}

/// Laplace(0, b) by inverse CDF of a uniform draw on (0, 1).
pub fn sample_laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    let u: f64 = Open01.sample(rng);
    let centered = u - 0.5;
    let magnitude = -scale * (1.0 - 2.0 * centered.abs()).ln();
    if centered < 0.0 {
        -magnitude
    } else {
        magnitude
    }
}

/// Gaussian mechanism standard deviation `Δ·√(2·ln(1.25/δ))/ε`.
pub fn gaussian_sigma(sensitivity: f64, budget: &PrivacyBudget) -> Result<f64> {
    budget.validate_for(MechanismKind::Gaussian)?;
    check_sensitivity(sensitivity)?;
    Ok(sensitivity * (2.0 * (1.25 / budget.delta).ln()).sqrt() / budget.epsilon)
}

/// Laplace mechanism scale `Δ/ε`.
pub fn laplace_scale(sensitivity: f64, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidBudget(format!(
            "epsilon must be positive and finite, got {epsilon}"
        )));
    }
    check_sensitivity(sensitivity)?;
    Ok(sensitivity / epsilon)
}

fn check_sensitivity(sensitivity: f64) -> Result<()> {
    if !(sensitivity >= 0.0) || !sensitivity.is_finite() {
        return Err(Error::InvalidBounds(format!(
            "sensitivity must be non-negative and finite, got {sensitivity}"
        )));
    }
    Ok(())
}

/// Even split of a budget over `k` releases: `(ε/k, δ/k)`.
pub fn split_budget(total: &PrivacyBudget, k: usize) -> Result<PrivacyBudget> {
    if k == 0 {
        return Err(Error::InvalidSplit);
    }
    total.validate()?;
    Ok(PrivacyBudget {
        epsilon: total.epsilon / k as f64,
        delta: total.delta / k as f64,
    })
}

/// Noisy sums together with everything needed to reason about the noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleasedSums {
    pub mechanism: MechanismKind,
    pub profile: Profile,
    pub per_sum_budget: PrivacyBudget,
    pub values: Sums,
    pub noise_variance: Sums,
}

impl ReleasedSums {
    /// Total ε spent across the distinct released sums.
    pub fn total_epsilon(&self) -> f64 {
        self.per_sum_budget.epsilon * self.profile.size() as f64
    }

    pub fn total_delta(&self) -> f64 {
        self.per_sum_budget.delta * self.profile.size() as f64
    }
}

/// Privatizes `sums` under `total` using `mechanism`.
///
/// Draws happen in release order of the profile, one per distinct sum.
pub fn release<R: Rng + ?Sized>(
    sums: &SumVector,
    bounds: &Bounds,
    total: &PrivacyBudget,
    mechanism: MechanismKind,
    rng: &mut R,
) -> Result<ReleasedSums> {
    bounds.validate()?;
    total.validate_for(mechanism)?;
    if sums.profile != bounds.profile() {
        return Err(Error::InvalidSums(format!(
            "sums were computed for profile {} but bounds imply {}",
            sums.profile.name(),
            bounds.profile().name()
        )));
    }
    let profile = sums.profile;
    let per_sum = split_budget(total, profile.size())?;

    let mut values = Sums::default();
    let mut noise_variance = Sums::default();
    for &field in profile.released() {
        let variance = mechanism.noise_variance(sensitivity(bounds, field), &per_sum)?;
        let noise = mechanism.sample_noise(variance, rng);
        values.set(field, sums.sums.get(field) + noise);
        noise_variance.set(field, variance);
    }
    for field in crate::sums::SumField::ALL {
        let source = profile.canonical(field);
        if source != field {
            values.set(field, values.get(source));
            noise_variance.set(field, noise_variance.get(source));
        }
    }

    Ok(ReleasedSums {
        mechanism,
        profile,
        per_sum_budget: per_sum,
        values,
        noise_variance,
    })
}
