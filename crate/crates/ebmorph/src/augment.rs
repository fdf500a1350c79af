//! Survey-quality degradation of phased curves: Gaussian noise, outlier
//! injection, and random decimation, applied in that fixed order.
//!
//! Every operation takes an explicit random generator and touches only the
//! flux vector (noise, outliers) or selects a sub-sequence (decimation); the
//! phase grid itself is never perturbed. Outputs are marked unnormalized
//! because noise can push the maximum off 1.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve::{CurveError, Passband, PhasedCurve};
use crate::rng::{coin, distinct_indices, standard_normal};
use rand_core::RngCore;

/// One survey-emulation recipe. Serialized into dataset manifests so a
/// degraded dataset is reproducible from its seed alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Gaussian flux noise, in normalized flux units.
    pub noise_sigma: f64,
    /// Number of outlier points to inject.
    pub outlier_count: usize,
    /// Outlier offset as a multiple of the effective noise sigma.
    pub outlier_scale: f64,
    /// Number of points retained after decimation.
    pub target_points: usize,
}

/// Outlier offsets are expressed relative to the noise level; this floor
/// keeps them visible even on noiseless curves.
const MIN_EFFECTIVE_SIGMA: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("cannot inject {count} outliers into {n_points} points (limit n/10)")]
    TooManyOutliers { count: usize, n_points: usize },
    #[error("cannot decimate {n_points} points down to {target}")]
    TargetExceedsLength { target: usize, n_points: usize },
    #[error("invalid augmentation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Curve(#[from] CurveError),
}

impl AugmentConfig {
    /// Default recipe per passband: TESS and I keep 100 points, Gaia G is
    /// decimated to 50; Gaia G and TESS use 1 mmag-scale noise, I five
    /// times that. All inject 2 outliers at 10 sigma.
    pub fn for_passband(passband: Passband) -> Self {
        let (noise_sigma, target_points) = match passband {
            Passband::Tess => (0.001, 100),
            Passband::GaiaG => (0.001, 50),
            Passband::I => (0.005, 100),
        };
        AugmentConfig {
            noise_sigma,
            outlier_count: 2,
            outlier_scale: 10.0,
            target_points,
        }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(AugmentError::InvalidConfig(format!(
                "noise_sigma must be finite and non-negative, got {}",
                self.noise_sigma
            )));
        }
        if !(self.outlier_scale >= 0.0 && self.outlier_scale.is_finite()) {
            return Err(AugmentError::InvalidConfig(format!(
                "outlier_scale must be finite and non-negative, got {}",
                self.outlier_scale
            )));
        }
        if self.target_points < 10 {
            return Err(AugmentError::InvalidConfig(format!(
                "target_points must be at least 10, got {}",
                self.target_points
            )));
        }
        Ok(())
    }
}

/// Adds independent zero-mean Gaussian noise of standard deviation `sigma`
/// to every flux. Phases are untouched.
pub fn add_noise(curve: &PhasedCurve, sigma: f64, rng: &mut impl RngCore) -> PhasedCurve {
    assert!(
        sigma >= 0.0 && sigma.is_finite(),
        "noise sigma must be finite and non-negative"
    );
    let fluxes = curve
        .fluxes()
        .iter()
        .map(|&f| f + sigma * standard_normal(rng))
        .collect();
    PhasedCurve::new(curve.phases().to_vec(), fluxes, false)
        .expect("noise preserves curve validity")
}

/// Shifts `count` distinct random fluxes by `scale` times the effective
/// noise sigma (`max(noise_sigma, 1e-3)`), each with an independent random
/// sign. At most a tenth of the points may become outliers.
pub fn inject_outliers(
    curve: &PhasedCurve,
    count: usize,
    scale: f64,
    noise_sigma: f64,
    rng: &mut impl RngCore,
) -> Result<PhasedCurve, AugmentError> {
    let n = curve.len();
    if count > n / 10 {
        return Err(AugmentError::TooManyOutliers { count, n_points: n });
    }
    let sigma_eff = noise_sigma.max(MIN_EFFECTIVE_SIGMA);
    let mut fluxes = curve.fluxes().to_vec();
    let indices = distinct_indices(rng, n, count);
    for &i in &indices {
        let sign = if coin(rng) { 1.0 } else { -1.0 };
        fluxes[i] += sign * scale * sigma_eff;
    }
    Ok(PhasedCurve::new(curve.phases().to_vec(), fluxes, false)
        .expect("outliers preserve curve validity"))
}

/// Keeps a uniform random subset of exactly `target_points` points,
/// preserving phase order.
pub fn decimate(
    curve: &PhasedCurve,
    target_points: usize,
    rng: &mut impl RngCore,
) -> Result<PhasedCurve, AugmentError> {
    let n = curve.len();
    if target_points > n {
        return Err(AugmentError::TargetExceedsLength {
            target: target_points,
            n_points: n,
        });
    }
    let keep = distinct_indices(rng, n, target_points);
    let phases: Vec<f64> = keep.iter().map(|&i| curve.phases()[i]).collect();
    let fluxes: Vec<f64> = keep.iter().map(|&i| curve.fluxes()[i]).collect();
    Ok(PhasedCurve::new(phases, fluxes, false).expect("decimation preserves curve validity"))
}

/// Applies the full recipe in fixed order: noise, then outliers, then
/// decimation.
pub fn apply(
    config: &AugmentConfig,
    curve: &PhasedCurve,
    rng: &mut impl RngCore,
) -> Result<PhasedCurve, AugmentError> {
    config.validate()?;
    let noisy = add_noise(curve, config.noise_sigma, rng);
    let with_outliers = inject_outliers(
        &noisy,
        config.outlier_count,
        config.outlier_scale,
        config.noise_sigma,
        rng,
    )?;
    decimate(&with_outliers, config.target_points, rng)
}
