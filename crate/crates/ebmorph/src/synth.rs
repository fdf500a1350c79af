//! Synthetic light-curve generation for eclipsing binaries.
//!
//! Two flux models, chosen by morphology:
//!
//! * **Detached** — two spherical stars on a circular orbit, rendered as
//!   uniform disks. Fractional radii follow from the surface potentials via
//!   the first-order spherical approximation `r = 1/(Ω − q)`, clamped inside
//!   the Roche lobe. Eclipses subtract the exact circle–circle overlap area
//!   weighted by the occulted star's surface brightness.
//! * **Overcontact** — a continuous two-dip model: periodic Gaussian dips at
//!   phases 0 and 0.5 whose depths scale with inclination and temperature
//!   ratio, widths with the common potential (shallower potential → fatter
//!   star → wider dips), plus an ellipsoidal cos(4πp) modulation.
//!
//! An optional cool spot multiplies either model by a one-sided cosine lobe,
//! producing unequal quadrature maxima. All curves are evaluated on `n`
//! mid-bin phases `(j + 0.5)/n` and renormalized to a maximum flux of 1.
//! Generation is pure: identical inputs yield bit-identical curves.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve::PhasedCurve;
use crate::rng::{coin, uniform_in};
use rand_core::RngCore;

/// Binary-system morphology class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Morphology {
    #[serde(rename = "detached")]
    Detached,
    #[serde(rename = "overcontact")]
    Overcontact,
}

/// Which star carries the spot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HostStar {
    #[serde(rename = "primary")]
    Primary,
    #[serde(rename = "secondary")]
    Secondary,
}

/// Physical parameters of a synthetic system. All fields live inside the
/// sampling intervals of [`intervals`] for the declared morphology.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryParams {
    pub morphology: Morphology,
    /// Orbital period in days (phase-domain models never consume it; it is
    /// carried for manifests and time-domain export).
    pub period: f64,
    /// Orbital inclination in degrees; 90° is edge-on.
    pub inclination: f64,
    /// Mass ratio q = m2/m1.
    pub mass_ratio: f64,
    /// Surface potential of star 1.
    pub potential_1: f64,
    /// Surface potential of star 2 (equals `potential_1` for overcontact).
    pub potential_2: f64,
    /// Temperature ratio T1/T2.
    pub temp_ratio: f64,
}

/// Cool-spot parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpotParams {
    /// Spot longitude in degrees; sets the phase of maximum depression.
    pub longitude: f64,
    /// Spot latitude in degrees, interpreted as colatitude (0 = pole,
    /// 90 = equator).
    pub latitude: f64,
    /// Angular radius in degrees.
    pub radius: f64,
    /// Spot-to-photosphere temperature factor (fixed at 0.8).
    pub temp_factor: f64,
    /// Which star hosts the spot. Recorded for provenance; the simplified
    /// flux model's modulation does not depend on it.
    pub host_star: HostStar,
}

/// Class label attached to a generated curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthLabel {
    pub morphology: Morphology,
    pub has_spot: bool,
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("mass ratio must be positive, got {0}")]
    NonPositiveQ(f64),
    #[error("invalid potential: omega={omega}, q={q} (requires omega - q > 1)")]
    InvalidPotential { omega: f64, q: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// Sampling intervals for every physical parameter, by morphology.
pub mod intervals {
    /// Detached period, days.
    pub const DETACHED_PERIOD: (f64, f64) = (0.1, 2.0);
    /// Overcontact period, days.
    pub const OVERCONTACT_PERIOD: (f64, f64) = (0.1, 1.5);
    /// Inclination, degrees (both morphologies).
    pub const INCLINATION: (f64, f64) = (30.0, 90.0);
    /// Mass ratio (both morphologies).
    pub const MASS_RATIO: (f64, f64) = (0.01, 2.0);
    /// Detached surface potentials.
    pub const DETACHED_POTENTIAL: (f64, f64) = (2.0, 6.0);
    /// Overcontact common potential.
    pub const OVERCONTACT_POTENTIAL: (f64, f64) = (2.0, 5.0);
    /// Detached temperature ratio T1/T2.
    pub const DETACHED_TEMP_RATIO: (f64, f64) = (0.7, 5.0);
    /// Overcontact temperature ratio T1/T2.
    pub const OVERCONTACT_TEMP_RATIO: (f64, f64) = (1.0, 1.4);
    /// Spot longitude, degrees.
    pub const SPOT_LONGITUDE: (f64, f64) = (30.0, 330.0);
    /// Spot latitude (colatitude), degrees.
    pub const SPOT_LATITUDE: (f64, f64) = (0.0, 180.0);
    /// Spot angular radius, degrees.
    pub const SPOT_RADIUS: (f64, f64) = (5.0, 30.0);
    /// Spot temperature factor, fixed.
    pub const SPOT_TEMP_FACTOR: f64 = 0.8;
}

/// Overcontact model: base eclipse depth at edge-on inclination.
pub const OVERCONTACT_DEPTH_SCALE: f64 = 0.35;
/// Overcontact model: dip width at the deepest common potential (Ω = 5).
pub const OVERCONTACT_WIDTH_BASE: f64 = 0.08;
/// Overcontact model: dip-width gain as the potential shallows toward Ω = 2.
pub const OVERCONTACT_WIDTH_SLOPE: f64 = 0.10;
/// Overcontact model: ellipsoidal-modulation amplitude at edge-on inclination.
pub const OVERCONTACT_ELLIPSOIDAL_SCALE: f64 = 0.12;

// =============================================================================
// Parameter sampling
// =============================================================================

/// Draws system parameters uniformly from the intervals for `morphology`.
/// Draw order: period, inclination, mass ratio, potential(s), temperature
/// ratio. Overcontact systems share one common potential (a single draw).
///
/// Sampling is deliberately unconditioned: combinations that the detached
/// geometry cannot realize (Ω − q ≤ 1) surface later as
/// [`SynthError::InvalidParams`] from [`generate_curve`], and dataset builds
/// redraw them.
pub fn sample_binary_params(morphology: Morphology, rng: &mut impl RngCore) -> BinaryParams {
    use intervals::*;
    match morphology {
        Morphology::Detached => {
            let period = uniform_in(rng, DETACHED_PERIOD.0, DETACHED_PERIOD.1);
            let inclination = uniform_in(rng, INCLINATION.0, INCLINATION.1);
            let mass_ratio = uniform_in(rng, MASS_RATIO.0, MASS_RATIO.1);
            let potential_1 = uniform_in(rng, DETACHED_POTENTIAL.0, DETACHED_POTENTIAL.1);
            let potential_2 = uniform_in(rng, DETACHED_POTENTIAL.0, DETACHED_POTENTIAL.1);
            let temp_ratio = uniform_in(rng, DETACHED_TEMP_RATIO.0, DETACHED_TEMP_RATIO.1);
            BinaryParams {
                morphology,
                period,
                inclination,
                mass_ratio,
                potential_1,
                potential_2,
                temp_ratio,
            }
        }
        Morphology::Overcontact => {
            let period = uniform_in(rng, OVERCONTACT_PERIOD.0, OVERCONTACT_PERIOD.1);
            let inclination = uniform_in(rng, INCLINATION.0, INCLINATION.1);
            let mass_ratio = uniform_in(rng, MASS_RATIO.0, MASS_RATIO.1);
            let potential = uniform_in(rng, OVERCONTACT_POTENTIAL.0, OVERCONTACT_POTENTIAL.1);
            let temp_ratio = uniform_in(rng, OVERCONTACT_TEMP_RATIO.0, OVERCONTACT_TEMP_RATIO.1);
            BinaryParams {
                morphology,
                period,
                inclination,
                mass_ratio,
                potential_1: potential,
                potential_2: potential,
                temp_ratio,
            }
        }
    }
}

/// Draws spot parameters: longitude, latitude, radius uniform in their
/// intervals; temperature factor fixed at 0.8; host star by fair coin.
pub fn sample_spot_params(rng: &mut impl RngCore) -> SpotParams {
    use intervals::*;
    let longitude = uniform_in(rng, SPOT_LONGITUDE.0, SPOT_LONGITUDE.1);
    let latitude = uniform_in(rng, SPOT_LATITUDE.0, SPOT_LATITUDE.1);
    let radius = uniform_in(rng, SPOT_RADIUS.0, SPOT_RADIUS.1);
    let host_star = if coin(rng) {
        HostStar::Secondary
    } else {
        HostStar::Primary
    };
    SpotParams {
        longitude,
        latitude,
        radius,
        temp_factor: SPOT_TEMP_FACTOR,
        host_star,
    }
}

impl BinaryParams {
    /// Checks that every field sits inside its sampling interval.
    pub fn validate(&self) -> Result<(), SynthError> {
        use intervals::*;
        let (p_iv, o_iv, t_iv) = match self.morphology {
            Morphology::Detached => (DETACHED_PERIOD, DETACHED_POTENTIAL, DETACHED_TEMP_RATIO),
            Morphology::Overcontact => (
                OVERCONTACT_PERIOD,
                OVERCONTACT_POTENTIAL,
                OVERCONTACT_TEMP_RATIO,
            ),
        };
        let inside = |v: f64, iv: (f64, f64)| v >= iv.0 && v <= iv.1;
        let checks = [
            (inside(self.period, p_iv), "period"),
            (inside(self.inclination, INCLINATION), "inclination"),
            (inside(self.mass_ratio, MASS_RATIO), "mass_ratio"),
            (inside(self.potential_1, o_iv), "potential_1"),
            (inside(self.potential_2, o_iv), "potential_2"),
            (inside(self.temp_ratio, t_iv), "temp_ratio"),
        ];
        for (ok, name) in checks {
            if !ok {
                return Err(SynthError::InvalidParams(format!(
                    "{name} outside its sampling interval"
                )));
            }
        }
        if self.morphology == Morphology::Overcontact && self.potential_1 != self.potential_2 {
            return Err(SynthError::InvalidParams(
                "overcontact systems share one common potential".into(),
            ));
        }
        Ok(())
    }
}

// =============================================================================
// Geometry
// =============================================================================

/// Eggleton's volume-equivalent Roche-lobe radius (in units of the orbital
/// separation) for a star of mass ratio `q` = own mass / companion mass..
/// The companion's lobe is `roche_lobe_radius(1/q)`.
pub fn roche_lobe_radius(q: f64) -> Result<f64, SynthError> {
    if !(q > 0.0) {
        return Err(SynthError::NonPositiveQ(q));
    }
    let q23 = q.powf(2.0 / 3.0);
    let q13 = q.powf(1.0 / 3.0);
    Ok(0.49 * q23 / (0.6 * q23 + (1.0 + q13).ln()))
}

/// Fractional radius from a surface potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialRadius {
    pub radius: f64,
    /// Set when the raw radius exceeded the Roche lobe and was clamped.
    pub clamped: bool,
}

/// First-order spherical approximation `r = 1/(Ω − q)`, requiring
/// `Ω − q > 1` so r stays below the separation. For detached systems the
/// radius is additionally clamped to 0.95 of the Roche lobe when it would
/// exceed the lobe (flagged in the result).
pub fn radius_from_potential(
    omega: f64,
    q: f64,
    morphology: Morphology,
) -> Result<PotentialRadius, SynthError> {
    if !(omega - q > 1.0) {
        return Err(SynthError::InvalidPotential { omega, q });
    }
    let raw = 1.0 / (omega - q);
    match morphology {
        Morphology::Detached => {
            let lobe = roche_lobe_radius(q)?;
            if raw > lobe {
                Ok(PotentialRadius {
                    radius: 0.95 * lobe,
                    clamped: true,
                })
            } else {
                Ok(PotentialRadius {
                    radius: raw,
                    clamped: false,
                })
            }
        }
        Morphology::Overcontact => Ok(PotentialRadius {
            radius: raw,
            clamped: false,
        }),
    }
}

/// Projected center-to-center separation (in units of the orbital
/// separation) at phase `p` for a circular orbit of inclination
/// `inclination_deg`: `δ(p) = sqrt(sin²θ + cos²θ·cos²i)`, θ = 2πp.
pub fn projected_separation(inclination_deg: f64, p: f64) -> f64 {
    let theta = std::f64::consts::TAU * p;
    let i = inclination_deg.to_radians();
    let (s, c) = (theta.sin(), theta.cos());
    let ci = i.cos();
    (s * s + c * c * ci * ci).sqrt()
}

/// Exact overlap area of two disks of radii `r1`, `r2` whose centers are `d`
/// apart: zero when disjoint, the full smaller disk when contained, the
/// standard asymmetric-lens area otherwise.
pub fn circle_overlap_area(d: f64, r1: f64, r2: f64) -> f64 {
    debug_assert!(d >= 0.0 && r1 > 0.0 && r2 > 0.0);
    if d >= r1 + r2 {
        return 0.0;
    }
    let rmin = r1.min(r2);
    if d <= (r1 - r2).abs() {
        return std::f64::consts::PI * rmin * rmin;
    }
    let clamp = |x: f64| x.clamp(-1.0, 1.0);
    let a1 = (d * d + r1 * r1 - r2 * r2) / (2.0 * d * r1);
    let a2 = (d * d + r2 * r2 - r1 * r1) / (2.0 * d * r2);
    let term1 = r1 * r1 * clamp(a1).acos();
    let term2 = r2 * r2 * clamp(a2).acos();
    let s = (-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2);
    term1 + term2 - 0.5 * s.max(0.0).sqrt()
}

// =============================================================================
// Flux models
// =============================================================================

/// Precomputed quantities shared by every phase of one system.
enum FluxModel {
    Detached {
        /// Fractional radii of the two stars.
        r1: f64,
        r2: f64,
        /// Surface brightness of star 2 relative to star 1: (T2/T1)^4.
        b2: f64,
        /// Total unobscured flux: r1² + b2·r2² (π cancels throughout).
        total: f64,
        inclination: f64,
    },
    Overcontact {
        d1: f64,
        d2: f64,
        w: f64,
        a_ell: f64,
    },
}

impl FluxModel {
    fn build(params: &BinaryParams) -> Result<Self, SynthError> {
        params.validate()?;
        match params.morphology {
            Morphology::Detached => {
                let q = params.mass_ratio;
                let r1 = radius_from_potential(params.potential_1, q, Morphology::Detached)
                    .map_err(|e| SynthError::InvalidParams(e.to_string()))?
                    .radius;
                let r2 = radius_from_potential(params.potential_2, q, Morphology::Detached)
                    .map_err(|e| SynthError::InvalidParams(e.to_string()))?
                    .radius;
                let b2 = (1.0 / params.temp_ratio).powi(4);
                let total = r1 * r1 + b2 * r2 * r2;
                Ok(FluxModel::Detached {
                    r1,
                    r2,
                    b2,
                    total,
                    inclination: params.inclination,
                })
            }
            Morphology::Overcontact => {
                let si = params.inclination.to_radians().sin();
                let d1 = OVERCONTACT_DEPTH_SCALE * si * si;
                let d2 = d1 * (1.0 / params.temp_ratio).powi(4);
                let w = OVERCONTACT_WIDTH_BASE
                    + OVERCONTACT_WIDTH_SLOPE * (5.0 - params.potential_1) / 3.0;
                let a_ell = OVERCONTACT_ELLIPSOIDAL_SCALE * si * si;
                Ok(FluxModel::Overcontact { d1, d2, w, a_ell })
            }
        }
    }

    /// Un-normalized model flux at phase `p`.
    fn eval(&self, p: f64) -> f64 {
        match *self {
            FluxModel::Detached {
                r1,
                r2,
                b2,
                total,
                inclination,
            } => {
                let delta = projected_separation(inclination, p);
                if delta >= r1 + r2 {
                    return 1.0;
                }
                let overlap = circle_overlap_area(delta, r1, r2) / std::f64::consts::PI;
                // Star 2 passes in front around phase 0 (primary minimum),
                // star 1 in front around phase 0.5.
                let hidden_brightness = if (0.25..0.75).contains(&p) { b2 } else { 1.0 };
                (total - hidden_brightness * overlap) / total
            }
            FluxModel::Overcontact { d1, d2, w, a_ell } => {
                let g = |c: f64| {
                    let s = (std::f64::consts::PI * (p - c)).sin();
                    (-(s * s) / (2.0 * w * w)).exp()
                };
                let cos4 = (2.0 * std::f64::consts::TAU * p).cos();
                1.0 - d1 * g(0.0) - d2 * g(0.5) + a_ell * (1.0 - cos4) / 2.0 - a_ell
            }
        }
    }
}

/// Amplitude of the spot's flux depression: `(1 − k)·(r/30)²`.
pub fn spot_amplitude(spot: &SpotParams) -> f64 {
    (1.0 - spot.temp_factor) * (spot.radius / 30.0) * (spot.radius / 30.0)
}

/// Multiplicative spot modulation at phase `p`: a one-sided cosine lobe
/// centered on the spot longitude, scaled by sin(colatitude).
fn spot_modulation(spot: &SpotParams, p: f64) -> f64 {
    let lon_rad = spot.longitude.to_radians();
    let colat = spot.latitude.to_radians();
    let visibility = (std::f64::consts::TAU * p - lon_rad).cos().max(0.0);
    1.0 - spot_amplitude(spot) * visibility * colat.sin()
}

/// Un-normalized model flux at an arbitrary phase. This is the closed form
/// that [`generate_curve`] samples on its grid; tests evaluate it directly
/// at off-grid phases such as the quadratures.
pub fn flux_at(
    params: &BinaryParams,
    spot: Option<&SpotParams>,
    p: f64,
) -> Result<f64, SynthError> {
    let model = FluxModel::build(params)?;
    let base = model.eval(p);
    Ok(match spot {
        Some(s) => base * spot_modulation(s, p),
        None => base,
    })
}

/// Generates a phased light curve on `n_phases` mid-bin phases
/// `(j + 0.5)/n`, renormalized so the maximum flux is exactly 1.
///
/// Panics if `n_phases < 16`. Returns [`SynthError::InvalidParams`] when the
/// detached geometry cannot be realized (Ω − q ≤ 1); dataset builds treat
/// that as a signal to redraw.
pub fn generate_curve(
    params: &BinaryParams,
    spot: Option<&SpotParams>,
    n_phases: usize,
) -> Result<(PhasedCurve, SynthLabel), SynthError> {
    assert!(n_phases >= 16, "n_phases must be >= 16, got {n_phases}");
    let model = FluxModel::build(params)?;
    let n = n_phases;
    let phases: Vec<f64> = (0..n).map(|j| (j as f64 + 0.5) / n as f64).collect();
    let mut fluxes: Vec<f64> = phases.iter().map(|&p| model.eval(p)).collect();
    if let Some(s) = spot {
        for (f, &p) in fluxes.iter_mut().zip(&phases) {
            *f *= spot_modulation(s, p);
        }
    }
    let max = fluxes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    debug_assert!(max > 0.0);
    for f in &mut fluxes {
        *f /= max;
    }
    let curve = PhasedCurve::new(phases, fluxes, true)
        .map_err(|e| SynthError::InvalidParams(e.to_string()))?;
    Ok((
        curve,
        SynthLabel {
            morphology: params.morphology,
            has_spot: spot.is_some(),
        },
    ))
}

// =============================================================================
// Tests
// =============================================================================
