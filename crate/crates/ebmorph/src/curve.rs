//! Photometric time series and phase-domain preprocessing.
//!
//! The observational pipeline is: parse survey photometry, fold on a known
//! ephemeris, optionally bin to a fixed phase grid, normalize to maximum
//! flux, and rotate the deepest point to phase zero. Synthetic curves from
//! [`crate::synth`] enter the same representation ([`PhasedCurve`]) and share
//! everything downstream.

use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Survey passband a curve was observed (or emulated) in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Passband {
    /// Gaia G band: sparse sampling, low noise.
    #[serde(rename = "gaia_g")]
    GaiaG,
    /// Johnson-Cousins I band: dense sampling, higher noise.
    #[serde(rename = "i")]
    I,
    /// TESS band: dense sampling, low noise.
    #[serde(rename = "tess")]
    Tess,
}

/// Whether an ephemeris epoch marks a flux minimum or maximum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EpochKind {
    #[serde(rename = "min")]
    MinimumFlux,
    #[serde(rename = "max")]
    MaximumFlux,
}

/// Orbital ephemeris used for phase folding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ephemeris {
    /// Orbital period in days; must be positive and finite.
    pub period: f64,
    /// Reference epoch in the same time system as the photometry.
    pub epoch: f64,
    /// What the epoch marks. Folding itself ignores this: the data-driven
    /// [`align_minimum`] rotation handles either convention.
    pub epoch_kind: EpochKind,
}

#[derive(Debug, Error)]
pub enum CurveError {
    #[error("photometry file not found: {0}")]
    FileNotFound(String),
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("format error at line {line}: expected at least 2 numeric columns")]
    FormatError { line: usize },
    #[error("curve has no usable points")]
    EmptyCurve,
    #[error("invalid period: {0} (must be positive and finite)")]
    InvalidPeriod(f64),
    #[error("cannot normalize: maximum flux is not positive")]
    NonPositiveMax,
    #[error("invalid curve data: {0}")]
    InvalidCurve(String),
}

/// Wraps a value into `[0, 1)`, guarding the `x ≈ 1` rounding edge.
pub(crate) fn wrap_unit(x: f64) -> f64 {
    let mut r = x.fract();
    if r < 0.0 {
        r += 1.0;
    }
    if r >= 1.0 {
        r = 0.0;
    }
    r
}

// =============================================================================
// Time-domain photometry
// =============================================================================

/// A photometric time series: strictly increasing times, finite positive
/// fluxes, optional per-point flux uncertainties.
#[derive(Debug, Clone, PartialEq)]
pub struct LightCurve {
    times: Vec<f64>,
    fluxes: Vec<f64>,
    flux_errors: Option<Vec<f64>>,
    passband: Option<Passband>,
}

impl LightCurve {
    /// Validates the type invariants: equal lengths, strictly increasing
    /// finite times, finite positive fluxes.
    pub fn new(
        times: Vec<f64>,
        fluxes: Vec<f64>,
        flux_errors: Option<Vec<f64>>,
        passband: Option<Passband>,
    ) -> Result<Self, CurveError> {
        if times.len() != fluxes.len() {
            return Err(CurveError::InvalidCurve(format!(
                "times/fluxes length mismatch: {} vs {}",
                times.len(),
                fluxes.len()
            )));
        }
        if let Some(errs) = &flux_errors {
            if errs.len() != times.len() {
                return Err(CurveError::InvalidCurve(format!(
                    "flux_errors length mismatch: {} vs {}",
                    errs.len(),
                    times.len()
                )));
            }
        }
        for w in times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(CurveError::InvalidCurve(format!(
                    "times not strictly increasing: {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(CurveError::InvalidCurve("non-finite time".into()));
        }
        if fluxes.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(CurveError::InvalidCurve(
                "fluxes must be finite and positive".into(),
            ));
        }
        Ok(Self {
            times,
            fluxes,
            flux_errors,
            passband,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }
    pub fn fluxes(&self) -> &[f64] {
        &self.fluxes
    }
    pub fn flux_errors(&self) -> Option<&[f64]> {
        self.flux_errors.as_deref()
    }
    pub fn passband(&self) -> Option<Passband> {
        self.passband
    }
    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Parses delimited-text photometry: columns `time flux [flux_error]`,
/// separated by whitespace, commas, or semicolons; lines starting with `#`
/// are comments.
///
/// Rows whose time or flux is non-finite, whose flux is non-positive, or
/// whose time duplicates an already-kept row are dropped and counted (the
/// second element of the result). A row with fewer than 2 numeric columns is
/// a [`CurveError::FormatError`]. Flux errors are kept only when every
/// surviving row carries a third column; a non-finite error drops its row.
///
/// Returns the curve sorted by time and the number of dropped rows.
pub fn parse_photometry(
    path: &Path,
    passband: Option<Passband>,
) -> Result<(LightCurve, usize), CurveError> {
    let file = std::fs::File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CurveError::FileNotFound(path.display().to_string())
        } else {
            CurveError::Io {
                path: path.display().to_string(),
                source: e,
            }
        }
    })?;
    let reader = std::io::BufReader::new(file);

    let mut rows: Vec<(f64, f64, Option<f64>)> = Vec::new();
    let mut dropped = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CurveError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line
            .split(|c: char| c == ',' || c == ';' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if tokens.len() < 2 {
            return Err(CurveError::FormatError { line: idx + 1 });
        }
        let parse = |s: &str| -> Result<f64, CurveError> {
            s.parse::<f64>()
                .map_err(|_| CurveError::FormatError { line: idx + 1 })
        };
        let t = parse(tokens[0])?;
        let f = parse(tokens[1])?;
        let e = if tokens.len() >= 3 {
            Some(parse(tokens[2])?)
        } else {
            None
        };
        let bad_value = !t.is_finite()
            || !f.is_finite()
            || f <= 0.0
            || e.is_some_and(|e| !e.is_finite());
        if bad_value {
            dropped += 1;
            continue;
        }
        rows.push((t, f, e));
    }

    rows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    rows.dedup_by(|next, kept| {
        let dup = next.0 == kept.0;
        if dup {
            dropped += 1;
        }
        dup
    });
    if rows.is_empty() {
        return Err(CurveError::EmptyCurve);
    }

    let all_have_errors = rows.iter().all(|r| r.2.is_some());
    let times: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let fluxes: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let errors = all_have_errors.then(|| rows.iter().map(|r| r.2.unwrap()).collect());
    let curve = LightCurve::new(times, fluxes, errors, passband)?;
    Ok((curve, dropped))
}

// =============================================================================
// Phase-domain curves
// =============================================================================

/// A phase-folded curve: phases in `[0, 1)` sorted ascending, finite fluxes.
/// When `normalized` is set the maximum flux equals 1 within 1e-12.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasedCurve {
    phases: Vec<f64>,
    fluxes: Vec<f64>,
    normalized: bool,
}

impl PhasedCurve {
    /// Validates the type invariants listed on the struct.
    pub fn new(phases: Vec<f64>, fluxes: Vec<f64>, normalized: bool) -> Result<Self, CurveError> {
        if phases.len() != fluxes.len() {
            return Err(CurveError::InvalidCurve(format!(
                "phases/fluxes length mismatch: {} vs {}",
                phases.len(),
                fluxes.len()
            )));
        }
        for p in &phases {
            if !(p.is_finite() && (0.0..1.0).contains(p)) {
                return Err(CurveError::InvalidCurve(format!("phase out of [0,1): {p}")));
            }
        }
        for w in phases.windows(2) {
            if w[1] < w[0] {
                return Err(CurveError::InvalidCurve(format!(
                    "phases not sorted: {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if fluxes.iter().any(|f| !f.is_finite()) {
            return Err(CurveError::InvalidCurve("non-finite flux".into()));
        }
        if normalized {
            let max = fluxes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if (max - 1.0).abs() > 1e-12 {
                return Err(CurveError::InvalidCurve(format!(
                    "normalized flag set but max flux is {max}"
                )));
            }
        }
        Ok(Self {
            phases,
            fluxes,
            normalized,
        })
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }
    pub fn fluxes(&self) -> &[f64] {
        &self.fluxes
    }
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }
    pub fn len(&self) -> usize {
        self.phases.len()
    }
    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }
}

/// Folds a time series on an ephemeris: `phase = frac((t − epoch) / period)`
/// mapped into `[0, 1)`, output sorted by phase. Flux errors do not survive
/// folding; downstream stages operate on phase/flux pairs only.
pub fn phase_fold(curve: &LightCurve, eph: &Ephemeris) -> Result<PhasedCurve, CurveError> {
    if !(eph.period.is_finite() && eph.period > 0.0) {
        return Err(CurveError::InvalidPeriod(eph.period));
    }
    let mut pairs: Vec<(f64, f64)> = curve
        .times()
        .iter()
        .zip(curve.fluxes())
        .map(|(&t, &f)| (wrap_unit((t - eph.epoch) / eph.period), f))
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let (phases, fluxes) = pairs.into_iter().unzip();
    PhasedCurve::new(phases, fluxes, false)
}

/// Divides all fluxes by the maximum flux. The maximum must be positive.
pub fn normalize_max_flux(curve: &PhasedCurve) -> Result<PhasedCurve, CurveError> {
    if curve.is_empty() {
        return Err(CurveError::EmptyCurve);
    }
    let max = curve.fluxes().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return Err(CurveError::NonPositiveMax);
    }
    let fluxes: Vec<f64> = curve.fluxes().iter().map(|f| f / max).collect();
    PhasedCurve::new(curve.phases().to_vec(), fluxes, true)
}

/// Averages fluxes onto a uniform phase grid of `n_bins` bins. Bin `b` covers
/// `[b/n, (b+1)/n)` and is reported at its center `(b + 0.5)/n`. Empty bins
/// are filled by circular linear interpolation between the nearest non-empty
/// neighbors on each side.
///
/// Panics if `n_bins < 2`.
pub fn bin_phases(curve: &PhasedCurve, n_bins: usize) -> Result<PhasedCurve, CurveError> {
    assert!(n_bins >= 2, "bin_phases requires n_bins >= 2, got {n_bins}");
    if curve.is_empty() {
        return Err(CurveError::EmptyCurve);
    }
    let n = n_bins;
    let mut sums = vec![0.0f64; n];
    let mut counts = vec![0usize; n];
    for (&p, &f) in curve.phases().iter().zip(curve.fluxes()) {
        let b = ((p * n as f64) as usize).min(n - 1);
        sums[b] += f;
        counts[b] += 1;
    }

    let means: Vec<Option<f64>> = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
        .collect();

    let mut fluxes = Vec::with_capacity(n);
    for b in 0..n {
        let v = match means[b] {
            Some(v) => v,
            None => {
                // Nearest non-empty neighbor on each side, walking circularly.
                let (mut dl, mut dr) = (0usize, 0usize);
                let (mut fl, mut fr) = (0.0f64, 0.0f64);
                for d in 1..n {
                    let i = (b + n - d) % n;
                    if let Some(v) = means[i] {
                        dl = d;
                        fl = v;
                        break;
                    }
                }
                for d in 1..n {
                    let i = (b + d) % n;
                    if let Some(v) = means[i] {
                        dr = d;
                        fr = v;
                        break;
                    }
                }
                debug_assert!(dl > 0 && dr > 0, "input guaranteed non-empty");
                (fl * dr as f64 + fr * dl as f64) / (dl + dr) as f64
            }
        };
        fluxes.push(v);
    }

    let phases: Vec<f64> = (0..n).map(|b| (b as f64 + 0.5) / n as f64).collect();
    PhasedCurve::new(phases, fluxes, false)
}

/// Rotates phases (mod 1) so the minimum-flux point lands at phase 0. Ties
/// are broken toward the smallest original phase. Flux values (and the
/// normalized flag) are unchanged.
pub fn align_minimum(curve: &PhasedCurve) -> Result<PhasedCurve, CurveError> {
    if curve.is_empty() {
        return Err(CurveError::EmptyCurve);
    }
    let mut argmin = 0usize;
    for (i, &f) in curve.fluxes().iter().enumerate() {
        if f < curve.fluxes()[argmin] {
            argmin = i;
        }
    }
    let p0 = curve.phases()[argmin];
    let mut pairs: Vec<(f64, f64)> = curve
        .phases()
        .iter()
        .zip(curve.fluxes())
        .map(|(&p, &f)| (wrap_unit(p - p0), f))
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let (phases, fluxes) = pairs.into_iter().unzip();
    PhasedCurve::new(phases, fluxes, curve.is_normalized())
}

// =============================================================================
// Phased-curve files
// =============================================================================

/// Reads a phased curve from delimited text with columns `phase flux`
/// (comments `#`). Used by the `transform` command and dataset curve files.
pub fn read_phased_curve(path: &Path) -> Result<PhasedCurve, CurveError> {
    let file = std::fs::File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CurveError::FileNotFound(path.display().to_string())
        } else {
            CurveError::Io {
                path: path.display().to_string(),
                source: e,
            }
        }
    })?;
    let reader = std::io::BufReader::new(file);
    let mut pairs: Vec<(f64, f64)> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CurveError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line
            .split(|c: char| c == ',' || c == ';' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if tokens.len() < 2 {
            return Err(CurveError::FormatError { line: idx + 1 });
        }
        let p: f64 = tokens[0]
            .parse()
            .map_err(|_| CurveError::FormatError { line: idx + 1 })?;
        let f: f64 = tokens[1]
            .parse()
            .map_err(|_| CurveError::FormatError { line: idx + 1 })?;
        pairs.push((p, f));
    }
    if pairs.is_empty() {
        return Err(CurveError::EmptyCurve);
    }
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let (phases, fluxes) = pairs.into_iter().unzip();
    PhasedCurve::new(phases, fluxes, false)
}

/// Writes a phased curve as delimited text (`phase flux` per line). Floats
/// are printed in shortest round-trip form, so the file re-reads bit-exact.
pub fn write_phased_curve(curve: &PhasedCurve, path: &Path) -> Result<(), CurveError> {
    use std::io::Write;
    let mut out = String::with_capacity(curve.len() * 32);
    out.push_str("# phase flux\n");
    for (p, f) in curve.phases().iter().zip(curve.fluxes()) {
        out.push_str(&format!("{p} {f}\n"));
    }
    let mut file = std::fs::File::create(path).map_err(|e| CurveError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    file.write_all(out.as_bytes()).map_err(|e| CurveError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

// =============================================================================
// Tests
// =============================================================================
