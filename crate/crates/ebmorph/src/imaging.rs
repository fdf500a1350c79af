//! Phased curve → polar scatter → hexagonal binning → 224×224 grayscale
//! raster.
//!
//! A phased curve is wrapped around the origin: phase becomes azimuth
//! (clockwise from the +y axis) and min-max–scaled flux becomes radius in
//! [0.2, 1]. The resulting points are binned on a pointy-top hexagonal
//! tessellation realized as two interleaved rectangular lattices, and bin
//! counts are painted onto a square raster where every pixel takes the
//! intensity of its nearest hexagon center, linearly scaled so the fullest
//! bin is 1.
//!
//! Everything here is a pure function; identical inputs produce bit-identical
//! images.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve::PhasedCurve;

/// Default hexagons across the x-extent.
pub const DEFAULT_GRIDSIZE: usize = 24;
/// Default raster edge length in pixels.
pub const RASTER_SIZE: usize = 224;

/// Innermost radius of the polar annulus.
const RADIUS_MIN: f64 = 0.2;
/// Radial span of the annulus.
const RADIUS_SPAN: f64 = 0.8;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("cannot transform an empty curve")]
    EmptyCurve,
    #[error("point radius {0} outside the polar annulus [0.2, 1]")]
    RadiusOutOfRange(f64),
    #[error("bad image data: {0}")]
    BadImage(String),
}

// =============================================================================
// Polar transform
// =============================================================================

/// Cartesian points on the polar annulus, all radii in [0.2, 1] (within
/// 1e-9).
#[derive(Debug, Clone, PartialEq)]
pub struct PolarPoints {
    xy: Vec<(f64, f64)>,
}

impl PolarPoints {
    pub fn new(xy: Vec<(f64, f64)>) -> Result<Self, ImagingError> {
        for &(x, y) in &xy {
            let r = (x * x + y * y).sqrt();
            if !(RADIUS_MIN - 1e-9..=1.0 + 1e-9).contains(&r) {
                return Err(ImagingError::RadiusOutOfRange(r));
            }
        }
        Ok(PolarPoints { xy })
    }

    pub fn xy(&self) -> &[(f64, f64)] {
        &self.xy
    }

    pub fn len(&self) -> usize {
        self.xy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xy.is_empty()
    }
}

/// Maps a phased curve onto the polar annulus: radius is min-max–scaled flux
/// (`0.2 + 0.8·(f − f_min)/(f_max − f_min)`, or 1.0 everywhere when the
/// curve has zero amplitude) and azimuth is `2π·phase` measured clockwise
/// from the +y axis, so `x = r·sin φ`, `y = r·cos φ`.
pub fn to_polar(curve: &PhasedCurve) -> Result<PolarPoints, ImagingError> {
    if curve.len() == 0 {
        return Err(ImagingError::EmptyCurve);
    }
    let fluxes = curve.fluxes();
    let f_min = fluxes.iter().cloned().fold(f64::INFINITY, f64::min);
    let f_max = fluxes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = f_max - f_min;
    let xy = curve
        .phases()
        .iter()
        .zip(fluxes)
        .map(|(&p, &f)| {
            let r = if span == 0.0 {
                1.0
            } else {
                RADIUS_MIN + RADIUS_SPAN * (f - f_min) / span
            };
            let phi = std::f64::consts::TAU * p;
            (r * phi.sin(), r * phi.cos())
        })
        .collect();
    PolarPoints::new(xy)
}

// =============================================================================
// Hexagonal binning
// =============================================================================

/// Hexagonal bin counts over [−1, 1]². The pointy-top tessellation is
/// realized as two interleaved rectangular lattices: lattice A at
/// `(−1 + j·dx, −1 + k·dy)` and lattice B offset by `(dx/2, dy/2)`, with
/// `dx = 2/G` and `dy = dx·√3/2`. A point belongs to the nearer of its two
/// per-lattice candidates, which per-axis rounding makes the global nearest
/// center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HexGrid {
    gridsize: usize,
    /// Row count parameter: lattice A has rows 0..=ky, lattice B 0..ky.
    ky: usize,
    /// Bin counts, lattice A row-major first, then lattice B.
    counts: Vec<u32>,
    n_points: usize,
}

impl HexGrid {
    /// An all-zero grid. Panics if `gridsize < 4`.
    pub fn empty(gridsize: usize) -> Self {
        assert!(gridsize >= 4, "gridsize must be at least 4, got {gridsize}");
        let dy = (2.0 / gridsize as f64) * 3f64.sqrt() / 2.0;
        let ky = (2.0 / dy).ceil() as usize;
        let n_centers = (gridsize + 1) * (ky + 1) + gridsize * ky;
        HexGrid {
            gridsize,
            ky,
            counts: vec![0; n_centers],
            n_points: 0,
        }
    }

    pub fn gridsize(&self) -> usize {
        self.gridsize
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn n_centers(&self) -> usize {
        self.counts.len()
    }

    pub fn max_count(&self) -> u32 {
        self.counts.iter().cloned().max().unwrap_or(0)
    }

    fn dx(&self) -> f64 {
        2.0 / self.gridsize as f64
    }

    fn dy(&self) -> f64 {
        self.dx() * 3f64.sqrt() / 2.0
    }

    /// Domain coordinates of a bin center by flat index.
    pub fn center_position(&self, id: usize) -> (f64, f64) {
        let (dx, dy) = (self.dx(), self.dy());
        let n_a = (self.gridsize + 1) * (self.ky + 1);
        if id < n_a {
            let j = id % (self.gridsize + 1);
            let k = id / (self.gridsize + 1);
            (-1.0 + j as f64 * dx, -1.0 + k as f64 * dy)
        } else {
            let b = id - n_a;
            let j = b % self.gridsize;
            let k = b / self.gridsize;
            (
                -1.0 + (j as f64 + 0.5) * dx,
                -1.0 + (k as f64 + 0.5) * dy,
            )
        }
    }

    /// Flat index of the bin whose center is nearest to `(x, y)`
    /// (Euclidean; exact ties prefer lattice A).
    pub fn assign(&self, x: f64, y: f64) -> usize {
        let (dx, dy) = (self.dx(), self.dy());
        let g = self.gridsize;
        let clamp = |v: f64, hi: usize| -> usize {
            if v < 0.0 {
                0
            } else {
                (v.round() as usize).min(hi)
            }
        };
        // Nearest lattice-A center via per-axis rounding.
        let ja = clamp((x + 1.0) / dx, g);
        let ka = clamp((y + 1.0) / dy, self.ky);
        let (ax, ay) = (-1.0 + ja as f64 * dx, -1.0 + ka as f64 * dy);
        let da = (x - ax) * (x - ax) + (y - ay) * (y - ay);
        // Nearest lattice-B center.
        let jb = clamp((x + 1.0) / dx - 0.5, g - 1);
        let kb = clamp((y + 1.0) / dy - 0.5, self.ky - 1);
        let (bx, by) = (
            -1.0 + (jb as f64 + 0.5) * dx,
            -1.0 + (kb as f64 + 0.5) * dy,
        );
        let db = (x - bx) * (x - bx) + (y - by) * (y - by);
        let n_a = (g + 1) * (self.ky + 1);
        if db < da {
            n_a + kb * g + jb
        } else {
            ka * (g + 1) + ja
        }
    }
}

/// Accumulates hexagonal bin counts for a polar point set. Panics if
/// `gridsize < 4`. The sum of all counts equals the number of points.
pub fn hexbin_counts(points: &PolarPoints, gridsize: usize) -> HexGrid {
    let mut grid = HexGrid::empty(gridsize);
    for &(x, y) in points.xy() {
        let id = grid.assign(x, y);
        grid.counts[id] += 1;
    }
    grid.n_points = points.len();
    grid
}

// =============================================================================
// Rasterization
// =============================================================================

/// Square single-channel image, intensities in [0, 1], row-major with row 0
/// at the top.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRaster {
    size: usize,
    pixels: Vec<f32>,
}

impl ImageRaster {
    pub fn new(size: usize, pixels: Vec<f32>) -> Result<Self, ImagingError> {
        if pixels.len() != size * size {
            return Err(ImagingError::BadImage(format!(
                "expected {} pixels, got {}",
                size * size,
                pixels.len()
            )));
        }
        if let Some(p) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(ImagingError::BadImage(format!(
                "pixel intensity {p} outside [0, 1]"
            )));
        }
        Ok(ImageRaster { size, pixels })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * self.size + col]
    }

    /// Quantizes to 8 bits: `round(255·v)` per pixel.
    pub fn quantize(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|&v| (255.0 * v).round() as u8)
            .collect()
    }

    /// Rebuilds an image from 8-bit data (`v = byte/255`).
    pub fn from_quantized(size: usize, bytes: &[u8]) -> Result<Self, ImagingError> {
        if bytes.len() != size * size {
            return Err(ImagingError::BadImage(format!(
                "expected {} bytes, got {}",
                size * size,
                bytes.len()
            )));
        }
        let pixels = bytes.iter().map(|&b| b as f32 / 255.0).collect();
        Ok(ImageRaster {
            size,
            pixels,
        })
    }

    /// Round-trips through 8-bit quantization, pinning the exact values the
    /// on-disk format preserves.
    pub fn quantized(&self) -> Self {
        Self::from_quantized(self.size, &self.quantize()).expect("self-sized buffer")
    }
}

/// Domain coordinates of a pixel center: x grows rightward, y upward, row 0
/// at the image top.
pub fn pixel_center_domain(row: usize, col: usize, size: usize) -> (f64, f64) {
    let step = 2.0 / size as f64;
    (
        -1.0 + (col as f64 + 0.5) * step,
        1.0 - (row as f64 + 0.5) * step,
    )
}

/// Paints bin counts onto a `size`×`size` raster: each pixel takes
/// `count/max_count` of its nearest hexagon center (all zeros when the grid
/// is empty). Panics if `size < 32`.
pub fn rasterize(grid: &HexGrid, size: usize) -> ImageRaster {
    assert!(size >= 32, "raster size must be at least 32, got {size}");
    let max = grid.max_count();
    let mut pixels = vec![0.0f32; size * size];
    if max == 0 {
        return ImageRaster { size, pixels };
    }
    let max = max as f32;
    for row in 0..size {
        for col in 0..size {
            let (x, y) = pixel_center_domain(row, col, size);
            let id = grid.assign(x, y);
            pixels[row * size + col] = grid.counts[id] as f32 / max;
        }
    }
    ImageRaster { size, pixels }
}

/// Full transform: polar mapping, hexagonal binning at `gridsize`, and
/// rasterization to the default 224×224 raster.
pub fn curve_to_image(curve: &PhasedCurve, gridsize: usize) -> Result<ImageRaster, ImagingError> {
    let points = to_polar(curve)?;
    let grid = hexbin_counts(&points, gridsize);
    Ok(rasterize(&grid, RASTER_SIZE))
}

// =============================================================================
// PGM encoding
// =============================================================================

/// Encodes as binary PGM (P5), 8-bit, `round(255·v)` quantization.
pub fn to_pgm_bytes(raster: &ImageRaster) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", raster.size(), raster.size());
    let mut out = header.into_bytes();
    out.extend_from_slice(&raster.quantize());
    out
}

/// Decodes a binary PGM produced by [`to_pgm_bytes`] (P5, maxval 255).
pub fn from_pgm_bytes(bytes: &[u8]) -> Result<ImageRaster, ImagingError> {
    let bad = |m: &str| ImagingError::BadImage(m.to_string());
    // Header: magic, width, height, maxval, each followed by one whitespace.
    let mut fields = Vec::new();
    let mut pos = 0usize;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated PGM header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?);
    }
    if fields[0] != "P5" {
        return Err(bad("not a binary PGM (P5)"));
    }
    let width: usize = fields[1].parse().map_err(|_| bad("bad width"))?;
    let height: usize = fields[2].parse().map_err(|_| bad("bad height"))?;
    let maxval: usize = fields[3].parse().map_err(|_| bad("bad maxval"))?;
    if width != height {
        return Err(bad("image must be square"));
    }
    if maxval != 255 {
        return Err(bad("maxval must be 255"));
    }
    // Exactly one whitespace byte separates the header from pixel data.
    pos += 1;
    let data = bytes.get(pos..).ok_or_else(|| bad("missing pixel data"))?;
    if data.len() != width * height {
        return Err(bad("pixel payload length mismatch"));
    }
    ImageRaster::from_quantized(width, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{rng_from_seed, uniform_in};
    use crate::synth::{generate_curve, sample_binary_params, Morphology};
    use proptest::prelude::*;

    fn curve(phases: Vec<f64>, fluxes: Vec<f64>) -> PhasedCurve {
        PhasedCurve::new(phases, fluxes, false).unwrap()
    }

    /// Brute-force nearest-center scan over every center of both lattices.
    fn oracle_assign(grid: &HexGrid, x: f64, y: f64) -> usize {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for id in 0..grid.n_centers() {
            let (cx, cy) = grid.center_position(id);
            let d = (x - cx) * (x - cx) + (y - cy) * (y - cy);
            if d < best_d {
                best_d = d;
                best = id;
            }
        }
        best
    }

    // --- polar transform ---------------------------------------------------

    #[test]
    fn maximum_flux_at_phase_zero_lands_on_top() {
        let c = curve(vec![0.0, 0.25], vec![2.0, 1.0]);
        let pts = to_polar(&c).unwrap();
        let (x0, y0) = pts.xy()[0];
        assert_eq!((x0, y0), (0.0, 1.0));
    }

    #[test]
    fn minimum_flux_at_quarter_phase_lands_on_inner_right() {
        let c = curve(vec![0.0, 0.25], vec![2.0, 1.0]);
        let pts = to_polar(&c).unwrap();
        let (x1, y1) = pts.xy()[1];
        assert!((x1 - 0.2).abs() < 1e-15, "x = {x1}");
        assert!(y1.abs() < 1e-15, "y = {y1}");
    }

    #[test]
    fn constant_flux_maps_to_unit_circle() {
        let c = curve(vec![0.0, 0.5], vec![1.0, 1.0]);
        let pts = to_polar(&c).unwrap();
        let (x0, y0) = pts.xy()[0];
        let (x1, y1) = pts.xy()[1];
        assert_eq!((x0, y0), (0.0, 1.0));
        assert!(x1.abs() < 1e-15);
        assert_eq!(y1, -1.0);
    }

    #[test]
    fn empty_curve_is_an_error() {
        let c = PhasedCurve::new(vec![], vec![], false).unwrap();
        assert!(matches!(to_polar(&c), Err(ImagingError::EmptyCurve)));
    }

    #[test]
    fn rotating_phases_rotates_points_clockwise() {
        // Equivariance oracle: rotate the fold by Δ and compare the polar
        // points against an explicit rotation of the originals.
        let mut rng = rng_from_seed(3);
        let n = 64;
        let phases: Vec<f64> = (0..n).map(|j| (j as f64 + 0.5) / n as f64).collect();
        let fluxes: Vec<f64> = (0..n).map(|_| uniform_in(&mut rng, 0.5, 1.0)).collect();
        let delta = 0.3;
        let original = to_polar(&curve(phases.clone(), fluxes.clone())).unwrap();

        let mut shifted: Vec<(f64, f64)> = phases
            .iter()
            .zip(&fluxes)
            .map(|(&p, &f)| (crate::curve::wrap_unit(p + delta), f))
            .collect();
        shifted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let (sp, sf): (Vec<f64>, Vec<f64>) = shifted.into_iter().unzip();
        let rotated = to_polar(&curve(sp, sf)).unwrap();

        let alpha = std::f64::consts::TAU * delta;
        let (ca, sa) = (alpha.cos(), alpha.sin());
        let mut expected: Vec<(f64, f64)> = original
            .xy()
            .iter()
            .map(|&(x, y)| (x * ca + y * sa, y * ca - x * sa))
            .collect();
        let mut actual = rotated.xy().to_vec();
        let key = |p: &(f64, f64)| (p.0, p.1);
        expected.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        actual.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        for (e, a) in expected.iter().zip(&actual) {
            assert!((e.0 - a.0).abs() < 1e-9 && (e.1 - a.1).abs() < 1e-9);
        }
    }

    #[test]
    fn radius_bounds_hold_for_generated_curves() {
        let mut rng = rng_from_seed(17);
        let mut done = 0;
        while done < 50 {
            let morph = if done % 2 == 0 {
                Morphology::Detached
            } else {
                Morphology::Overcontact
            };
            let params = sample_binary_params(morph, &mut rng);
            let Ok((c, _)) = generate_curve(&params, None, 100) else {
                continue;
            };
            let pts = to_polar(&c).unwrap();
            for &(x, y) in pts.xy() {
                let r = (x * x + y * y).sqrt();
                assert!((0.2 - 1e-9..=1.0 + 1e-9).contains(&r), "r = {r}");
            }
            done += 1;
        }
    }

    // --- hexagonal binning -----------------------------------------------

    #[test]
    fn point_on_a_lattice_center_fills_exactly_that_bin() {
        let g = 8usize;
        let grid0 = HexGrid::empty(g);
        // Pick an A center inside the polar annulus.
        let id = {
            let dx = 2.0 / g as f64;
            let dy = dx * 3f64.sqrt() / 2.0;
            let (j, k) = (6usize, 6usize);
            let (x, y) = (-1.0 + j as f64 * dx, -1.0 + k as f64 * dy);
            let r = (x * x + y * y).sqrt();
            assert!((0.2..=1.0).contains(&r), "test center must be in annulus");
            let pts = PolarPoints::new(vec![(x, y)]).unwrap();
            let grid = hexbin_counts(&pts, g);
            let hit: Vec<usize> = (0..grid.n_centers())
                .filter(|&i| grid.counts()[i] > 0)
                .collect();
            assert_eq!(hit.len(), 1);
            assert_eq!(grid.counts()[hit[0]], 1);
            assert_eq!(grid.center_position(hit[0]), (x, y));
            hit[0]
        };
        assert!(id < grid0.n_centers());
    }

    #[test]
    fn coincident_points_share_one_bin() {
        let pts = PolarPoints::new(vec![(0.31, 0.4), (0.31, 0.4)]).unwrap();
        let grid = hexbin_counts(&pts, 12);
        assert_eq!(grid.max_count(), 2);
        assert_eq!(grid.counts().iter().sum::<u32>(), 2);
        assert_eq!(grid.n_points(), 2);
    }

    #[test]
    fn assignment_matches_exhaustive_oracle_on_random_points() {
        let mut rng = rng_from_seed(23);
        let grid = HexGrid::empty(20);
        for _ in 0..1000 {
            let phi = uniform_in(&mut rng, 0.0, std::f64::consts::TAU);
            let r = uniform_in(&mut rng, 0.2, 1.0);
            let (x, y) = (r * phi.sin(), r * phi.cos());
            assert_eq!(
                grid.assign(x, y),
                oracle_assign(&grid, x, y),
                "mismatch at ({x}, {y})"
            );
        }
    }

    #[test]
    fn count_conservation() {
        let mut rng = rng_from_seed(29);
        for &n in &[1usize, 7, 100, 953] {
            let xy: Vec<(f64, f64)> = (0..n)
                .map(|_| {
                    let phi = uniform_in(&mut rng, 0.0, std::f64::consts::TAU);
                    let r = uniform_in(&mut rng, 0.2, 1.0);
                    (r * phi.sin(), r * phi.cos())
                })
                .collect();
            let pts = PolarPoints::new(xy).unwrap();
            let grid = hexbin_counts(&pts, 24);
            assert_eq!(grid.counts().iter().sum::<u32>() as usize, n);
            assert_eq!(grid.n_points(), n);
        }
    }

    // --- rasterization -------------------------------------------------------

    #[test]
    fn empty_grid_rasterizes_to_black() {
        let grid = HexGrid::empty(24);
        let img = rasterize(&grid, 64);
        assert!(img.pixels().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn single_bin_lights_exactly_its_nearest_pixels() {
        let pts = PolarPoints::new(vec![(0.31, 0.4)]).unwrap();
        let grid = hexbin_counts(&pts, 8);
        let hot = grid.assign(0.31, 0.4);
        let img = rasterize(&grid, 64);
        for row in 0..64 {
            for col in 0..64 {
                let (x, y) = pixel_center_domain(row, col, 64);
                let expected = if grid.assign(x, y) == hot { 1.0 } else { 0.0 };
                assert_eq!(img.get(row, col), expected, "pixel ({row}, {col})");
            }
        }
    }

    #[test]
    fn pixel_assignment_matches_oracle_everywhere() {
        let grid = HexGrid::empty(24);
        for row in 0..RASTER_SIZE {
            for col in 0..RASTER_SIZE {
                let (x, y) = pixel_center_domain(row, col, RASTER_SIZE);
                assert_eq!(
                    grid.assign(x, y),
                    oracle_assign(&grid, x, y),
                    "pixel ({row}, {col})"
                );
            }
        }
    }

    #[test]
    fn rasterization_depends_only_on_counts() {
        let mut rng = rng_from_seed(31);
        let xy: Vec<(f64, f64)> = (0..200)
            .map(|_| {
                let phi = uniform_in(&mut rng, 0.0, std::f64::consts::TAU);
                let r = uniform_in(&mut rng, 0.2, 1.0);
                (r * phi.sin(), r * phi.cos())
            })
            .collect();
        let mut reversed = xy.clone();
        reversed.reverse();
        let g1 = hexbin_counts(&PolarPoints::new(xy).unwrap(), 16);
        let g2 = hexbin_counts(&PolarPoints::new(reversed).unwrap(), 16);
        assert_eq!(g1.counts(), g2.counts());
        assert_eq!(rasterize(&g1, 64), rasterize(&g2, 64));
    }

    // --- full pipeline ----------------------------------------------------

    #[test]
    fn transform_is_deterministic() {
        let params = sample_binary_params(Morphology::Overcontact, &mut rng_from_seed(5));
        let (c, _) = generate_curve(&params, None, 100).unwrap();
        let a = curve_to_image(&c, DEFAULT_GRIDSIZE).unwrap();
        let b = curve_to_image(&c, DEFAULT_GRIDSIZE).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn hundred_point_curve_conserves_counts() {
        let params = sample_binary_params(Morphology::Overcontact, &mut rng_from_seed(7));
        let (c, _) = generate_curve(&params, None, 100).unwrap();
        let pts = to_polar(&c).unwrap();
        let grid = hexbin_counts(&pts, DEFAULT_GRIDSIZE);
        assert_eq!(grid.counts().iter().sum::<u32>(), 100);
    }

    #[test]
    fn symmetric_curve_yields_mirror_symmetric_image() {
        // Build a curve whose fluxes are exactly mirror-symmetric in index,
        // so its polar points mirror across x = 0 to machine precision; the
        // raster must then mirror by columns within one pixel.
        let params = sample_binary_params(Morphology::Overcontact, &mut rng_from_seed(11));
        let (c, _) = generate_curve(&params, None, 100).unwrap();
        let mut fluxes = c.fluxes().to_vec();
        let n = fluxes.len();
        for j in 0..n / 2 {
            fluxes[n - 1 - j] = fluxes[j];
        }
        let sym = PhasedCurve::new(c.phases().to_vec(), fluxes, false).unwrap();
        let img = curve_to_image(&sym, DEFAULT_GRIDSIZE).unwrap();
        let s = img.size();
        for row in 0..s {
            for col in 0..s {
                let mc = s - 1 - col;
                let want = img.get(row, col);
                let ok = [mc.wrapping_sub(1), mc, mc + 1]
                    .iter()
                    .filter(|&&m| m < s)
                    .any(|&m| img.get(row, m) == want);
                assert!(ok, "no mirror match for pixel ({row}, {col})");
            }
        }
    }

    // --- PGM encoding ---------------------------------------------------------

    #[test]
    fn pgm_round_trip_preserves_quantized_pixels() {
        let params = sample_binary_params(Morphology::Detached, &mut rng_from_seed(13));
        let (c, _) = generate_curve(&params, None, 100).unwrap();
        let img = curve_to_image(&c, DEFAULT_GRIDSIZE).unwrap();
        let bytes = to_pgm_bytes(&img);
        assert!(bytes.starts_with(b"P5\n224 224\n255\n"));
        let back = from_pgm_bytes(&bytes).unwrap();
        assert_eq!(back, img.quantized());
        // A second encode is byte-identical.
        assert_eq!(to_pgm_bytes(&back), bytes);
    }

    #[test]
    fn pgm_rejects_malformed_input() {
        assert!(from_pgm_bytes(b"P2\n4 4\n255\n").is_err());
        assert!(from_pgm_bytes(b"P5\n4 4\n255\n\0\0").is_err());
        assert!(from_pgm_bytes(b"P5\n4 5\n255\n").is_err());
        assert!(from_pgm_bytes(b"").is_err());
    }

    proptest! {
        /// Radius bounds and count conservation for arbitrary well-formed
        /// curves.
        #[test]
        fn polar_and_binning_invariants(
            seed in 0u64..5_000,
            n in 16usize..200,
            gridsize in 4usize..40,
        ) {
            let mut rng = rng_from_seed(seed);
            let phases: Vec<f64> = (0..n).map(|j| (j as f64 + 0.5) / n as f64).collect();
            let fluxes: Vec<f64> = (0..n).map(|_| uniform_in(&mut rng, 0.1, 2.0)).collect();
            let c = PhasedCurve::new(phases, fluxes, false).unwrap();
            let pts = to_polar(&c).unwrap();
            for &(x, y) in pts.xy() {
                let r = (x * x + y * y).sqrt();
                prop_assert!((0.2 - 1e-9..=1.0 + 1e-9).contains(&r));
            }
            let grid = hexbin_counts(&pts, gridsize);
            prop_assert_eq!(grid.counts().iter().sum::<u32>() as usize, n);
        }
    }
}
