//! Light-curve morphology pipeline for eclipsing binaries.
//!
//! The crate is organized as a pipeline:
//!
//! 1. [`curve`] — photometry parsing, phase folding, binning, normalization,
//!    and minimum alignment.
//! 2. [`synth`] — synthetic light-curve generation for detached and
//!    overcontact systems, with optional cool-spot modulation.
//! 3. [`augment`] — survey-noise emulation (Gaussian noise, outliers,
//!    decimation).
//! 4. [`imaging`] — the polar transform, hexagonal binning, and 224×224
//!    rasterization that turn a phased curve into a grayscale image.
//! 5. [`model`] — a compact convolutional network trained from scratch on the
//!    rasterized images (no deep-learning framework).
//! 6. [`hier`] — two-stage hierarchical classification: morphology first,
//!    then a morphology-specific spot model.
//! 7. [`metrics`] — confusion counts, derived classification metrics, and AUC.
//! 8. [`dataset`] — dataset manifests and deterministic dataset builds.
//!
//! Every random decision flows through a seeded ChaCha8 stream (see [`rng`]),
//! so a fixed seed reproduces datasets, checkpoints, and reports byte for
//! byte.

pub mod augment;
pub mod curve;
pub mod dataset;
pub mod hier;
pub mod imaging;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod synth;

pub use curve::{Ephemeris, EpochKind, LightCurve, Passband, PhasedCurve};
pub use dataset::{
    build_dataset, build_task_datasets, evaluation_report, load_task_datasets, read_manifest,
    DatasetError, DatasetManifest, GenerationSpec, MorphologyChoice, SpotChoice, Task,
};
pub use hier::{classify_hierarchical, HierError, HierLabel};
pub use imaging::{HexGrid, ImageRaster, PolarPoints};
pub use synth::{BinaryParams, Morphology, SpotParams, SynthLabel};

/// Configures the global thread pool from the `EBMORPH_THREADS` environment
/// variable. Parallel sections cap at this many threads (default: available
/// cores). Calling it more than once is harmless; only the first call wins.
pub fn configure_threads() {
    if let Ok(v) = std::env::var("EBMORPH_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}
