//! Dataset construction and manifests.
//!
//! A dataset is a directory of phased-curve text files and PGM images plus a
//! line-delimited JSON manifest describing every sample: its class labels,
//! the physical parameters it was synthesized from, the augmentation recipe
//! applied, and the per-sample seed. Everything is reproducible from the
//! manifest's master seed: sample `i` uses the seed derived at index `i`, so
//! regeneration is independent per sample and safe to parallelize.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{apply, AugmentConfig, AugmentError};
use crate::curve::{align_minimum, write_phased_curve, CurveError, Passband, PhasedCurve};
use crate::imaging::{
    curve_to_image, from_pgm_bytes, to_pgm_bytes, ImagingError, DEFAULT_GRIDSIZE,
};
use crate::metrics::{auc, confusion, report, MetricsError};
use crate::model::{fnv1a_hex, predict_dataset, Checkpoint, ImageDataset, ModelError};
use crate::rng::{derive_seed, rng_from_seed};
use crate::synth::{
    generate_curve, sample_binary_params, sample_spot_params, BinaryParams, Morphology,
    SpotParams, SynthError,
};

/// Schema identifier written into every manifest header.
pub const MANIFEST_SCHEMA: &str = "ebmorph-dataset";
/// Current manifest schema version.
pub const MANIFEST_VERSION: u32 = 1;
/// File name of the manifest inside a dataset directory.
pub const MANIFEST_FILENAME: &str = "manifest.jsonl";

/// Phase-grid resolution curves are synthesized at before augmentation.
const SYNTH_PHASES: usize = 100;
/// Upper bound on parameter redraws for one sample before giving up.
const MAX_REDRAWS: usize = 10_000;
/// Train fraction of the per-class split (by index): 4 of every 5 samples.
const TRAIN_NUM: usize = 4;
const TRAIN_DEN: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("invalid generation spec: {0}")]
    InvalidSpec(String),
    #[error("invalid manifest: {0}")]
    BadManifest(String),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> DatasetError {
    DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

// =============================================================================
// Class plans
// =============================================================================

/// Which morphologies a generation run covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MorphologyChoice {
    Detached,
    Overcontact,
    Both,
}

/// How spots are assigned across a generation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpotChoice {
    /// No sample carries a spot.
    None,
    /// Every sample carries a spot.
    With,
    /// Spots split the population in half (see [`sample_plan`]).
    Mixed,
}

/// The three classification heads the pipeline trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// Detached (class 0) vs overcontact (class 1), spots mixed in.
    Binary,
    /// Unspotted (0) vs spotted (1) among detached systems.
    DetachedSpot,
    /// Unspotted (0) vs spotted (1) among overcontact systems.
    OvercontactSpot,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Binary => "binary",
            Task::DetachedSpot => "detached_spot",
            Task::OvercontactSpot => "overcontact_spot",
        }
    }

    /// Class label of a sample under this task, or `None` if the sample is
    /// outside the task's population.
    pub fn label(self, morphology: Morphology, has_spot: bool) -> Option<u8> {
        match self {
            Task::Binary => Some(match morphology {
                Morphology::Detached => 0,
                Morphology::Overcontact => 1,
            }),
            Task::DetachedSpot => {
                (morphology == Morphology::Detached).then_some(u8::from(has_spot))
            }
            Task::OvercontactSpot => {
                (morphology == Morphology::Overcontact).then_some(u8::from(has_spot))
            }
        }
    }

    /// Generation axes whose samples cover this task's two classes evenly.
    pub fn generation_axes(self) -> (MorphologyChoice, SpotChoice) {
        match self {
            Task::Binary => (MorphologyChoice::Both, SpotChoice::Mixed),
            Task::DetachedSpot => (MorphologyChoice::Detached, SpotChoice::Mixed),
            Task::OvercontactSpot => (MorphologyChoice::Overcontact, SpotChoice::Mixed),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "binary" => Ok(Task::Binary),
            "detached_spot" => Ok(Task::DetachedSpot),
            "overcontact_spot" => Ok(Task::OvercontactSpot),
            other => Err(format!(
                "unknown task {other:?} (expected binary, detached_spot, or overcontact_spot)"
            )),
        }
    }
}

/// Expands generation axes into the full per-sample (morphology, spotted)
/// list, `n_per_class` samples per class, grouped class by class.
///
/// The class axis is what varies: with both morphologies the classes are
/// detached/overcontact (under `Mixed`, spots alternate within each class so
/// any index-prefix split stays half-spotted); with a single morphology and
/// `Mixed` the classes are unspotted/spotted.
pub fn sample_plan(
    morphology: MorphologyChoice,
    spots: SpotChoice,
    n_per_class: usize,
) -> Vec<(Morphology, bool)> {
    let morphs: &[Morphology] = match morphology {
        MorphologyChoice::Detached => &[Morphology::Detached],
        MorphologyChoice::Overcontact => &[Morphology::Overcontact],
        MorphologyChoice::Both => &[Morphology::Detached, Morphology::Overcontact],
    };
    let mut plan = Vec::new();
    for &m in morphs {
        match spots {
            SpotChoice::None => plan.extend((0..n_per_class).map(|_| (m, false))),
            SpotChoice::With => plan.extend((0..n_per_class).map(|_| (m, true))),
            SpotChoice::Mixed => match morphology {
                // Spot state is an attribute, not the class: alternate it.
                MorphologyChoice::Both => {
                    plan.extend((0..n_per_class).map(|i| (m, i % 2 == 1)));
                }
                // Spot state is the class: one block per state.
                _ => {
                    plan.extend((0..n_per_class).map(|_| (m, false)));
                    plan.extend((0..n_per_class).map(|_| (m, true)));
                }
            },
        }
    }
    plan
}

// =============================================================================
// Manifest
// =============================================================================

/// First line of a manifest file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub schema: String,
    pub version: u32,
    pub master_seed: u64,
}

/// One sample: file locations (relative to the manifest's directory), class
/// labels, and the exact inputs that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: usize,
    pub curve: String,
    pub image: String,
    pub morphology: Morphology,
    pub has_spot: bool,
    pub passband: Passband,
    pub params: BinaryParams,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub spot: Option<SpotParams>,
    pub augment: AugmentConfig,
    pub seed: u64,
}

/// A parsed dataset manifest: header plus one entry per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub header: ManifestHeader,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Line-delimited JSON: header line followed by one entry per line.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        out.push_str(&serde_json::to_string(&self.header).expect("header serializes"));
        out.push('\n');
        for entry in &self.entries {
            out.push_str(&serde_json::to_string(entry).expect("entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, DatasetError> {
        let mut lines = text.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| DatasetError::BadManifest("empty manifest".into()))?;
        let header: ManifestHeader = serde_json::from_str(header_line)
            .map_err(|e| DatasetError::BadManifest(format!("bad header: {e}")))?;
        if header.schema != MANIFEST_SCHEMA {
            return Err(DatasetError::BadManifest(format!(
                "schema {:?} is not {MANIFEST_SCHEMA:?}",
                header.schema
            )));
        }
        if header.version != MANIFEST_VERSION {
            return Err(DatasetError::BadManifest(format!(
                "version {} is not {MANIFEST_VERSION}",
                header.version
            )));
        }
        let mut entries = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ManifestEntry = serde_json::from_str(line)
                .map_err(|e| DatasetError::BadManifest(format!("bad entry on line {}: {e}", i + 2)))?;
            entries.push(entry);
        }
        Ok(DatasetManifest { header, entries })
    }

    /// Stable content hash of the serialized manifest, recorded in trained
    /// checkpoints to tie a model to its dataset.
    pub fn hash(&self) -> String {
        fnv1a_hex(self.serialize().as_bytes())
    }

    /// Confirms every referenced curve and image file exists under `base`.
    pub fn validate_files(&self, base: &Path) -> Result<(), DatasetError> {
        for entry in &self.entries {
            for rel in [&entry.curve, &entry.image] {
                let path = base.join(rel);
                if !path.is_file() {
                    return Err(DatasetError::BadManifest(format!(
                        "referenced file missing: {}",
                        path.display()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Reads and parses a manifest file.
pub fn read_manifest(path: &Path) -> Result<DatasetManifest, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    DatasetManifest::parse(&text)
}

// =============================================================================
// Generation
// =============================================================================

/// Complete description of one generation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenerationSpec {
    pub morphology: MorphologyChoice,
    pub spots: SpotChoice,
    pub passband: Passband,
    pub n_per_class: usize,
    pub master_seed: u64,
    pub gridsize: usize,
}

impl GenerationSpec {
    pub fn new(
        morphology: MorphologyChoice,
        spots: SpotChoice,
        passband: Passband,
        n_per_class: usize,
        master_seed: u64,
    ) -> Self {
        GenerationSpec {
            morphology,
            spots,
            passband,
            n_per_class,
            master_seed,
            gridsize: DEFAULT_GRIDSIZE,
        }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.n_per_class < 1 {
            return Err(DatasetError::InvalidSpec("n_per_class must be ≥ 1".into()));
        }
        if self.gridsize < 1 {
            return Err(DatasetError::InvalidSpec("gridsize must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// One fully synthesized sample, before any file is written.
struct SampleRecord {
    params: BinaryParams,
    spot: Option<SpotParams>,
    curve: PhasedCurve,
    image_bytes: Vec<u8>,
}

/// Runs the full per-sample pipeline — draw parameters (redrawing while the
/// geometry is unrealizable), synthesize, augment, rasterize — from one seed.
fn synthesize_sample(
    morphology: Morphology,
    spotted: bool,
    passband: Passband,
    gridsize: usize,
    seed: u64,
) -> Result<SampleRecord, DatasetError> {
    let mut rng = rng_from_seed(seed);
    let mut redraws = 0;
    let (params, spot, curve) = loop {
        let params = sample_binary_params(morphology, &mut rng);
        let spot = spotted.then(|| sample_spot_params(&mut rng));
        match generate_curve(&params, spot.as_ref(), SYNTH_PHASES) {
            Ok((curve, _label)) => break (params, spot, curve),
            Err(SynthError::InvalidParams(_)) | Err(SynthError::InvalidPotential { .. }) => {
                redraws += 1;
                if redraws >= MAX_REDRAWS {
                    return Err(DatasetError::InvalidSpec(format!(
                        "no realizable parameters after {MAX_REDRAWS} redraws (seed {seed})"
                    )));
                }
            }
            Err(e) => return Err(e.into()),
        }
    };
    let config = AugmentConfig::for_passband(passband);
    let augmented = apply(&config, &curve, &mut rng)?;
    // Rotate the deepest minimum to phase 0, exactly as observational
    // preprocessing does before imaging, so training and inference see the
    // same alignment convention.
    let aligned = align_minimum(&augmented)?;
    let image = curve_to_image(&aligned, gridsize)?;
    Ok(SampleRecord {
        params,
        spot,
        curve: aligned,
        image_bytes: to_pgm_bytes(&image),
    })
}

/// Generates a dataset directory: `curves/*.txt`, `images/*.pgm`, and a
/// manifest. Samples are generated in parallel; every byte of output is
/// determined by the spec alone.
pub fn build_dataset(spec: &GenerationSpec, out_dir: &Path) -> Result<DatasetManifest, DatasetError> {
    spec.validate()?;
    let curves_dir = out_dir.join("curves");
    let images_dir = out_dir.join("images");
    std::fs::create_dir_all(&curves_dir).map_err(|e| io_err(&curves_dir, e))?;
    std::fs::create_dir_all(&images_dir).map_err(|e| io_err(&images_dir, e))?;

    let plan = sample_plan(spec.morphology, spec.spots, spec.n_per_class);
    let config = AugmentConfig::for_passband(spec.passband);
    let entries: Vec<ManifestEntry> = plan
        .par_iter()
        .enumerate()
        .map(|(id, &(morphology, spotted))| {
            let seed = derive_seed(spec.master_seed, id as u64);
            let record =
                synthesize_sample(morphology, spotted, spec.passband, spec.gridsize, seed)?;
            let curve_rel = format!("curves/{id:05}.txt");
            let image_rel = format!("images/{id:05}.pgm");
            write_phased_curve(&record.curve, &out_dir.join(&curve_rel))?;
            let image_path = out_dir.join(&image_rel);
            std::fs::write(&image_path, &record.image_bytes)
                .map_err(|e| io_err(&image_path, e))?;
            Ok(ManifestEntry {
                id,
                curve: curve_rel,
                image: image_rel,
                morphology,
                has_spot: spotted,
                passband: spec.passband,
                params: record.params,
                spot: record.spot,
                augment: config,
                seed,
            })
        })
        .collect::<Result<_, DatasetError>>()?;

    let manifest = DatasetManifest {
        header: ManifestHeader {
            schema: MANIFEST_SCHEMA.into(),
            version: MANIFEST_VERSION,
            master_seed: spec.master_seed,
        },
        entries,
    };
    let manifest_path = out_dir.join(MANIFEST_FILENAME);
    std::fs::write(&manifest_path, manifest.serialize()).map_err(|e| io_err(&manifest_path, e))?;
    Ok(manifest)
}

// =============================================================================
// Task assembly
// =============================================================================

/// Number of training samples in a class of `len` (the rest validate).
fn train_count(len: usize) -> usize {
    len * TRAIN_NUM / TRAIN_DEN
}

/// Splits labeled quantized images into train/validation sets per class, by
/// index within each class: the first `train_count` go to training.
fn split_by_class(
    labeled: impl Iterator<Item = (u8, Vec<u8>)>,
    class_train: [usize; 2],
) -> (ImageDataset, ImageDataset) {
    let mut train = ImageDataset::new();
    let mut val = ImageDataset::new();
    let mut seen = [0usize; 2];
    for (label, pixels) in labeled {
        let class = usize::from(label);
        if seen[class] < class_train[class] {
            train.push_quantized(pixels, label);
        } else {
            val.push_quantized(pixels, label);
        }
        seen[class] += 1;
    }
    (train, val)
}

/// Loads a task's train/validation image sets from a dataset directory.
///
/// Entries outside the task's population are skipped; within each class the
/// first 80% (by manifest order) train and the rest validate.
pub fn load_task_datasets(
    manifest: &DatasetManifest,
    base: &Path,
    task: Task,
) -> Result<(ImageDataset, ImageDataset), DatasetError> {
    let mut class_total = [0usize; 2];
    let mut selected = Vec::new();
    for entry in &manifest.entries {
        if let Some(label) = task.label(entry.morphology, entry.has_spot) {
            class_total[usize::from(label)] += 1;
            selected.push((label, entry));
        }
    }
    let class_train = [train_count(class_total[0]), train_count(class_total[1])];
    let mut labeled = Vec::with_capacity(selected.len());
    for (label, entry) in selected {
        let path = base.join(&entry.image);
        let bytes = std::fs::read(&path).map_err(|e| io_err(&path, e))?;
        let raster = from_pgm_bytes(&bytes)?;
        labeled.push((label, raster.quantize()));
    }
    Ok(split_by_class(labeled.into_iter(), class_train))
}

/// Generates a task's train/validation image sets directly in memory, with
/// the same plan, seeds, and split arithmetic as the on-disk path: building
/// with `n_train + n_val` per class and loading back gives identical sets
/// when `n_train/n_val` is the standard 80/20 split.
pub fn build_task_datasets(
    task: Task,
    passband: Passband,
    n_train_per_class: usize,
    n_val_per_class: usize,
    master_seed: u64,
    gridsize: usize,
) -> Result<(ImageDataset, ImageDataset), DatasetError> {
    let n_per_class = n_train_per_class + n_val_per_class;
    if n_per_class < 1 {
        return Err(DatasetError::InvalidSpec("n_per_class must be ≥ 1".into()));
    }
    let (morphology, spots) = task.generation_axes();
    let plan = sample_plan(morphology, spots, n_per_class);
    let labeled: Vec<(u8, Vec<u8>)> = plan
        .par_iter()
        .enumerate()
        .map(|(id, &(m, spotted))| {
            let seed = derive_seed(master_seed, id as u64);
            let record = synthesize_sample(m, spotted, passband, gridsize, seed)?;
            let raster = from_pgm_bytes(&record.image_bytes)?;
            let label = task
                .label(m, spotted)
                .expect("plan samples are always in the task population");
            Ok((label, raster.quantize()))
        })
        .collect::<Result<_, DatasetError>>()?;
    Ok(split_by_class(
        labeled.into_iter(),
        [n_train_per_class, n_train_per_class],
    ))
}

// =============================================================================
// Evaluation reports
// =============================================================================

/// Evaluates `ckpt` on the validation split of its task within the dataset at
/// `base` and renders the canonical report: pretty-printed JSON with a
/// trailing newline. The report identifies its inputs by content (task, seed,
/// manifest hashes) rather than by file path, so identical generate → train →
/// evaluate runs produce byte-identical reports wherever they live on disk.
///
/// AUC is omitted when the validation split contains a single class, where
/// ranking quality is undefined.
pub fn evaluation_report(
    ckpt: &Checkpoint,
    manifest: &DatasetManifest,
    base: &Path,
) -> Result<String, DatasetError> {
    let task: Task = ckpt
        .meta
        .task
        .parse()
        .map_err(|e: String| DatasetError::InvalidSpec(format!("checkpoint task: {e}")))?;
    let model = ckpt.to_model()?;
    let (_train_set, val_set) = load_task_datasets(manifest, base, task)?;
    if val_set.is_empty() {
        return Err(DatasetError::InvalidSpec(
            "validation split is empty; generate more samples per class".into(),
        ));
    }
    let predictions = predict_dataset(&model, &val_set)?;
    let predicted: Vec<bool> = predictions.iter().map(|&(p, _)| p).collect();
    let scores: Vec<f64> = predictions.iter().map(|&(_, s)| s).collect();
    let truths: Vec<bool> = (0..val_set.len()).map(|i| val_set.label(i) == 1).collect();

    let counts = confusion(&predicted, &truths)?;
    let mut metrics = report(&counts)?;
    metrics.auc = auc(&scores, &truths).ok();

    let body = serde_json::json!({
        "task": task.as_str(),
        "train_seed": ckpt.meta.seed,
        "trained_manifest_hash": ckpt.meta.manifest_hash,
        "evaluated_manifest_hash": manifest.hash(),
        "n_validation": val_set.len(),
        "counts": counts,
        "metrics": metrics,
    });
    let text = serde_json::to_string_pretty(&body).expect("report serializes");
    Ok(text + "\n")
}

// =============================================================================
// Tests
// =============================================================================
