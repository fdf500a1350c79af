//! `ebmorph`: eclipsing-binary light-curve pipeline.
//!
//! Subcommands cover the full workflow: `generate` synthesizes labeled
//! datasets, `transform` rasterizes curves to images, `train` fits a
//! classification head, `evaluate` scores a checkpoint, `classify` runs the
//! two-stage hierarchical classifier on raw photometry, and `gradcheck`
//! verifies the network's gradients against finite differences.
//!
//! Every command exits nonzero with a single-line diagnostic on standard
//! error when something fails; machine-readable results go only to the
//! output paths (or, for `classify`/`gradcheck`, standard output).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use ebmorph::curve::{
    align_minimum, bin_phases, normalize_max_flux, parse_photometry, phase_fold,
    read_phased_curve, Ephemeris,
};
use ebmorph::dataset::{
    build_dataset, evaluation_report, load_task_datasets, read_manifest, DatasetManifest,
    GenerationSpec, MorphologyChoice, SpotChoice, Task,
};
use ebmorph::hier::classify_hierarchical;
use ebmorph::imaging::{curve_to_image, to_pgm_bytes, DEFAULT_GRIDSIZE};
use ebmorph::model::{
    grad_check, grad_check_mutation_probe, train_with_progress, Checkpoint, TrainConfig,
};
use ebmorph::synth::Morphology;
use ebmorph::{EpochKind, Passband};

/// Phase count test photometry is binned to when it is denser than this.
const BIN_TARGET: usize = 100;
/// Gradient-check pass thresholds (mirrored by the test suite).
const GRADCHECK_TOL: f64 = 1e-4;
const MUTATION_FLOOR: f64 = 1e-2;

#[derive(Parser)]
#[command(
    name = "ebmorph",
    version,
    about = "Eclipsing-binary light-curve synthesis, imaging, and classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MorphologyArg {
    Detached,
    Overcontact,
    Both,
}

impl From<MorphologyArg> for MorphologyChoice {
    fn from(m: MorphologyArg) -> Self {
        match m {
            MorphologyArg::Detached => MorphologyChoice::Detached,
            MorphologyArg::Overcontact => MorphologyChoice::Overcontact,
            MorphologyArg::Both => MorphologyChoice::Both,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SpotsArg {
    None,
    With,
    Mixed,
}

impl From<SpotsArg> for SpotChoice {
    fn from(s: SpotsArg) -> Self {
        match s {
            SpotsArg::None => SpotChoice::None,
            SpotsArg::With => SpotChoice::With,
            SpotsArg::Mixed => SpotChoice::Mixed,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PassbandArg {
    #[value(name = "gaia_g")]
    GaiaG,
    I,
    Tess,
}

impl From<PassbandArg> for Passband {
    fn from(p: PassbandArg) -> Self {
        match p {
            PassbandArg::GaiaG => Passband::GaiaG,
            PassbandArg::I => Passband::I,
            PassbandArg::Tess => Passband::Tess,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Binary,
    #[value(name = "detached_spot")]
    DetachedSpot,
    #[value(name = "overcontact_spot")]
    OvercontactSpot,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Binary => Task::Binary,
            TaskArg::DetachedSpot => Task::DetachedSpot,
            TaskArg::OvercontactSpot => Task::OvercontactSpot,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum EpochKindArg {
    Min,
    Max,
}

impl From<EpochKindArg> for EpochKind {
    fn from(k: EpochKindArg) -> Self {
        match k {
            EpochKindArg::Min => EpochKind::MinimumFlux,
            EpochKindArg::Max => EpochKind::MaximumFlux,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a labeled light-curve dataset (curves, images, manifest).
    Generate {
        /// Which morphologies to generate.
        #[arg(long)]
        morphology: MorphologyArg,
        /// How starspots are assigned across the samples.
        #[arg(long)]
        spots: SpotsArg,
        /// Survey whose noise and sampling the augmentation emulates.
        #[arg(long)]
        passband: PassbandArg,
        /// Samples per class.
        #[arg(long)]
        n_per_class: usize,
        /// Master seed; every sample's seed derives from it.
        #[arg(long)]
        seed: u64,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Rasterize phased-curve files into 224x224 PGM images.
    Transform {
        /// A curve file or a directory of curve files.
        #[arg(long = "in")]
        input: PathBuf,
        /// Hexagonal grid resolution.
        #[arg(long, default_value_t = DEFAULT_GRIDSIZE)]
        gridsize: usize,
        /// Output image directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a classification head on a generated dataset.
    Train {
        /// Dataset manifest produced by `generate`.
        #[arg(long)]
        manifest: PathBuf,
        /// Which head to train.
        #[arg(long)]
        task: TaskArg,
        /// Training epochs.
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        /// Mini-batch size.
        #[arg(long, default_value_t = 32)]
        batch: usize,
        /// SGD learning rate (must be positive).
        #[arg(long, default_value_t = 0.001)]
        lr: f64,
        /// Seed for weight initialization and batch shuffling.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Checkpoint output path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint on a dataset's validation split.
    Evaluate {
        /// Dataset manifest produced by `generate`.
        #[arg(long)]
        manifest: PathBuf,
        /// Trained checkpoint; its recorded task selects the samples.
        #[arg(long)]
        ckpt: PathBuf,
        /// JSON report output path.
        #[arg(long)]
        report: PathBuf,
    },
    /// Classify raw photometry with the two-stage hierarchical scheme.
    Classify {
        /// Photometry file: `time flux [error]` per line.
        #[arg(long)]
        curve: PathBuf,
        /// Orbital period, days.
        #[arg(long)]
        period: f64,
        /// Reference epoch, same time system as the photometry.
        #[arg(long)]
        epoch: f64,
        /// Whether the epoch marks a flux minimum or maximum.
        #[arg(long)]
        epoch_kind: EpochKindArg,
        /// Morphology (detached vs overcontact) checkpoint.
        #[arg(long)]
        binary: PathBuf,
        /// Detached-branch spot checkpoint.
        #[arg(long)]
        dspot: PathBuf,
        /// Overcontact-branch spot checkpoint.
        #[arg(long)]
        ospot: PathBuf,
    },
    /// Verify backpropagation against finite differences.
    Gradcheck {
        /// Seed for the checked (model, input) pair.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() {
    ebmorph::configure_threads();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return;
            }
            // Keep the error contract: one diagnostic line on stderr.
            let msg = e.to_string();
            let first = msg
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("error: invalid arguments");
            eprintln!("{first} (try --help)");
            std::process::exit(2);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            morphology,
            spots,
            passband,
            n_per_class,
            seed,
            out,
        } => cmd_generate(morphology, spots, passband, n_per_class, seed, &out),
        Command::Transform {
            input,
            gridsize,
            out,
        } => cmd_transform(&input, gridsize, &out),
        Command::Train {
            manifest,
            task,
            epochs,
            batch,
            lr,
            seed,
            out,
        } => cmd_train(&manifest, task.into(), epochs, batch, lr, seed, &out),
        Command::Evaluate {
            manifest,
            ckpt,
            report,
        } => cmd_evaluate(&manifest, &ckpt, &report),
        Command::Classify {
            curve,
            period,
            epoch,
            epoch_kind,
            binary,
            dspot,
            ospot,
        } => cmd_classify(&curve, period, epoch, epoch_kind.into(), &binary, &dspot, &ospot),
        Command::Gradcheck { seed } => cmd_gradcheck(seed),
    }
}

fn cmd_generate(
    morphology: MorphologyArg,
    spots: SpotsArg,
    passband: PassbandArg,
    n_per_class: usize,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let spec = GenerationSpec::new(
        morphology.into(),
        spots.into(),
        passband.into(),
        n_per_class,
        seed,
    );
    let manifest = build_dataset(&spec, out).context("dataset generation failed")?;
    eprintln!(
        "wrote {} samples to {} (manifest hash {})",
        manifest.entries.len(),
        out.display(),
        manifest.hash()
    );
    Ok(())
}

fn cmd_transform(input: &Path, gridsize: usize, out: &Path) -> Result<()> {
    let files: Vec<PathBuf> = if input.is_dir() {
        let mut v: Vec<PathBuf> = std::fs::read_dir(input)
            .with_context(|| format!("cannot read directory {}", input.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        v.sort();
        v
    } else {
        vec![input.to_path_buf()]
    };
    if files.is_empty() {
        bail!("no curve files found in {}", input.display());
    }
    std::fs::create_dir_all(out)
        .with_context(|| format!("cannot create directory {}", out.display()))?;
    files
        .par_iter()
        .map(|path| -> Result<()> {
            let curve = read_phased_curve(path)
                .with_context(|| format!("cannot read curve {}", path.display()))?;
            let image = curve_to_image(&curve, gridsize)
                .with_context(|| format!("cannot rasterize {}", path.display()))?;
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("curve");
            let target = out.join(format!("{stem}.pgm"));
            std::fs::write(&target, to_pgm_bytes(&image))
                .with_context(|| format!("cannot write {}", target.display()))?;
            Ok(())
        })
        .collect::<Result<Vec<()>>>()?;
    eprintln!("wrote {} images to {}", files.len(), out.display());
    Ok(())
}

/// Reads a manifest and resolves its file references against its directory.
fn manifest_with_base(path: &Path) -> Result<(DatasetManifest, PathBuf)> {
    let manifest = read_manifest(path)
        .with_context(|| format!("cannot read manifest {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    Ok((manifest, base))
}

fn cmd_train(
    manifest_path: &Path,
    task: Task,
    epochs: usize,
    batch: usize,
    lr: f64,
    seed: u64,
    out: &Path,
) -> Result<()> {
    if !(lr > 0.0) {
        bail!("--lr must be positive, got {lr}");
    }
    let (manifest, base) = manifest_with_base(manifest_path)?;
    let (train_set, val_set) = load_task_datasets(&manifest, &base, task)
        .context("cannot load task datasets")?;
    eprintln!(
        "training {task} on {} images ({} validation)",
        train_set.len(),
        val_set.len()
    );
    let cfg = TrainConfig {
        batch_size: batch,
        learning_rate: lr,
        epochs,
        seed,
    };
    let ckpt = train_with_progress(
        &train_set,
        &val_set,
        &cfg,
        task.as_str(),
        &manifest.hash(),
        |stats| match stats.val_accuracy {
            Some(va) => eprintln!(
                "epoch {}/{epochs}: loss {:.4} train-acc {:.3} val-acc {:.3}",
                stats.epoch, stats.train_loss, stats.train_accuracy, va
            ),
            None => eprintln!(
                "epoch {}/{epochs}: loss {:.4} train-acc {:.3}",
                stats.epoch, stats.train_loss, stats.train_accuracy
            ),
        },
    )
    .context("training failed")?;
    ckpt.save(out)
        .with_context(|| format!("cannot write checkpoint {}", out.display()))?;
    eprintln!("wrote checkpoint {}", out.display());
    Ok(())
}

fn cmd_evaluate(manifest_path: &Path, ckpt_path: &Path, report_path: &Path) -> Result<()> {
    let (manifest, base) = manifest_with_base(manifest_path)?;
    let ckpt = Checkpoint::load(ckpt_path)
        .with_context(|| format!("cannot load checkpoint {}", ckpt_path.display()))?;
    let text = evaluation_report(&ckpt, &manifest, &base)?;
    std::fs::write(report_path, &text)
        .with_context(|| format!("cannot write report {}", report_path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text).expect("the report is JSON");
    eprintln!(
        "accuracy {:.3} on {} validation images; report at {}",
        value["metrics"]["accuracy"].as_f64().unwrap_or(f64::NAN),
        value["n_validation"],
        report_path.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_classify(
    curve_path: &Path,
    period: f64,
    epoch: f64,
    epoch_kind: EpochKind,
    binary: &Path,
    dspot: &Path,
    ospot: &Path,
) -> Result<()> {
    let (lc, dropped) = parse_photometry(curve_path, None)
        .with_context(|| format!("cannot read photometry {}", curve_path.display()))?;
    if dropped > 0 {
        eprintln!("dropped {dropped} unusable photometry rows");
    }
    let eph = Ephemeris {
        period,
        epoch,
        epoch_kind,
    };
    let folded = phase_fold(&lc, &eph).context("phase folding failed")?;
    let binned = if folded.len() > BIN_TARGET {
        bin_phases(&folded, BIN_TARGET).context("phase binning failed")?
    } else {
        folded
    };
    let normalized = normalize_max_flux(&binned).context("normalization failed")?;
    let aligned = align_minimum(&normalized).context("minimum alignment failed")?;

    let load = |path: &Path| {
        Checkpoint::load(path)
            .with_context(|| format!("cannot load checkpoint {}", path.display()))
    };
    let label = classify_hierarchical(
        &load(binary)?,
        &load(dspot)?,
        &load(ospot)?,
        &aligned,
        DEFAULT_GRIDSIZE,
    )
    .context("classification failed")?;

    let morphology = match label.morphology {
        Morphology::Detached => "detached",
        Morphology::Overcontact => "overcontact",
    };
    let body = serde_json::json!({
        "morphology": morphology,
        "has_spot": label.has_spot,
        "p_morph": label.p_morph,
        "p_spot": label.p_spot,
    });
    println!("{body}");
    Ok(())
}

fn cmd_gradcheck(seed: u64) -> Result<()> {
    let check = grad_check(seed);
    let mutation = grad_check_mutation_probe(seed);
    let pass = check.max_rel_err < GRADCHECK_TOL && mutation > MUTATION_FLOOR;
    let body = serde_json::json!({
        "seed": seed,
        "max_rel_err": check.max_rel_err,
        "worst_index": check.worst_index,
        "n_checked": check.n_checked,
        "n_rejected": check.n_rejected,
        "mutation_response": mutation,
        "pass": pass,
    });
    println!("{body}");
    if !pass {
        bail!(
            "gradient check failed: max_rel_err {:.3e} (tolerance {GRADCHECK_TOL:.0e}), \
             mutation response {mutation:.3e} (floor {MUTATION_FLOOR:.0e})",
            check.max_rel_err
        );
    }
    Ok(())
}
