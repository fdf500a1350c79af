//! Two-stage hierarchical classification: a morphology model decides
//! detached vs overcontact, then exactly one morphology-specific spot model
//! decides whether the system is spotted.

use crate::curve::PhasedCurve;
use crate::imaging::{curve_to_image, ImagingError};
use crate::model::{class1_probability, Checkpoint, Scratch};
use crate::model::ModelError;
use crate::synth::Morphology;

/// Error from hierarchical classification: either a checkpoint/model
/// problem or a failure to rasterize the curve.
#[derive(Debug, thiserror::Error)]
pub enum HierError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

/// Outcome of the two-stage classification.
///
/// `p_morph` is the morphology model's probability that the system is
/// overcontact (class 1); `morphology` is `Overcontact` exactly when
/// `p_morph > 0.5`, so an exact tie resolves to `Detached` (class 0).
/// `p_spot` is the selected branch model's probability that the system is
/// spotted; `has_spot` is `p_spot > 0.5`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HierLabel {
    pub morphology: Morphology,
    pub has_spot: bool,
    pub p_morph: f64,
    pub p_spot: f64,
}

/// Classifies a phased curve by rasterizing it (hexagonal binning at
/// `gridsize`, quantized exactly as the trainer consumes images), running
/// the morphology model, and then running only the spot model that matches
/// the predicted morphology.
///
/// All three checkpoints are validated against the expected architecture up
/// front; the weights of the non-selected spot model are never evaluated.
pub fn classify_hierarchical(
    binary_ckpt: &Checkpoint,
    detached_spot_ckpt: &Checkpoint,
    overcontact_spot_ckpt: &Checkpoint,
    curve: &PhasedCurve,
    gridsize: usize,
) -> Result<HierLabel, HierError> {
    let binary = binary_ckpt.to_model()?;
    detached_spot_ckpt.validate_arch()?;
    overcontact_spot_ckpt.validate_arch()?;

    let image = curve_to_image(curve, gridsize)?.quantized();
    let mut scratch = Scratch::new();

    let p_morph = class1_probability(&binary, image.pixels(), &mut scratch)?;
    let morphology = if p_morph > 0.5 {
        Morphology::Overcontact
    } else {
        Morphology::Detached
    };
    let branch_ckpt = match morphology {
        Morphology::Detached => detached_spot_ckpt,
        Morphology::Overcontact => overcontact_spot_ckpt,
    };
    let branch = branch_ckpt.to_model()?;
    let p_spot = class1_probability(&branch, image.pixels(), &mut scratch)?;

    Ok(HierLabel {
        morphology,
        has_spot: p_spot > 0.5,
        p_morph,
        p_spot,
    })
}
