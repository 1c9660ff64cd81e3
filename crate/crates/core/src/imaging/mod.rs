//! Erasure and final-state imaging.
//!
//! Each site is imaged independently: the camera reports a Poisson photon
//! count whose mean depends on whether an atom is present, and the site is
//! declared occupied at or above an integer threshold. A shot consists of
//! two erasure images (`e1` before the drive, `e2` after it) and the final
//! readout `e3`, in which a set bit means the atom was found in `|g>`.

mod io;
mod model;
mod shot;

pub use io::{ShotBatch, SHOT_MAGIC};
pub use model::{
    bell_imaging, calibrate_imaging, manybody_imaging, poisson_tail, ImagingModel, PreparationModel, ReadoutModel,
    DEFAULT_PREP_ERROR,
};
pub use shot::{
    excise, image_shot, rebinarize, site_truths, synthesize_shot, Excised, ExcisionPolicy, ImageSequence, ShotModels,
    ShotRecord, SiteTruth,
};
