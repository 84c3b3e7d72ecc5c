//! Masks produced outside this crate, read from `<subject_id>_<stage>.nii`.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::{Dims, Mask3};
use crate::nifti::{read_labels, SliceOrder};
use crate::segment::Stage;
use crate::volume::Class;

pub fn import_path(dir: &Path, subject_id: &str, stage: Stage) -> PathBuf {
    dir.join(format!("{subject_id}_{}.nii", stage.as_str()))
}

/// Reads the predicted label volume for `subject_id` and returns the mask of
/// the classes produced by `stage`: the wall (myocardium and scar) for the
/// myocardium stage, scar for the scar stage.
pub fn import_masks(dir: &Path, subject_id: &str, stage: Stage, expected: Dims, order: SliceOrder) -> Result<Mask3> {
    let path = import_path(dir, subject_id, stage);
    if !path.is_file() {
        return Err(Error::Missing(format!("predicted mask {}", path.display())));
    }
    let labels = read_labels(&std::fs::read(&path)?, order)?;
    if labels.dims() != expected {
        return Err(Error::DimensionMismatch(format!(
            "{}: dims {:?} do not match subject dims {:?}",
            path.display(),
            labels.dims(),
            expected
        )));
    }
    Ok(match stage {
        Stage::Myocardium => labels.wall_mask(),
        Stage::Scar => labels.mask_of(&[Class::Scar]),
    })
}
