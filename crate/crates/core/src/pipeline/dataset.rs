//! On-disk subject collections: `<id>_image.nii` with optional `<id>_label.nii`.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nifti::{read_labels, read_volume, write_labels, write_volume, DataType, SliceOrder};
use crate::rng::rng_from_seed;
use crate::volume::{Class, SubjectRecord};

pub const SUBJECTS_FILE: &str = "subjects.csv";
pub const IMAGE_SUFFIX: &str = "_image.nii";
pub const LABEL_SUFFIX: &str = "_label.nii";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub subject_id: String,
    pub image_path: PathBuf,
    pub label_path: Option<PathBuf>,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
    pub pathological: Option<bool>,
}

pub fn image_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}{IMAGE_SUFFIX}"))
}

pub fn label_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}{LABEL_SUFFIX}"))
}

/// Loads one subject. Pathology is taken from the labels when present.
pub fn load_subject(dir: &Path, id: &str, order: SliceOrder) -> Result<SubjectRecord> {
    let ip = image_path(dir, id);
    if !ip.is_file() {
        return Err(Error::Missing(format!("{}", ip.display())));
    }
    let image = read_volume(&fs::read(&ip)?, order)?;
    let lp = label_path(dir, id);
    let labels = if lp.is_file() { Some(read_labels(&fs::read(&lp)?, order)?) } else { None };
    let pathological = labels.as_ref().map(|l| l.contains_class(Class::Scar));
    SubjectRecord::new(id, image, labels, pathological)
}

/// Writes image as float32 and labels as uint8.
pub fn save_subject(dir: &Path, subject: &SubjectRecord) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(image_path(dir, &subject.id), write_volume(&subject.image, DataType::Float32)?)?;
    if let Some(l) = &subject.labels {
        fs::write(label_path(dir, &subject.id), write_labels(l, DataType::Uint8)?)?;
    }
    Ok(())
}

/// Subject ids found in `dir`, sorted.
pub fn subject_ids(dir: &Path) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir)? {
        let name = entry?.file_name();
        if let Some(id) = name.to_str().and_then(|n| n.strip_suffix(IMAGE_SUFFIX)) {
            if !id.is_empty() {
                ids.push(id.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

/// Reads every subject in `dir` and describes it.
pub fn scan_dataset_dir(dir: &Path, order: SliceOrder) -> Result<Vec<DatasetEntry>> {
    let mut out = Vec::new();
    for id in subject_ids(dir)? {
        let s = load_subject(dir, &id, order)?;
        let (d, sp) = (s.image.dims(), s.image.spacing());
        out.push(DatasetEntry {
            label_path: s.labels.as_ref().map(|_| label_path(dir, &id)),
            image_path: image_path(dir, &id),
            subject_id: id,
            nx: d.nx,
            ny: d.ny,
            nz: d.nz,
            dx: sp.dx,
            dy: sp.dy,
            dz: sp.dz,
            pathological: s.pathological,
        });
    }
    Ok(out)
}

pub fn load_dataset(dir: &Path, order: SliceOrder) -> Result<Vec<SubjectRecord>> {
    subject_ids(dir)?.iter().map(|id| load_subject(dir, id, order)).collect()
}

pub fn write_dataset_manifest(path: &Path, entries: &[DatasetEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if entries.is_empty() {
        w.write_record(["subject_id", "image_path", "label_path", "nx", "ny", "nz", "dx", "dy", "dz", "pathological"])?;
    }
    for e in entries {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset_manifest(path: &Path) -> Result<Vec<DatasetEntry>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Seeded shuffle then split; the first part holds `round(n * fraction)` ids.
pub fn train_test_split(ids: &[String], fraction: f64, seed: u64) -> Result<(Vec<String>, Vec<String>)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Range(format!("split fraction {fraction} outside [0, 1]")));
    }
    let mut v = ids.to_vec();
    v.sort();
    v.shuffle(&mut rng_from_seed(seed));
    let k = (ids.len() as f64 * fraction).round() as usize;
    let test = v.split_off(k);
    Ok((v, test))
}
