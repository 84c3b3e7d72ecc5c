//! Synthetic dataset planning and emission.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::IndexedRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nifti::{write_labels, write_volume, DataType};
use crate::rng::{derive_seed, rng_from_seed};
use crate::synthesis::labels::LabelAugSpec;
use crate::synthesis::style::{augment_request, swap_label_style, synthesize_image, SynthParams, SynthesisRequest};
use crate::volume::SubjectRecord;

pub const MANIFEST_FILE: &str = "manifest.csv";

/// Provenance of one emitted subject.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub output_id: String,
    pub source_subject: String,
    pub style_subject: String,
    pub rotation_deg: Option<i32>,
    pub elastic_seed: Option<u64>,
    pub morph_op: Option<String>,
    pub morph_radius: Option<usize>,
    pub stage: String,
}

impl ManifestRow {
    fn from_request(r: &SynthesisRequest) -> Self {
        let aug = r.augmentation.as_ref();
        Self {
            output_id: r.output_id.clone(),
            source_subject: r.source_subject.clone(),
            style_subject: r.style_subject.clone(),
            rotation_deg: aug.map(|a| a.rotation_deg),
            elastic_seed: aug.and_then(|a| a.elastic.map(|e| e.seed)),
            morph_op: aug.map(|a| a.morph.to_string()),
            morph_radius: aug.map(|a| a.morph_radius),
            stage: r.stage.to_string(),
        }
    }
}

/// `augmentations` augmented copies of every labelled subject plus, when
/// `swaps` is set, one label/style swap with a random subject of the
/// opposite pathology status.
pub fn plan_requests(
    subjects: &[SubjectRecord],
    augmentations: usize,
    swaps: bool,
    seed: u64,
) -> Result<Vec<SynthesisRequest>> {
    let mut out = Vec::new();
    for (i, s) in subjects.iter().enumerate().filter(|(_, s)| s.labels.is_some()) {
        let sub_seed = derive_seed(seed, i as u64);
        for a in 0..augmentations {
            let spec = LabelAugSpec::sample(derive_seed(sub_seed, a as u64));
            out.push(augment_request(s, &spec, &format!("{}_aug{a:02}", s.id))?);
        }
        if swaps {
            let partners: Vec<&SubjectRecord> = subjects
                .iter()
                .filter(|o| {
                    o.id != s.id && o.labels.is_some() && o.pathological.is_some() && o.pathological != s.pathological
                })
                .collect();
            if let Some(style) = partners.choose(&mut rng_from_seed(derive_seed(sub_seed, u64::MAX))) {
                out.push(swap_label_style(s, style, &format!("{}_swap_{}", s.id, style.id))?);
            }
        }
    }
    Ok(out)
}

/// Synthesises every request and writes `<output_id>_image.nii`,
/// `<output_id>_label.nii` and `manifest.csv` to `out_dir`. Request `i`
/// uses the seed `derive_seed(root_seed, i)`.
pub fn emit_dataset(
    requests: &[SynthesisRequest],
    subjects: &[SubjectRecord],
    params: &SynthParams,
    root_seed: u64,
    out_dir: &Path,
) -> Result<Vec<ManifestRow>> {
    let by_id: HashMap<&str, &SubjectRecord> = subjects.iter().map(|s| (s.id.as_str(), s)).collect();
    std::fs::create_dir_all(out_dir)?;
    requests
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let style = by_id
                .get(r.style_subject.as_str())
                .ok_or_else(|| Error::Missing(format!("style subject '{}'", r.style_subject)))?;
            let image = synthesize_image(r, style, params, derive_seed(root_seed, i as u64))?;
            std::fs::write(
                out_dir.join(format!("{}_image.nii", r.output_id)),
                write_volume(&image, DataType::Float32)?,
            )?;
            std::fs::write(
                out_dir.join(format!("{}_label.nii", r.output_id)),
                write_labels(&r.labels, DataType::Uint8)?,
            )?;
            Ok(())
        })
        .collect::<Result<Vec<()>>>()?;
    let rows: Vec<ManifestRow> = requests.iter().map(ManifestRow::from_request).collect();
    let mut w = csv::Writer::from_path(out_dir.join(MANIFEST_FILE))?;
    if rows.is_empty() {
        w.write_record([
            "output_id",
            "source_subject",
            "style_subject",
            "rotation_deg",
            "elastic_seed",
            "morph_op",
            "morph_radius",
            "stage",
        ])?;
    }
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(rows)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
