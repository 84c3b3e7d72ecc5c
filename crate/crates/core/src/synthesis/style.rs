//! Label/style pairing and the procedural label-conditioned synthesiser.

use std::fmt;

use log::warn;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::gaussian_blur;
use crate::grid::Grid2;
use crate::rng::rng_from_seed;
use crate::synthesis::labels::LabelAugSpec;
use crate::volume::{Class, LabelMap, SubjectRecord, Volume};

/// Training set a synthetic subject is meant for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrainingStage {
    /// Myocardium stage only.
    Myocardium,
    /// Myocardium and scar stages.
    MyocardiumAndScar,
}

impl TrainingStage {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainingStage::Myocardium => "myo",
            TrainingStage::MyocardiumAndScar => "myo+scar",
        }
    }
}

impl fmt::Display for TrainingStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A label map to be rendered in the appearance of a style subject.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthesisRequest {
    pub output_id: String,
    pub labels: LabelMap,
    pub source_subject: String,
    pub style_subject: String,
    pub augmentation: Option<LabelAugSpec>,
    pub stage: TrainingStage,
}

fn labels_of(s: &SubjectRecord) -> Result<&LabelMap> {
    s.labels.as_ref().ok_or_else(|| Error::Missing(format!("labels for subject '{}'", s.id)))
}

/// Pairs the labels of one subject with the image of another. Swapped
/// labels only feed the myocardium stage.
pub fn swap_label_style(
    labels_from: &SubjectRecord,
    style_from: &SubjectRecord,
    output_id: &str,
) -> Result<SynthesisRequest> {
    let labels = labels_of(labels_from)?.clone();
    labels_of(style_from)?;
    if labels_from.pathological.is_some() && labels_from.pathological == style_from.pathological {
        warn!("label subject '{}' and style subject '{}' share pathology status", labels_from.id, style_from.id);
    }
    Ok(SynthesisRequest {
        output_id: output_id.to_string(),
        labels,
        source_subject: labels_from.id.clone(),
        style_subject: style_from.id.clone(),
        augmentation: None,
        stage: TrainingStage::Myocardium,
    })
}

/// Augments every slice of a subject's labels; the subject is its own style.
pub fn augment_request(subject: &SubjectRecord, spec: &LabelAugSpec, output_id: &str) -> Result<SynthesisRequest> {
    let source = labels_of(subject)?;
    let slices = source.slices().iter().enumerate().map(|(z, s)| spec.apply(s, z)).collect::<Result<Vec<_>>>()?;
    Ok(SynthesisRequest {
        output_id: output_id.to_string(),
        labels: LabelMap::from_slices(&slices, source.spacing())?,
        source_subject: subject.id.clone(),
        style_subject: subject.id.clone(),
        augmentation: Some(*spec),
        stage: TrainingStage::MyocardiumAndScar,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    /// Gaussian blur of the class-mean map, pixels.
    pub blend_sigma: f64,
    /// Additive noise sd as a fraction of the style intensity range.
    pub noise_fraction: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self { blend_sigma: 1.0, noise_fraction: 0.02 }
    }
}

/// Mean and population sd of the style image per class.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassStats {
    pub mean: f64,
    pub sd: f64,
}

fn stats(values: impl Iterator<Item = f64>) -> Option<ClassStats> {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    Some(ClassStats { mean, sd })
}

/// Per-class statistics of `style`, indexed by class value.
pub fn style_statistics(style: &SubjectRecord) -> Result<[Option<ClassStats>; 4]> {
    let labels = labels_of(style)?;
    let img = style.image.data();
    Ok(Class::ALL.map(|c| stats(labels.data().iter().zip(img).filter(|(&l, _)| l == c.as_u8()).map(|(_, &v)| v))))
}

/// Renders `request.labels` with the class statistics of `style`: a blurred
/// class-mean map plus class texture drawn from the fitted Gaussians (shifted
/// to zero mean within each class) plus additive noise.
pub fn synthesize_image(
    request: &SynthesisRequest,
    style: &SubjectRecord,
    params: &SynthParams,
    seed: u64,
) -> Result<Volume> {
    if style.id != request.style_subject {
        return Err(Error::InvalidArgument(format!(
            "style subject '{}' does not match request style '{}'",
            style.id, request.style_subject
        )));
    }
    if !(params.blend_sigma >= 0.0 && params.noise_fraction >= 0.0) {
        return Err(Error::InvalidArgument("synthesis parameters must be non-negative".into()));
    }
    let per_class = style_statistics(style)?;
    let global =
        stats(style.image.data().iter().copied()).ok_or_else(|| Error::Degenerate("empty style image".into()))?;
    let labels = &request.labels;
    let dims = labels.dims();
    let mut class_stats = [global; 4];
    for c in Class::ALL {
        let i = c.as_u8() as usize;
        match per_class[i] {
            Some(s) => class_stats[i] = s,
            None if labels.contains_class(c) => {
                warn!("style subject '{}' has no {:?} pixels; using global statistics", style.id, c);
            }
            None => {}
        }
    }

    let mut rng = rng_from_seed(seed);
    let z_draws: Vec<f64> = (0..dims.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut texture = vec![0.0; dims.len()];
    for c in Class::ALL {
        let idx: Vec<usize> = (0..dims.len()).filter(|&i| labels.data()[i] == c.as_u8()).collect();
        if idx.is_empty() {
            continue;
        }
        let mean_z = idx.iter().map(|&i| z_draws[i]).sum::<f64>() / idx.len() as f64;
        let sd = class_stats[c.as_u8() as usize].sd;
        for &i in &idx {
            texture[i] = sd * (z_draws[i] - mean_z);
        }
    }
    let (lo, hi) =
        style.image.data().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let noise_sd = params.noise_fraction * (hi - lo);

    let mut out = Vec::with_capacity(dims.len());
    for (z, label_slice) in labels.slices().iter().enumerate() {
        let mean_map: Grid2<f64> = label_slice.map(|l| class_stats[l as usize].mean);
        let blended = gaussian_blur(&mean_map, params.blend_sigma)?;
        let base = z * dims.slice_len();
        for (i, &m) in blended.as_slice().iter().enumerate() {
            let noise = if noise_sd > 0.0 {
                {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    noise_sd * z
                }
            } else {
                0.0
            };
            out.push(m + texture[base + i] + noise);
        }
    }
    Volume::new(dims, labels.spacing(), out)
}
