//! Classical segmenters behind the two stage interfaces of the cascade.

pub mod em;
pub mod import;
pub mod myo;
pub mod otsu;
pub mod threshold;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{LabelSlice, Mask2, Slice2D};
use crate::volume::{slice_mask, Class};

pub use em::{em_fit, em_fit_counts, em_scar_segment, Component, EmFit, EmOptions, Mixture1D};
pub use import::{import_masks, import_path};
pub use myo::EmMyocardiumSegmenter;
pub use otsu::{otsu_binarize, otsu_from_histogram, otsu_threshold, OtsuThreshold, OTSU_BINS};
pub use threshold::{fwhm_default_seed, fwhm_threshold, nsd_threshold, remote_lower_half, ThresholdMask, DEFAULT_NSD};

/// Cascade stage a segmenter serves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    Myocardium,
    Scar,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Myocardium => "myo",
            Stage::Scar => "scar",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "myo" | "myocardium" => Ok(Stage::Myocardium),
            "scar" => Ok(Stage::Scar),
            other => Err(Error::InvalidArgument(format!("unknown stage '{other}'"))),
        }
    }
}

/// Input to the myocardium stage: one slice of the normalised box crop.
#[derive(Clone, Copy, Debug)]
pub struct MyoStageInput<'a> {
    pub subject_id: &'a str,
    pub slice_index: usize,
    pub image: &'a Slice2D,
    /// Reference labels in the geometry of `image`, when available.
    pub reference: Option<&'a LabelSlice>,
}

/// Input to the scar stage: one slice of the centroid crop.
#[derive(Clone, Copy, Debug)]
pub struct ScarStageInput<'a> {
    pub subject_id: &'a str,
    pub slice_index: usize,
    pub image: &'a Slice2D,
    pub myocardium: &'a Mask2,
    pub cavity: &'a Mask2,
    pub reference: Option<&'a LabelSlice>,
}

/// Produces a wall mask (myocardium including scar) with the input's shape.
pub trait MyoSegmenter: Send + Sync {
    fn name(&self) -> &str;
    fn segment(&self, input: &MyoStageInput<'_>) -> Result<Mask2>;
}

/// Produces a scar mask contained in the input myocardium.
pub trait ScarSegmenter: Send + Sync {
    fn name(&self) -> &str;
    fn segment(&self, input: &ScarStageInput<'_>) -> Result<Mask2>;
}

/// Classical scar rule applied to myocardial intensities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ScarRule {
    /// `n` standard deviations above the lower half of the myocardium.
    Nsd {
        n: f64,
    },
    /// Half the maximum of the default bright seed.
    Fwhm,
    Otsu,
    Em,
}

impl Default for ScarRule {
    fn default() -> Self {
        ScarRule::Nsd { n: DEFAULT_NSD }
    }
}

impl FromStr for ScarRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "nsd" => Ok(ScarRule::default()),
            "fwhm" => Ok(ScarRule::Fwhm),
            "otsu" => Ok(ScarRule::Otsu),
            "em" => Ok(ScarRule::Em),
            _ => {
                let n = lower
                    .strip_suffix("sd")
                    .and_then(|n| n.parse::<f64>().ok())
                    .filter(|n| n.is_finite() && *n >= 0.0)
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown scar rule '{s}'")))?;
                Ok(ScarRule::Nsd { n })
            }
        }
    }
}

impl fmt::Display for ScarRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScarRule::Nsd { n } => write!(f, "{n}sd"),
            ScarRule::Fwhm => f.write_str("fwhm"),
            ScarRule::Otsu => f.write_str("otsu"),
            ScarRule::Em => f.write_str("em"),
        }
    }
}

/// Applies `rule` to the myocardial pixels of `image`.
pub fn apply_scar_rule(rule: ScarRule, image: &Slice2D, myo: &Mask2) -> Result<Mask2> {
    image.ensure_same_shape(myo, "scar rule")?;
    let (w, h) = (image.width(), image.height());
    if !myo.any() {
        return Ok(Mask2::filled(w, h, false));
    }
    let values = image.as_slice();
    let m = myo.as_slice();
    let mask = match rule {
        ScarRule::Nsd { n } => {
            let remote = remote_lower_half(values, m)?;
            nsd_threshold(values, m, &remote, n)?.mask
        }
        ScarRule::Fwhm => {
            let seed = fwhm_default_seed(image, myo)?;
            fwhm_threshold(values, m, seed.as_slice())?.mask
        }
        ScarRule::Otsu => {
            let inside: Vec<f64> = values.iter().zip(m).filter(|(_, &b)| b).map(|(&v, _)| v).collect();
            match otsu_threshold(&inside) {
                Ok(t) => values.iter().zip(m).map(|(&v, &b)| b && t.is_foreground(v)).collect(),
                Err(Error::Degenerate(_)) => vec![false; values.len()],
                Err(e) => return Err(e),
            }
        }
        ScarRule::Em => {
            let idx: Vec<usize> = (0..values.len()).filter(|&i| m[i]).collect();
            let inside: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
            let mut out = vec![false; values.len()];
            if inside.len() >= 2 {
                match em_scar_segment(&inside) {
                    Ok(flags) => idx.iter().zip(flags).for_each(|(&i, f)| out[i] = f),
                    Err(Error::Degenerate(_)) => {}
                    Err(e) => return Err(e),
                }
            }
            out
        }
    };
    Mask2::from_vec(w, h, mask)
}

/// Scar stage driven by a [`ScarRule`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RuleScarSegmenter {
    pub rule: ScarRule,
}

impl ScarSegmenter for RuleScarSegmenter {
    fn name(&self) -> &str {
        match self.rule {
            ScarRule::Nsd { .. } => "nsd",
            ScarRule::Fwhm => "fwhm",
            ScarRule::Otsu => "otsu",
            ScarRule::Em => "em",
        }
    }

    fn segment(&self, input: &ScarStageInput<'_>) -> Result<Mask2> {
        apply_scar_rule(self.rule, input.image, input.myocardium)
    }
}

fn require_reference<'a>(reference: Option<&'a LabelSlice>, subject_id: &str) -> Result<&'a LabelSlice> {
    reference.ok_or_else(|| Error::Missing(format!("reference labels for subject '{subject_id}'")))
}

/// Returns the reference wall. Stands in for a perfect myocardium stage.
#[derive(Clone, Copy, Debug, Default)]
pub struct OracleMyoSegmenter;

impl MyoSegmenter for OracleMyoSegmenter {
    fn name(&self) -> &str {
        "oracle"
    }

    fn segment(&self, input: &MyoStageInput<'_>) -> Result<Mask2> {
        let labels = require_reference(input.reference, input.subject_id)?;
        labels.ensure_same_shape(input.image, "oracle myocardium")?;
        Ok(slice_mask(labels, &[Class::Myocardium, Class::Scar]))
    }
}

/// Returns the reference scar inside the given myocardium.
#[derive(Clone, Copy, Debug, Default)]
pub struct OracleScarSegmenter;

impl ScarSegmenter for OracleScarSegmenter {
    fn name(&self) -> &str {
        "oracle"
    }

    fn segment(&self, input: &ScarStageInput<'_>) -> Result<Mask2> {
        let labels = require_reference(input.reference, input.subject_id)?;
        labels.ensure_same_shape(input.image, "oracle scar")?;
        Ok(slice_mask(labels, &[Class::Scar]).and(input.myocardium))
    }
}
