//! Reference-region thresholding rules for scar: n standard deviations above
//! remote myocardium, and full width at half maximum of a seed region.

use crate::error::{Error, Result};
use crate::grid::{Mask2, Slice2D};
use crate::qc::{connected_components, Connectivity};

/// Default multiplier for the nSD rule.
pub const DEFAULT_NSD: f64 = 5.0;

/// Threshold together with the pixels it selects.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdMask {
    pub threshold: f64,
    pub mask: Vec<bool>,
}

fn check_lengths(values: &[f64], masks: &[&[bool]]) -> Result<()> {
    for m in masks {
        if m.len() != values.len() {
            return Err(Error::DimensionMismatch(format!("{} values vs mask of {}", values.len(), m.len())));
        }
    }
    Ok(())
}

/// Mean and population standard deviation of the selected values.
pub fn masked_mean_sd(values: &[f64], mask: &[bool]) -> Option<(f64, f64, usize)> {
    let sel: Vec<f64> = values.iter().zip(mask).filter(|(_, &m)| m).map(|(&v, _)| v).collect();
    if sel.is_empty() {
        return None;
    }
    let n = sel.len() as f64;
    let mean = sel.iter().sum::<f64>() / n;
    let var = sel.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt(), sel.len()))
}

/// Scar = myocardium pixels brighter than `mean(remote) + n * sd(remote)`.
pub fn nsd_threshold(values: &[f64], myo: &[bool], remote: &[bool], n: f64) -> Result<ThresholdMask> {
    check_lengths(values, &[myo, remote])?;
    if !(n >= 0.0 && n.is_finite()) {
        return Err(Error::InvalidArgument(format!("n must be non-negative, got {n}")));
    }
    if remote.iter().zip(myo).any(|(&r, &m)| r && !m) {
        return Err(Error::InvalidArgument("remote region must lie inside the myocardium".into()));
    }
    let (mean, sd, count) =
        masked_mean_sd(values, remote).ok_or_else(|| Error::Degenerate("empty remote region".into()))?;
    if count < 2 {
        return Err(Error::Degenerate("remote region needs at least two pixels for a standard deviation".into()));
    }
    let threshold = mean + n * sd;
    let mask = values.iter().zip(myo).map(|(&v, &m)| m && v > threshold).collect();
    Ok(ThresholdMask { threshold, mask })
}

/// Remote myocardium chosen automatically: the myocardium pixels at or
/// below the median myocardial intensity.
pub fn remote_lower_half(values: &[f64], myo: &[bool]) -> Result<Vec<bool>> {
    check_lengths(values, &[myo])?;
    let mut sel: Vec<f64> = values.iter().zip(myo).filter(|(_, &m)| m).map(|(&v, _)| v).collect();
    if sel.is_empty() {
        return Err(Error::Degenerate("empty myocardium".into()));
    }
    sel.sort_by(f64::total_cmp);
    let median = crate::preprocess::percentile_sorted(&sel, 50.0);
    Ok(values.iter().zip(myo).map(|(&v, &m)| m && v <= median).collect())
}

/// Scar = myocardium pixels at or above half the maximum inside `seed`.
pub fn fwhm_threshold(values: &[f64], myo: &[bool], seed: &[bool]) -> Result<ThresholdMask> {
    check_lengths(values, &[myo, seed])?;
    let max = values
        .iter()
        .zip(seed)
        .filter(|(_, &s)| s)
        .map(|(&v, _)| v)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
        .ok_or_else(|| Error::Degenerate("empty FWHM seed".into()))?;
    let threshold = 0.5 * max;
    let mask = values.iter().zip(myo).map(|(&v, &m)| m && v >= threshold).collect();
    Ok(ThresholdMask { threshold, mask })
}

/// Default FWHM seed: the 8-connected region of myocardium pixels at or
/// above half the myocardial maximum that contains the brightest pixel.
pub fn fwhm_default_seed(slice: &Slice2D, myo: &Mask2) -> Result<Mask2> {
    slice.ensure_same_shape(myo, "fwhm seed")?;
    let (mut best, mut best_i) = (f64::NEG_INFINITY, None);
    for (i, (&v, &m)) in slice.as_slice().iter().zip(myo.as_slice()).enumerate() {
        if m && v > best {
            best = v;
            best_i = Some(i);
        }
    }
    let peak = best_i.ok_or_else(|| Error::Degenerate("empty myocardium".into()))?;
    let half = 0.5 * best;
    let bright = Mask2::from_vec(
        slice.width(),
        slice.height(),
        slice.as_slice().iter().zip(myo.as_slice()).map(|(&v, &m)| m && v >= half).collect(),
    )?;
    let cc = connected_components(&bright, Connectivity::Eight);
    let id = cc.labels.as_slice()[peak];
    Ok(cc.component_mask(id))
}
