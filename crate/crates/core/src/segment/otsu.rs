//! Otsu threshold over a 256-bin histogram.

use crate::error::{Error, Result};

/// Number of histogram bins.
pub const OTSU_BINS: usize = 256;

/// Threshold found by [`otsu_threshold`]. Values falling in bins above
/// `bin` are foreground.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OtsuThreshold {
    pub min: f64,
    pub bin_width: f64,
    /// Last bin of the low class.
    pub bin: usize,
    /// Upper edge of `bin` in value units.
    pub value: f64,
}

impl OtsuThreshold {
    #[inline]
    pub fn bin_of(&self, v: f64) -> usize {
        bin_index(v, self.min, self.bin_width)
    }

    #[inline]
    pub fn is_foreground(&self, v: f64) -> bool {
        self.bin_of(v) > self.bin
    }
}

#[inline]
fn bin_index(v: f64, min: f64, width: f64) -> usize {
    let b = ((v - min) / width).floor();
    if b <= 0.0 {
        0
    } else {
        (b as usize).min(OTSU_BINS - 1)
    }
}

/// Compares `a_num / a_den` with `b_num / b_den` exactly when the cross
/// products fit in 128 bits.
fn ratio_greater(a_num: u128, a_den: u128, b_num: u128, b_den: u128) -> bool {
    match (a_num.checked_mul(b_den), b_num.checked_mul(a_den)) {
        (Some(l), Some(r)) => l > r,
        _ => (a_num as f64 / a_den as f64) > (b_num as f64 / b_den as f64),
    }
}

/// Split index maximising the between-class variance of a histogram whose
/// bin `i` has level `i`. Class 0 is bins `0..=t`. Ties go to the lowest `t`.
pub fn otsu_from_histogram(counts: &[u64]) -> Result<usize> {
    if counts.len() < 2 {
        return Err(Error::Degenerate("histogram needs at least two bins".into()));
    }
    let total: u128 = counts.iter().map(|&c| u128::from(c)).sum();
    let total_sum: u128 = counts.iter().enumerate().map(|(i, &c)| i as u128 * u128::from(c)).sum();

    // between-class variance * N^2 = (N*s0 - n0*S)^2 / (n0 * n1)
    let mut best: Option<(usize, u128, u128)> = None;
    let (mut n0, mut s0) = (0u128, 0u128);
    for (t, &c) in counts.iter().enumerate().take(counts.len() - 1) {
        n0 += u128::from(c);
        s0 += t as u128 * u128::from(c);
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let a = (total * s0) as i128 - (n0 * total_sum) as i128;
        let num = a.unsigned_abs().pow(2);
        let den = n0 * n1;
        if best.is_none_or(|(_, bn, bd)| ratio_greater(num, den, bn, bd)) {
            best = Some((t, num, den));
        }
    }
    best.map(|(t, _, _)| t).ok_or_else(|| Error::Degenerate("histogram has a single occupied bin".into()))
}

/// Otsu threshold of raw values, binned uniformly over `[min, max]`.
pub fn otsu_threshold(values: &[f64]) -> Result<OtsuThreshold> {
    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in values {
        if !v.is_finite() {
            return Err(Error::InvalidArgument("non-finite value".into()));
        }
        min = min.min(v);
        max = max.max(v);
    }
    if values.is_empty() || max <= min {
        return Err(Error::Degenerate("Otsu needs at least two distinct values".into()));
    }
    let width = (max - min) / OTSU_BINS as f64;
    let mut hist = vec![0u64; OTSU_BINS];
    for &v in values {
        hist[bin_index(v, min, width)] += 1;
    }
    let bin = otsu_from_histogram(&hist)?;
    Ok(OtsuThreshold { min, bin_width: width, bin, value: min + (bin + 1) as f64 * width })
}

/// Foreground mask of `values` under their Otsu threshold.
pub fn otsu_binarize(values: &[f64]) -> Result<Vec<bool>> {
    let t = otsu_threshold(values)?;
    Ok(values.iter().map(|&v| t.is_foreground(v)).collect())
}
