//! Intensity normalisation, centre crop/pad, resampling and the scar-stage
//! input masking.

use crate::error::{Error, Result};
use crate::grid::{Grid2, Mask2, Slice2D};

/// Intensity given to the LV cavity in the scar-stage input.
pub const CAVITY_INTENSITY: f64 = 2.5;

/// Percentile ranks used as pseudo-minimum and pseudo-maximum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormParams {
    pub p_lo: f64,
    pub p_hi: f64,
    pub clamp: bool,
}

impl Default for NormParams {
    fn default() -> Self {
        Self { p_lo: 5.0, p_hi: 95.0, clamp: true }
    }
}

impl NormParams {
    fn validate(&self) -> Result<()> {
        if !(0.0 <= self.p_lo && self.p_lo < self.p_hi && self.p_hi <= 100.0) {
            return Err(Error::InvalidArgument(format!(
                "percentiles must satisfy 0 <= lo < hi <= 100, got {} / {}",
                self.p_lo, self.p_hi
            )));
        }
        Ok(())
    }
}

/// Percentile of already sorted values, linear interpolation between ranks.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Percentile of unsorted values.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Degenerate("percentile of empty set".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(percentile_sorted(&sorted, p))
}

/// Pseudo-min/max of `values` under `params`.
pub fn percentile_bounds(values: &[f64], params: &NormParams) -> Result<(f64, f64)> {
    params.validate()?;
    if values.is_empty() {
        return Err(Error::Degenerate("no values to normalise".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = percentile_sorted(&sorted, params.p_lo);
    let hi = percentile_sorted(&sorted, params.p_hi);
    if hi <= lo {
        return Err(Error::Degenerate(format!("pseudo-min {lo} equals pseudo-max {hi}")));
    }
    Ok((lo, hi))
}

#[inline]
fn rescale(v: f64, lo: f64, hi: f64, clamp: bool) -> f64 {
    let r = (v - lo) / (hi - lo);
    if clamp {
        r.clamp(0.0, 1.0)
    } else {
        r
    }
}

/// Min-max normalisation against the percentile pseudo-extremes.
pub fn percentile_normalize(slice: &Slice2D, params: &NormParams) -> Result<Slice2D> {
    let (lo, hi) = percentile_bounds(slice.as_slice(), params)?;
    Ok(slice.map(|v| rescale(v, lo, hi, params.clamp)))
}

/// Offset such that `out[i] = in[i + offset]` for a centred crop or pad.
/// Padding puts the odd extra pixel on the high side.
pub fn center_offset(input: usize, target: usize) -> isize {
    (input as isize - target as isize) / 2
}

/// Copies a `width`×`height` window whose origin sits at `(x0, y0)` in
/// `grid`, filling outside pixels with `fill`.
pub fn crop_window<T: Copy>(grid: &Grid2<T>, x0: isize, y0: isize, width: usize, height: usize, fill: T) -> Grid2<T> {
    Grid2::from_fn(width, height, |x, y| grid.get_signed(x0 + x as isize, y0 + y as isize).unwrap_or(fill))
}

/// Inverse of [`crop_window`]: places `window` at `(x0, y0)` on a
/// `width`×`height` canvas of `fill`.
pub fn paste_window<T: Copy>(
    window: &Grid2<T>,
    x0: isize,
    y0: isize,
    width: usize,
    height: usize,
    fill: T,
) -> Grid2<T> {
    Grid2::from_fn(width, height, |x, y| window.get_signed(x as isize - x0, y as isize - y0).unwrap_or(fill))
}

/// Centre crop or zero-pad to `target_w`×`target_h`.
pub fn crop_or_pad_to<T: Copy + Default>(grid: &Grid2<T>, target_w: usize, target_h: usize) -> Grid2<T> {
    let ox = center_offset(grid.width(), target_w);
    let oy = center_offset(grid.height(), target_h);
    crop_window(grid, ox, oy, target_w, target_h, T::default())
}

/// Centre crop or zero-pad to a `target`×`target` square.
pub fn crop_or_pad<T: Copy + Default>(grid: &Grid2<T>, target: usize) -> Result<Grid2<T>> {
    if target == 0 || target % 2 != 0 {
        return Err(Error::InvalidArgument(format!("crop/pad target must be even and positive, got {target}")));
    }
    Ok(crop_or_pad_to(grid, target, target))
}

/// Interpolation used by [`resample`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Interp {
    Bilinear,
    Nearest,
}

/// Corner-aligned source coordinate of destination index `i`.
#[inline]
fn source_coord(i: usize, n_in: usize, n_out: usize) -> f64 {
    if n_out == 1 {
        (n_in - 1) as f64 / 2.0
    } else {
        i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64
    }
}

/// Nearest-neighbour resampling for any pixel type (labels, masks).
pub fn resample_nearest<T: Copy>(grid: &Grid2<T>, out_w: usize, out_h: usize) -> Result<Grid2<T>> {
    if out_w == 0 || out_h == 0 || grid.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "cannot resample {}x{} to {out_w}x{out_h}",
            grid.width(),
            grid.height()
        )));
    }
    let xs: Vec<usize> = (0..out_w).map(|i| source_coord(i, grid.width(), out_w).round() as usize).collect();
    let ys: Vec<usize> = (0..out_h).map(|j| source_coord(j, grid.height(), out_h).round() as usize).collect();
    Ok(Grid2::from_fn(out_w, out_h, |x, y| grid.get(xs[x], ys[y])))
}

/// Resamples an intensity slice with corner-aligned pixel centres.
pub fn resample(slice: &Slice2D, out_w: usize, out_h: usize, mode: Interp) -> Result<Slice2D> {
    match mode {
        Interp::Nearest => resample_nearest(slice, out_w, out_h),
        Interp::Bilinear => {
            if out_w == 0 || out_h == 0 || slice.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "cannot resample {}x{} to {out_w}x{out_h}",
                    slice.width(),
                    slice.height()
                )));
            }
            let (w, h) = (slice.width(), slice.height());
            let taps = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f64)> {
                (0..n_out)
                    .map(|i| {
                        let s = source_coord(i, n_in, n_out);
                        let i0 = s.floor() as usize;
                        let i1 = (i0 + 1).min(n_in - 1);
                        (i0, i1, s - i0 as f64)
                    })
                    .collect()
            };
            let tx = taps(w, out_w);
            let ty = taps(h, out_h);
            Ok(Grid2::from_fn(out_w, out_h, |x, y| {
                let (x0, x1, fx) = tx[x];
                let (y0, y1, fy) = ty[y];
                let top = slice.get(x0, y0) * (1.0 - fx) + slice.get(x1, y0) * fx;
                let bottom = slice.get(x0, y1) * (1.0 - fx) + slice.get(x1, y1) * fx;
                top * (1.0 - fy) + bottom * fy
            }))
        }
    }
}

/// Integer-rounded centroid `(x, y)` of a mask.
pub fn mask_centroid(mask: &Mask2) -> Result<(isize, isize)> {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for (x, y) in mask.points() {
        sx += x as f64;
        sy += y as f64;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Degenerate("empty mask has no centroid".into()));
    }
    Ok(((sx / n as f64).round() as isize, (sy / n as f64).round() as isize))
}

/// A crop together with the origin needed to map it back.
#[derive(Clone, Debug, PartialEq)]
pub struct CenteredCrop<T> {
    pub crop: Grid2<T>,
    /// Position of the crop's `(0, 0)` pixel in the source image.
    pub origin: (isize, isize),
}

/// `size`×`size` window centred on the myocardium centroid, zero-padded
/// where it leaves the image.
pub fn crop_at_centroid<T: Copy + Default>(slice: &Grid2<T>, myo_mask: &Mask2, size: usize) -> Result<CenteredCrop<T>> {
    slice.ensure_same_shape(myo_mask, "crop_at_centroid")?;
    if size == 0 {
        return Err(Error::InvalidArgument("crop size must be positive".into()));
    }
    let (cx, cy) = mask_centroid(myo_mask)?;
    let half = (size / 2) as isize;
    let origin = (cx - half, cy - half);
    Ok(CenteredCrop { crop: crop_window(slice, origin.0, origin.1, size, size, T::default()), origin })
}

/// Scar-stage input: background 0, myocardium normalised to `[0, 1]` by its
/// own 5th/95th percentiles, cavity fixed at [`CAVITY_INTENSITY`].
///
/// A myocardium without intensity spread carries no contrast and maps to 0.
pub fn mask_for_scar(slice: &Slice2D, myo_mask: &Mask2, cavity_mask: &Mask2) -> Result<Slice2D> {
    slice.ensure_same_shape(myo_mask, "mask_for_scar myocardium")?;
    slice.ensure_same_shape(cavity_mask, "mask_for_scar cavity")?;
    if myo_mask.and(cavity_mask).any() {
        return Err(Error::InvalidArgument("myocardium and cavity masks overlap".into()));
    }
    let myo_values: Vec<f64> =
        slice.as_slice().iter().zip(myo_mask.as_slice()).filter(|(_, &m)| m).map(|(&v, _)| v).collect();
    if myo_values.is_empty() {
        return Err(Error::Degenerate("empty myocardium".into()));
    }
    let params = NormParams::default();
    let bounds = match percentile_bounds(&myo_values, &params) {
        Ok(b) => Some(b),
        Err(Error::Degenerate(_)) => None,
        Err(e) => return Err(e),
    };
    let data = slice
        .as_slice()
        .iter()
        .zip(myo_mask.as_slice().iter().zip(cavity_mask.as_slice()))
        .map(|(&v, (&m, &c))| {
            if m {
                bounds.map_or(0.0, |(lo, hi)| rescale(v, lo, hi, true))
            } else if c {
                CAVITY_INTENSITY
            } else {
                0.0
            }
        })
        .collect();
    Grid2::from_vec(slice.width(), slice.height(), data)
}
