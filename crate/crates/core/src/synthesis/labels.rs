//! Label-space augmentation: rotation by multiples of 60°, elastic
//! deformation and scar morphology.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::gaussian_blur;
use crate::grid::{Grid2, LabelSlice, Mask2};
use crate::rng::rng_from_seed;
use crate::volume::Class;

pub const ROTATION_STEP_DEG: i32 = 60;
pub const DEFAULT_ELASTIC_ALPHA: f64 = 50.0;
pub const DEFAULT_ELASTIC_SIGMA: f64 = 5.0;
pub const DEFAULT_MORPH_RADIUS: usize = 1;

/// Exact (cos, sin) of `k * 60°`.
fn rotation_table(k: i32) -> (f64, f64) {
    let h = 3f64.sqrt() / 2.0;
    match k.rem_euclid(6) {
        0 => (1.0, 0.0),
        1 => (0.5, h),
        2 => (-0.5, h),
        3 => (-1.0, 0.0),
        4 => (-0.5, -h),
        _ => (0.5, -h),
    }
}

/// Rotates about `((w - 1) / 2, (h - 1) / 2)` with nearest-neighbour
/// sampling; pixels mapped from outside the slice become background.
pub fn rotate_labels(slice: &LabelSlice, deg: i32) -> Result<LabelSlice> {
    if deg % ROTATION_STEP_DEG != 0 {
        return Err(Error::InvalidArgument(format!("rotation {deg} is not a multiple of {ROTATION_STEP_DEG} degrees")));
    }
    let k = deg / ROTATION_STEP_DEG;
    if k.rem_euclid(6) == 0 {
        return Ok(slice.clone());
    }
    let (c, s) = rotation_table(k);
    let (w, h) = (slice.width(), slice.height());
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    Ok(Grid2::from_fn(w, h, |x, y| {
        let (px, py) = (x as f64 - cx, y as f64 - cy);
        // inverse rotation
        let sx = (c * px + s * py + cx).round() as isize;
        let sy = (-s * px + c * py + cy).round() as isize;
        slice.get_signed(sx, sy).unwrap_or(Class::Background.as_u8())
    }))
}

/// Elastic deformation parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElasticSpec {
    pub alpha: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl ElasticSpec {
    pub fn with_seed(seed: u64) -> Self {
        Self { alpha: DEFAULT_ELASTIC_ALPHA, sigma: DEFAULT_ELASTIC_SIGMA, seed }
    }
}

/// Smoothed random displacement fields `(dx, dy)` in pixels.
pub fn displacement_field(w: usize, h: usize, spec: &ElasticSpec) -> Result<(Grid2<f64>, Grid2<f64>)> {
    if !(spec.alpha >= 0.0 && spec.alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("elastic alpha {} must be >= 0", spec.alpha)));
    }
    if !(spec.sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("elastic sigma {} must be > 0", spec.sigma)));
    }
    let mut rng = rng_from_seed(spec.seed);
    let mut field = || -> Result<Grid2<f64>> {
        let noise = Grid2::from_fn(w, h, |_, _| rng.random_range(-1.0..1.0));
        Ok(gaussian_blur(&noise, spec.sigma)?.map(|v| v * spec.alpha))
    };
    let dx = field()?;
    let dy = field()?;
    Ok((dx, dy))
}

/// Resamples labels along a smoothed random displacement field,
/// nearest-neighbour with border clamping.
pub fn elastic_deform(slice: &LabelSlice, spec: &ElasticSpec) -> Result<LabelSlice> {
    let (w, h) = (slice.width(), slice.height());
    let (dx, dy) = displacement_field(w, h, spec)?;
    Ok(Grid2::from_fn(w, h, |x, y| {
        let sx = (x as f64 + dx.get(x, y)).round().clamp(0.0, w as f64 - 1.0) as usize;
        let sy = (y as f64 + dy.get(x, y)).round().clamp(0.0, h as f64 - 1.0) as usize;
        slice.get(sx, sy)
    }))
}

/// Morphological operation applied to the scar class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum MorphOp {
    #[default]
    None,
    Dilate,
    Open,
}

impl MorphOp {
    pub fn as_str(self) -> &'static str {
        match self {
            MorphOp::None => "none",
            MorphOp::Dilate => "dilate",
            MorphOp::Open => "open",
        }
    }
}

impl fmt::Display for MorphOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MorphOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(MorphOp::None),
            "dilate" => Ok(MorphOp::Dilate),
            "open" => Ok(MorphOp::Open),
            other => Err(Error::InvalidArgument(format!("unknown morphological op '{other}'"))),
        }
    }
}

/// Offsets of a disk of the given radius.
pub fn disk(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

pub fn dilate(mask: &Mask2, se: &[(isize, isize)]) -> Mask2 {
    Grid2::from_fn(mask.width(), mask.height(), |x, y| {
        se.iter().any(|&(dx, dy)| mask.get_signed(x as isize - dx, y as isize - dy) == Some(true))
    })
}

/// Erosion; pixels outside the grid count as background.
pub fn erode(mask: &Mask2, se: &[(isize, isize)]) -> Mask2 {
    Grid2::from_fn(mask.width(), mask.height(), |x, y| {
        se.iter().all(|&(dx, dy)| mask.get_signed(x as isize + dx, y as isize + dy) == Some(true))
    })
}

pub fn open(mask: &Mask2, se: &[(isize, isize)]) -> Mask2 {
    dilate(&erode(mask, se), se)
}

/// Applies `op` to the scar class. Dilation only claims myocardium pixels;
/// scar removed by opening reverts to myocardium, so the wall is unchanged.
pub fn morph(slice: &LabelSlice, op: MorphOp, radius: usize) -> Result<LabelSlice> {
    if op == MorphOp::None {
        return Ok(slice.clone());
    }
    if radius < 1 {
        return Err(Error::InvalidArgument("morphology radius must be at least 1".into()));
    }
    let (scar_v, myo_v) = (Class::Scar.as_u8(), Class::Myocardium.as_u8());
    let scar = slice.map(|v| v == scar_v);
    let wall = slice.map(|v| v == scar_v || v == myo_v);
    let se = disk(radius);
    let new_scar = match op {
        MorphOp::Dilate => dilate(&scar, &se).and(&wall),
        MorphOp::Open => open(&scar, &se),
        MorphOp::None => unreachable!(),
    };
    let mut out = slice.clone();
    for (i, v) in out.as_mut_slice().iter_mut().enumerate() {
        if wall.as_slice()[i] {
            *v = if new_scar.as_slice()[i] { scar_v } else { myo_v };
        }
    }
    Ok(out)
}

/// One label augmentation: rotation, then elastic deformation, then scar morphology.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelAugSpec {
    pub rotation_deg: i32,
    pub elastic: Option<ElasticSpec>,
    pub morph: MorphOp,
    pub morph_radius: usize,
}

impl Default for LabelAugSpec {
    fn default() -> Self {
        Self { rotation_deg: 0, elastic: None, morph: MorphOp::None, morph_radius: DEFAULT_MORPH_RADIUS }
    }
}

impl LabelAugSpec {
    /// Random rotation from {0, 60, ..., 300}, elastic deformation and a
    /// random morphological op.
    pub fn sample(seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let rotation_deg = rng.random_range(0..6) * ROTATION_STEP_DEG;
        let elastic = Some(ElasticSpec::with_seed(rng.random()));
        let morph = [MorphOp::None, MorphOp::Dilate, MorphOp::Open][rng.random_range(0..3)];
        Self { rotation_deg, elastic, morph, morph_radius: DEFAULT_MORPH_RADIUS }
    }

    /// Applies the augmentation to slice `z`; the elastic seed is offset by `z`.
    pub fn apply(&self, slice: &LabelSlice, z: usize) -> Result<LabelSlice> {
        let mut out = rotate_labels(slice, self.rotation_deg)?;
        if let Some(e) = &self.elastic {
            let spec = ElasticSpec { seed: e.seed.wrapping_add(z as u64), ..*e };
            out = elastic_deform(&out, &spec)?;
        }
        morph(&out, self.morph, self.morph_radius)
    }
}
