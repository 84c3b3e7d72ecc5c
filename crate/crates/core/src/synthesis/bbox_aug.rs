//! Image and box augmentation for training a box regressor.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bbox::BoundingBox;
use crate::error::{Error, Result};
use crate::filters::gaussian_blur;
use crate::grid::{Grid2, Slice2D};
use crate::rng::{derive_seed, rng_from_seed};

/// Sampling supports; `None` disables a transform.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BboxAugSpec {
    /// Additive Gaussian noise (mean, sd).
    pub noise: Option<(f64, f64)>,
    pub blur_sigma: Option<f64>,
    pub shear_deg: Option<(f64, f64)>,
    pub rotation_deg: Option<(f64, f64)>,
    /// Per-axis translation magnitude as a fraction of the image side; the
    /// sign is drawn separately.
    pub translation_frac: Option<(f64, f64)>,
    pub scale: Option<(f64, f64)>,
    /// Probability that each enabled transform is applied.
    pub apply_prob: f64,
}

impl Default for BboxAugSpec {
    fn default() -> Self {
        Self {
            noise: Some((0.1, 0.1)),
            blur_sigma: Some(1.5),
            shear_deg: Some((-20.0, 20.0)),
            rotation_deg: Some((-90.0, 90.0)),
            translation_frac: Some((0.14, 0.21)),
            scale: Some((0.5, 1.5)),
            apply_prob: 0.5,
        }
    }
}

impl BboxAugSpec {
    pub fn identity() -> Self {
        Self {
            noise: None,
            blur_sigma: None,
            shear_deg: None,
            rotation_deg: None,
            translation_frac: None,
            scale: None,
            apply_prob: 0.5,
        }
    }
}

/// Concrete transform drawn from a [`BboxAugSpec`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BboxAugParams {
    pub shear_deg: f64,
    pub rotation_deg: f64,
    /// Signed translation as a fraction of width and height.
    pub tx_frac: f64,
    pub ty_frac: f64,
    pub scale: f64,
    /// 0 means no blur.
    pub blur_sigma: f64,
    pub noise: Option<(f64, f64)>,
    pub noise_seed: u64,
}

impl BboxAugParams {
    pub const IDENTITY: BboxAugParams = BboxAugParams {
        shear_deg: 0.0,
        rotation_deg: 0.0,
        tx_frac: 0.0,
        ty_frac: 0.0,
        scale: 1.0,
        blur_sigma: 0.0,
        noise: None,
        noise_seed: 0,
    };

    /// Whether every applied parameter lies inside the support of `spec`.
    pub fn within(&self, spec: &BboxAugSpec) -> bool {
        let inside = |v: f64, neutral: f64, range: Option<(f64, f64)>| {
            v == neutral || range.is_some_and(|(lo, hi)| (lo..=hi).contains(&v))
        };
        let trans = |v: f64| v == 0.0 || spec.translation_frac.is_some_and(|(lo, hi)| (lo..=hi).contains(&v.abs()));
        inside(self.shear_deg, 0.0, spec.shear_deg)
            && inside(self.rotation_deg, 0.0, spec.rotation_deg)
            && inside(self.scale, 1.0, spec.scale)
            && trans(self.tx_frac)
            && trans(self.ty_frac)
            && (self.blur_sigma == 0.0 || Some(self.blur_sigma) == spec.blur_sigma)
            && (self.noise.is_none() || self.noise == spec.noise)
    }

    /// Forward map of a point in pixel-edge coordinates.
    pub fn map_point(&self, (x, y): (f64, f64), width: usize, height: usize) -> (f64, f64) {
        let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
        let m = self.matrix();
        let (px, py) = (x - cx, y - cy);
        (
            cx + self.tx_frac * width as f64 + m[0] * px + m[1] * py,
            cy + self.ty_frac * height as f64 + m[2] * px + m[3] * py,
        )
    }

    /// `scale * rotation * shear`, row-major 2x2.
    fn matrix(&self) -> [f64; 4] {
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        let k = self.shear_deg.to_radians().tan();
        let a = self.scale;
        [a * c, a * (c * k - s), a * s, a * (s * k + c)]
    }
}

fn draw(rng: &mut impl rand::Rng, p: f64, range: Option<(f64, f64)>, neutral: f64) -> f64 {
    match range {
        Some((lo, hi)) if rng.random_bool(p) => {
            if hi > lo {
                rng.random_range(lo..=hi)
            } else {
                lo
            }
        }
        _ => neutral,
    }
}

pub fn sample_bbox_aug(spec: &BboxAugSpec, seed: u64) -> Result<BboxAugParams> {
    if !(0.0..=1.0).contains(&spec.apply_prob) {
        return Err(Error::InvalidArgument(format!("apply probability {} outside [0, 1]", spec.apply_prob)));
    }
    let p = spec.apply_prob;
    let mut rng = rng_from_seed(seed);
    let shear_deg = draw(&mut rng, p, spec.shear_deg, 0.0);
    let rotation_deg = draw(&mut rng, p, spec.rotation_deg, 0.0);
    let translate = |rng: &mut crate::rng::Rng| {
        let m = draw(rng, p, spec.translation_frac, 0.0);
        if rng.random::<bool>() {
            m
        } else {
            -m
        }
    };
    let tx_frac = translate(&mut rng);
    let ty_frac = translate(&mut rng);
    let scale = draw(&mut rng, p, spec.scale, 1.0);
    let blur_sigma = match spec.blur_sigma {
        Some(s) if rng.random_bool(p) => s,
        _ => 0.0,
    };
    let noise = match spec.noise {
        Some(n) if rng.random_bool(p) => Some(n),
        _ => None,
    };
    Ok(BboxAugParams {
        shear_deg,
        rotation_deg,
        tx_frac,
        ty_frac,
        scale,
        blur_sigma,
        noise,
        noise_seed: derive_seed(seed, 1),
    })
}

fn bilinear_zero(img: &Slice2D, x: f64, y: f64) -> f64 {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let at = |ix: f64, iy: f64| img.get_signed(ix as isize, iy as isize).unwrap_or(0.0);
    let top = at(x0, y0) * (1.0 - fx) + at(x0 + 1.0, y0) * fx;
    let bottom = at(x0, y0 + 1.0) * (1.0 - fx) + at(x0 + 1.0, y0 + 1.0) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Applies `params` to an image and its box. The box becomes the tight
/// axis-aligned hull of its transformed corners.
pub fn apply_bbox_aug(image: &Slice2D, gt_box: &BoundingBox, params: &BboxAugParams) -> Result<(Slice2D, BoundingBox)> {
    gt_box.validate()?;
    let (w, h) = (image.width(), image.height());
    let geometric = params.shear_deg != 0.0
        || params.rotation_deg != 0.0
        || params.tx_frac != 0.0
        || params.ty_frac != 0.0
        || params.scale != 1.0;
    let (mut out, bbox) = if geometric {
        let m = params.matrix();
        let det = m[0] * m[3] - m[1] * m[2];
        if det.abs() < 1e-12 {
            return Err(Error::Degenerate("singular augmentation transform".into()));
        }
        let inv = [m[3] / det, -m[1] / det, -m[2] / det, m[0] / det];
        let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
        let (tx, ty) = (params.tx_frac * w as f64, params.ty_frac * h as f64);
        let warped = Grid2::from_fn(w, h, |x, y| {
            let (qx, qy) = (x as f64 + 0.5 - cx - tx, y as f64 + 0.5 - cy - ty);
            let sx = cx + inv[0] * qx + inv[1] * qy;
            let sy = cy + inv[2] * qx + inv[3] * qy;
            bilinear_zero(image, sx - 0.5, sy - 0.5)
        });
        let corners = [
            (gt_box.x0(), gt_box.y0()),
            (gt_box.x1(), gt_box.y0()),
            (gt_box.x0(), gt_box.y1()),
            (gt_box.x1(), gt_box.y1()),
        ]
        .map(|p| params.map_point(p, w, h));
        let fold =
            |f: fn(f64, f64) -> f64, init: f64, sel: fn(&(f64, f64)) -> f64| corners.iter().map(sel).fold(init, f);
        let bbox = BoundingBox::from_edges(
            fold(f64::min, f64::INFINITY, |p| p.0),
            fold(f64::min, f64::INFINITY, |p| p.1),
            fold(f64::max, f64::NEG_INFINITY, |p| p.0),
            fold(f64::max, f64::NEG_INFINITY, |p| p.1),
        )?;
        (warped, bbox)
    } else {
        (image.clone(), *gt_box)
    };
    if params.blur_sigma > 0.0 {
        out = gaussian_blur(&out, params.blur_sigma)?;
    }
    if let Some((mu, sd)) = params.noise {
        let dist = Normal::new(mu, sd).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut rng = rng_from_seed(params.noise_seed);
        out.as_mut_slice().iter_mut().for_each(|v| *v += dist.sample(&mut rng));
    }
    Ok((out, bbox))
}

/// Samples a transform from `spec` and applies it.
pub fn augment_for_bbox(
    image: &Slice2D,
    gt_box: &BoundingBox,
    spec: &BboxAugSpec,
    seed: u64,
) -> Result<(Slice2D, BoundingBox, BboxAugParams)> {
    let params = sample_bbox_aug(spec, seed)?;
    let (img, bbox) = apply_bbox_aug(image, gt_box, &params)?;
    Ok((img, bbox, params))
}
