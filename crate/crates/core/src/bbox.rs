//! LV bounding-box geometry: the fixed proposal, the 4-value transform that
//! moves it onto the LV, reference boxes from labels, and box regressors.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::gaussian_blur;
use crate::grid::{LabelSlice, Slice2D};
use crate::qc::{connected_components, Connectivity};
use crate::segment::otsu_threshold;
use crate::volume::Class;

/// Side length of the proposal box, in pixels of the 256×256 frame.
pub const PROPOSAL_SIZE: f64 = 134.0;
/// Default growth of reference boxes, as a fraction of the extent per side.
pub const DEFAULT_BOX_MARGIN: f64 = 0.10;

/// Axis-aligned box in continuous pixel coordinates; pixel `i` covers `[i, i+1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn from_edges(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        let b = Self { cx: (x0 + x1) / 2.0, cy: (y0 + y1) / 2.0, w: x1 - x0, h: y1 - y0 };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.cx, self.cy, self.w, self.h].iter().all(|v| v.is_finite());
        if !finite || self.w <= 0.0 || self.h <= 0.0 {
            return Err(Error::InvalidArgument(format!("invalid box {self:?}")));
        }
        Ok(())
    }

    pub fn x0(&self) -> f64 {
        self.cx - self.w / 2.0
    }

    pub fn x1(&self) -> f64 {
        self.cx + self.w / 2.0
    }

    pub fn y0(&self) -> f64 {
        self.cy - self.h / 2.0
    }

    pub fn y1(&self) -> f64 {
        self.cy + self.h / 2.0
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Grows each side by `margin` times the extent on that axis.
    pub fn grown(&self, margin: f64) -> Self {
        Self { cx: self.cx, cy: self.cy, w: self.w * (1.0 + 2.0 * margin), h: self.h * (1.0 + 2.0 * margin) }
    }

    /// Smallest pixel window `(x0, y0, width, height)` covering the box.
    pub fn pixel_window(&self) -> (isize, isize, usize, usize) {
        let x0 = self.x0().floor();
        let y0 = self.y0().floor();
        let x1 = self.x1().ceil();
        let y1 = self.y1().ceil();
        (x0 as isize, y0 as isize, ((x1 - x0) as usize).max(1), ((y1 - y0) as usize).max(1))
    }

    /// Whether pixel `(x, y)` lies fully inside the box.
    pub fn contains_pixel(&self, x: usize, y: usize) -> bool {
        let (x, y) = (x as f64, y as f64);
        x >= self.x0() && x + 1.0 <= self.x1() && y >= self.y0() && y + 1.0 <= self.y1()
    }
}

/// Translation of the centre plus multiplicative side scalings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxTransform {
    pub dx: f64,
    pub dy: f64,
    pub sx: f64,
    pub sy: f64,
}

impl BoxTransform {
    pub const IDENTITY: BoxTransform = BoxTransform { dx: 0.0, dy: 0.0, sx: 1.0, sy: 1.0 };

    pub fn validate(&self) -> Result<()> {
        if !(self.sx > 0.0
            && self.sy > 0.0
            && self.dx.is_finite()
            && self.dy.is_finite()
            && self.sx.is_finite()
            && self.sy.is_finite())
        {
            return Err(Error::InvalidArgument(format!("invalid transform {self:?}")));
        }
        Ok(())
    }
}

/// Fixed 134×134 proposal centred in the frame.
pub fn proposal_box(image_w: usize, image_h: usize) -> BoundingBox {
    BoundingBox { cx: image_w as f64 / 2.0, cy: image_h as f64 / 2.0, w: PROPOSAL_SIZE, h: PROPOSAL_SIZE }
}

/// Regression target that moves `proposal` onto `target`.
pub fn encode_transform(proposal: &BoundingBox, target: &BoundingBox) -> BoxTransform {
    BoxTransform {
        dx: target.cx - proposal.cx,
        dy: target.cy - proposal.cy,
        sx: target.w / proposal.w,
        sy: target.h / proposal.h,
    }
}

/// Inverse of [`encode_transform`].
pub fn apply_transform(proposal: &BoundingBox, t: &BoxTransform) -> BoundingBox {
    BoundingBox { cx: proposal.cx + t.dx, cy: proposal.cy + t.dy, w: proposal.w * t.sx, h: proposal.h * t.sy }
}

/// Intersection over union of two boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let ix = (a.x1().min(b.x1()) - a.x0().max(b.x0())).max(0.0);
    let iy = (a.y1().min(b.y1()) - a.y0().max(b.y0())).max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

fn tight_box<'a>(points: impl Iterator<Item = (usize, usize)> + 'a) -> Option<BoundingBox> {
    let mut ext: Option<(usize, usize, usize, usize)> = None;
    for (x, y) in points {
        ext = Some(match ext {
            None => (x, y, x, y),
            Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
        });
    }
    ext.map(|(x0, y0, x1, y1)| BoundingBox {
        cx: (x0 + x1 + 1) as f64 / 2.0,
        cy: (y0 + y1 + 1) as f64 / 2.0,
        w: (x1 + 1 - x0) as f64,
        h: (y1 + 1 - y0) as f64,
    })
}

/// Tight box around cavity and myocardium (scar included) projected over all slices,
/// grown by `margin` per side.
pub fn gt_box_from_slices(slices: &[LabelSlice], margin: f64) -> Result<BoundingBox> {
    if margin < 0.0 {
        return Err(Error::InvalidArgument(format!("negative margin {margin}")));
    }
    let lv = |v: u8| matches!(Class::from_u8(v), Some(Class::Cavity | Class::Myocardium | Class::Scar));
    let points = slices.iter().flat_map(|s| {
        let w = s.width();
        s.as_slice().iter().enumerate().filter(move |(_, &v)| lv(v)).map(move |(i, _)| (i % w, i / w))
    });
    tight_box(points).map(|b| b.grown(margin)).ok_or_else(|| Error::Degenerate("no cavity or myocardium voxels".into()))
}

/// Index of the reference slice for box detection: the second slice from
/// the base, or 0 for single-slice stacks.
pub fn select_reference_slice(n_slices: usize) -> Result<usize> {
    match n_slices {
        0 => Err(Error::InvalidArgument("empty stack".into())),
        1 => {
            log::warn!("single-slice stack: using slice 0 as bounding-box reference");
            Ok(0)
        }
        _ => Ok(1),
    }
}

/// What a regressor gets to look at.
pub struct RegressorInput<'a> {
    pub subject_id: &'a str,
    /// Normalised reference slice in the 256×256 frame.
    pub reference: &'a Slice2D,
    /// Reference labels in the same frame (all slices), when available.
    pub labels: Option<&'a [LabelSlice]>,
}

/// Predicts the transform of the proposal box for one subject.
pub trait BoxRegressor: Send + Sync {
    fn name(&self) -> &str;
    fn predict(&self, input: &RegressorInput<'_>) -> Result<BoxTransform>;
}

/// Gaussian pre-smoothing applied by [`HeuristicRegressor::default`], in pixels.
pub const DEFAULT_HEURISTIC_SIGMA: f64 = 1.5;

/// Classical stand-in: Otsu foreground of the smoothed slice, largest
/// component, grown tight box.
#[derive(Clone, Debug)]
pub struct HeuristicRegressor {
    pub margin: f64,
    pub sigma: f64,
}

impl Default for HeuristicRegressor {
    fn default() -> Self {
        Self { margin: DEFAULT_BOX_MARGIN, sigma: DEFAULT_HEURISTIC_SIGMA }
    }
}

impl HeuristicRegressor {
    /// Predicted box for a normalised slice.
    pub fn predict_slice(&self, slice: &Slice2D) -> BoxTransform {
        let proposal = proposal_box(slice.width(), slice.height());
        let smoothed = match gaussian_blur(slice, self.sigma) {
            Ok(s) => s,
            Err(e) => {
                log::warn!("heuristic regressor: {e}, returning identity transform");
                return BoxTransform::IDENTITY;
            }
        };
        let slice = &smoothed;
        let threshold = match otsu_threshold(slice.as_slice()) {
            Ok(t) => t,
            Err(_) => {
                log::warn!("heuristic regressor: flat slice, returning identity transform");
                return BoxTransform::IDENTITY;
            }
        };
        let fg = slice.map(|v| threshold.is_foreground(v));
        let cc = connected_components(&fg, Connectivity::Eight);
        let Some(id) = cc.largest() else {
            log::warn!("heuristic regressor: empty foreground, returning identity transform");
            return BoxTransform::IDENTITY;
        };
        let w = cc.labels.width();
        let points = cc.labels.as_slice().iter().enumerate().filter(|(_, &l)| l == id).map(|(i, _)| (i % w, i / w));
        let target = tight_box(points).expect("largest component is non-empty").grown(self.margin);
        encode_transform(&proposal, &target)
    }
}

impl BoxRegressor for HeuristicRegressor {
    fn name(&self) -> &str {
        "heuristic"
    }

    fn predict(&self, input: &RegressorInput<'_>) -> Result<BoxTransform> {
        Ok(self.predict_slice(input.reference))
    }
}

/// Uses the reference labels: returns the transform onto the label box.
#[derive(Clone, Debug)]
pub struct LabelOracleRegressor {
    pub margin: f64,
}

impl Default for LabelOracleRegressor {
    fn default() -> Self {
        Self { margin: DEFAULT_BOX_MARGIN }
    }
}

impl BoxRegressor for LabelOracleRegressor {
    fn name(&self) -> &str {
        "oracle"
    }

    fn predict(&self, input: &RegressorInput<'_>) -> Result<BoxTransform> {
        let labels =
            input.labels.ok_or_else(|| Error::Missing(format!("reference labels for subject {}", input.subject_id)))?;
        let target = gt_box_from_slices(labels, self.margin)?;
        let proposal = proposal_box(input.reference.width(), input.reference.height());
        Ok(encode_transform(&proposal, &target))
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct BoxRow {
    subject_id: String,
    dx: f64,
    dy: f64,
    sx: f64,
    sy: f64,
}

/// Transforms predicted elsewhere, loaded from a CSV with header
/// `subject_id,dx,dy,sx,sy`.
#[derive(Clone, Debug, Default)]
pub struct ExternalBoxPredictions {
    transforms: HashMap<String, BoxTransform>,
}

impl ExternalBoxPredictions {
    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut transforms = HashMap::new();
        for row in rdr.deserialize::<BoxRow>() {
            let row = row?;
            let t = BoxTransform { dx: row.dx, dy: row.dy, sx: row.sx, sy: row.sy };
            t.validate()?;
            transforms.insert(row.subject_id, t);
        }
        Ok(Self { transforms })
    }

    pub fn from_csv(path: &Path) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn get(&self, subject_id: &str) -> Option<BoxTransform> {
        self.transforms.get(subject_id).copied()
    }

    pub fn len(&self) -> usize {
        self.transforms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transforms.is_empty()
    }
}

impl BoxRegressor for ExternalBoxPredictions {
    fn name(&self) -> &str {
        "external"
    }

    fn predict(&self, input: &RegressorInput<'_>) -> Result<BoxTransform> {
        self.get(input.subject_id)
            .ok_or_else(|| Error::Missing(format!("box prediction for subject {}", input.subject_id)))
    }
}
