//! Per-subject cascade: box, myocardium stage with closedness QC, scar stage
//! with the ratio filter, then metrics against the reference labels.

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bbox::{
    apply_transform, proposal_box, select_reference_slice, BoundingBox, BoxRegressor, BoxTransform, RegressorInput,
};
use crate::error::{Error, Result};
use crate::grid::{Grid2, LabelSlice, Mask2, Slice2D};
use crate::pipeline::config::{MyoChoice, PipelineConfig, ScarChoice, Variant};
use crate::pipeline::report::{subject_metrics, MetricRow};
use crate::preprocess::{
    center_offset, crop_at_centroid, crop_window, mask_for_scar, paste_window, percentile_normalize, resample,
    resample_nearest, Interp, NormParams,
};
use crate::qc::{ensemble_revote, interior_of, is_closed_myocardium, jitter_boxes, scar_ratio_filter};
use crate::rng::{derive_seed, derive_seed_str};
use crate::segment::{
    import_masks, MyoSegmenter, MyoStageInput, OracleMyoSegmenter, OracleScarSegmenter, RuleScarSegmenter,
    ScarSegmenter, ScarStageInput, Stage,
};
use crate::synthesis::{emit_dataset, plan_requests, ManifestRow};
use crate::volume::{slice_mask, Class, LabelMap, SubjectRecord};

/// Quality-control action taken on one slice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QcAction {
    /// Myocardium not closed and re-voting disabled.
    OpenMyocardium,
    Revote {
        k: Option<usize>,
        fell_back: bool,
        closed: bool,
    },
    RatioFilter {
        removed_components: usize,
        removed_pixels: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QcEvent {
    pub slice: usize,
    #[serde(flatten)]
    pub action: QcAction,
}

/// A stage error; `slice` is `None` for subject-level stages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub slice: Option<usize>,
    pub stage: String,
    pub message: String,
}

/// Everything produced for one subject.
#[derive(Clone, Debug, Serialize)]
pub struct QuantReport {
    pub subject_id: String,
    pub variant: Variant,
    pub config: PipelineConfig,
    /// Box in frame coordinates; `None` for variants without a box stage.
    pub bbox: Option<BoundingBox>,
    pub slice_rows: Vec<MetricRow>,
    pub subject_rows: Vec<MetricRow>,
    pub qc_events: Vec<QcEvent>,
    pub failures: Vec<StageFailure>,
    pub scar_present: bool,
    pub reference_scar_present: Option<bool>,
    /// Predicted labels in the subject's geometry.
    #[serde(skip)]
    pub prediction: LabelMap,
}

impl QuantReport {
    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }

    /// Per-slice row of `class` for slice `z`.
    pub fn slice_row(&self, z: usize, class: &str) -> Option<&MetricRow> {
        let key = z.to_string();
        self.slice_rows.iter().find(|r| r.slice == key && r.class == class)
    }

    pub fn subject_row(&self, slice: &str, class: &str) -> Option<&MetricRow> {
        self.subject_rows.iter().find(|r| r.slice == slice && r.class == class)
    }
}

enum MyoSource {
    Segmenter(Box<dyn MyoSegmenter>),
    Imported(std::path::PathBuf),
}

enum ScarSource {
    Segmenter(Box<dyn ScarSegmenter>),
    Imported(std::path::PathBuf),
}

/// Stage implementations resolved from a [`PipelineConfig`].
pub struct Components {
    regressor: Option<Box<dyn BoxRegressor>>,
    myo: MyoSource,
    scar: ScarSource,
}

impl Components {
    pub fn from_config(config: &PipelineConfig) -> Result<Self> {
        config.validate()?;
        let myo = match &config.myo {
            MyoChoice::Em => MyoSource::Segmenter(Box::new(config.em_myocardium())),
            MyoChoice::Oracle => MyoSource::Segmenter(Box::new(OracleMyoSegmenter)),
            MyoChoice::Imported(p) => MyoSource::Imported(p.clone()),
        };
        let scar = match &config.scar {
            ScarChoice::Rule(rule) => ScarSource::Segmenter(Box::new(RuleScarSegmenter { rule: *rule })),
            ScarChoice::Oracle => ScarSource::Segmenter(Box::new(OracleScarSegmenter)),
            ScarChoice::Imported(p) => ScarSource::Imported(p.clone()),
        };
        Ok(Self { regressor: config.build_regressor()?, myo, scar })
    }

    /// Components built from custom stage implementations.
    pub fn custom(
        regressor: Option<Box<dyn BoxRegressor>>,
        myo: Box<dyn MyoSegmenter>,
        scar: Box<dyn ScarSegmenter>,
    ) -> Self {
        Self { regressor, myo: MyoSource::Segmenter(myo), scar: ScarSource::Segmenter(scar) }
    }
}

/// Centred crop/pad between a subject's slice geometry and the square frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub size: usize,
    off_x: isize,
    off_y: isize,
}

impl Frame {
    pub fn new(width: usize, height: usize, size: usize) -> Self {
        Self { width, height, size, off_x: center_offset(width, size), off_y: center_offset(height, size) }
    }

    pub fn to_frame<T: Copy>(&self, g: &Grid2<T>, fill: T) -> Grid2<T> {
        crop_window(g, self.off_x, self.off_y, self.size, self.size, fill)
    }

    pub fn from_frame<T: Copy>(&self, g: &Grid2<T>, fill: T) -> Grid2<T> {
        crop_window(g, -self.off_x, -self.off_y, self.width, self.height, fill)
    }
}

fn normalize_or_zero(slice: &Slice2D) -> Result<Slice2D> {
    match percentile_normalize(slice, &NormParams::default()) {
        Ok(s) => Ok(s),
        Err(Error::Degenerate(_)) => Ok(Grid2::filled(slice.width(), slice.height(), 0.0)),
        Err(e) => Err(e),
    }
}

fn wall_of(labels: &LabelSlice) -> Mask2 {
    slice_mask(labels, &[Class::Myocardium, Class::Scar])
}

fn interior_or_empty(wall: &Mask2) -> Mask2 {
    interior_of(wall).unwrap_or_else(|_| Grid2::filled(wall.width(), wall.height(), false))
}

struct SubjectContext<'a> {
    id: &'a str,
    seed: u64,
    config: &'a PipelineConfig,
    components: &'a Components,
    images: Vec<Slice2D>,
    reference: Option<Vec<LabelSlice>>,
    imported_myo: Option<Vec<Mask2>>,
    imported_scar: Option<Vec<Mask2>>,
}

struct StageOutput {
    wall: Mask2,
    /// Scar from a combined stage.
    scar: Option<Mask2>,
}

struct SliceOutput {
    wall: Mask2,
    scar: Mask2,
    events: Vec<QcEvent>,
}

impl SubjectContext<'_> {
    fn frame_size(&self) -> usize {
        self.config.frame_size
    }

    fn empty(&self) -> Mask2 {
        Grid2::filled(self.frame_size(), self.frame_size(), false)
    }

    fn reference(&self, z: usize) -> Option<&LabelSlice> {
        self.reference.as_ref().map(|r| &r[z])
    }

    fn reference_or_err(&self, z: usize) -> Result<&LabelSlice> {
        self.reference(z).ok_or_else(|| Error::Missing(format!("reference labels for subject '{}'", self.id)))
    }

    /// Runs the myocardium stage (and the scar rule for combined variants)
    /// inside `bbox` and maps the result back to the frame.
    fn segment_in_box(&self, z: usize, bbox: &BoundingBox) -> Result<StageOutput> {
        let f = self.frame_size();
        let n = self.config.myo_input_size;
        let (x0, y0, w, h) = bbox.pixel_window();
        let crop = crop_window(&self.images[z], x0, y0, w, h, 0.0);
        let input = normalize_or_zero(&resample(&crop, n, n, Interp::Bilinear)?)?;
        let reference = match self.reference(z) {
            Some(l) => Some(resample_nearest(&crop_window(l, x0, y0, w, h, 0u8), n, n)?),
            None => None,
        };
        let stage_input =
            MyoStageInput { subject_id: self.id, slice_index: z, image: &input, reference: reference.as_ref() };
        let wall_n = match (&self.components.myo, self.config.gt_myocardium) {
            (_, true) => OracleMyoSegmenter.segment(&stage_input)?,
            (MyoSource::Segmenter(s), false) => s.segment(&stage_input)?,
            (MyoSource::Imported(_), false) => {
                let imported = &self.imported_myo.as_ref().expect("imported masks loaded")[z];
                return Ok(StageOutput { wall: imported.clone(), scar: None });
            }
        };
        input.ensure_same_shape(&wall_n, "myocardium stage output")?;
        let back = |m: &Mask2| -> Result<Mask2> { Ok(paste_window(&resample_nearest(m, w, h)?, x0, y0, f, f, false)) };
        let wall = back(&wall_n)?;
        let scar = if self.config.variant.combined() {
            let scar_n = match &self.components.scar {
                ScarSource::Segmenter(s) => {
                    let cavity = interior_or_empty(&wall_n);
                    s.segment(&ScarStageInput {
                        subject_id: self.id,
                        slice_index: z,
                        image: &input,
                        myocardium: &wall_n,
                        cavity: &cavity,
                        reference: reference.as_ref(),
                    })?
                }
                ScarSource::Imported(_) => unreachable!("rejected by config validation"),
            };
            input.ensure_same_shape(&scar_n, "scar stage output")?;
            Some(back(&scar_n.and(&wall_n))?)
        } else {
            None
        };
        Ok(StageOutput { wall, scar })
    }

    fn myocardium(&self, z: usize, bbox: &BoundingBox, events: &mut Vec<QcEvent>) -> Result<StageOutput> {
        if self.config.gt_myocardium && !self.config.variant.combined() {
            return Ok(StageOutput { wall: wall_of(self.reference_or_err(z)?), scar: None });
        }
        let mut out = self.segment_in_box(z, bbox)?;
        if is_closed_myocardium(&out.wall) || self.config.gt_myocardium {
            return Ok(out);
        }
        let imported = matches!(self.components.myo, MyoSource::Imported(_));
        if !self.config.qc.revote || imported {
            events.push(QcEvent { slice: z, action: QcAction::OpenMyocardium });
            return Ok(out);
        }
        let boxes = jitter_boxes(bbox, self.config.qc.jitter_count, derive_seed(self.seed, z as u64))?;
        let predictions: Vec<Mask2> = boxes
            .iter()
            .map(|b| match self.segment_in_box(z, b) {
                Ok(o) => o.wall,
                Err(e) => {
                    debug!("{} slice {z}: jittered segmentation failed: {e}", self.id);
                    self.empty()
                }
            })
            .collect();
        let vote = ensemble_revote(&predictions, &out.wall, self.config.qc.vote)?;
        events.push(QcEvent {
            slice: z,
            action: QcAction::Revote { k: vote.k, fell_back: vote.fell_back, closed: vote.closed },
        });
        out.wall = vote.mask;
        out.scar = out.scar.map(|s| s.and(&out.wall));
        Ok(out)
    }

    fn scar(&self, z: usize, wall: &Mask2) -> Result<Mask2> {
        if !wall.any() {
            return Ok(self.empty());
        }
        let segmenter = match &self.components.scar {
            ScarSource::Imported(_) => {
                return Ok(self.imported_scar.as_ref().expect("imported masks loaded")[z].and(wall));
            }
            ScarSource::Segmenter(s) => s,
        };
        let f = self.frame_size();
        let size = self.config.scar_crop_size;
        let cavity = interior_or_empty(wall);
        let crop = crop_at_centroid(&self.images[z], wall, size)?;
        let (ox, oy) = crop.origin;
        let myo_c = crop_window(wall, ox, oy, size, size, false);
        let cav_c = crop_window(&cavity, ox, oy, size, size, false);
        let ref_c = self.reference(z).map(|l| crop_window(l, ox, oy, size, size, 0u8));
        let input = mask_for_scar(&crop.crop, &myo_c, &cav_c)?;
        let scar_c = segmenter.segment(&ScarStageInput {
            subject_id: self.id,
            slice_index: z,
            image: &input,
            myocardium: &myo_c,
            cavity: &cav_c,
            reference: ref_c.as_ref(),
        })?;
        input.ensure_same_shape(&scar_c, "scar stage output")?;
        Ok(paste_window(&scar_c.and(&myo_c), ox, oy, f, f, false))
    }

    fn process_slice(&self, z: usize, bbox: &BoundingBox) -> Result<SliceOutput> {
        let mut events = Vec::new();
        let stage = self.myocardium(z, bbox, &mut events)?;
        let wall = stage.wall;
        let mut scar = match stage.scar {
            Some(s) => s,
            None => self.scar(z, &wall)?,
        };
        if self.config.qc.ratio_filter && scar.any() {
            let filtered = scar_ratio_filter(&scar, &wall, self.config.qc.min_scar_ratio)?;
            let removed_pixels = scar.count() - filtered.count();
            if removed_pixels > 0 {
                let before = crate::qc::connected_components(&scar, crate::qc::Connectivity::Eight).count();
                let after = crate::qc::connected_components(&filtered, crate::qc::Connectivity::Eight).count();
                events.push(QcEvent {
                    slice: z,
                    action: QcAction::RatioFilter { removed_components: before - after, removed_pixels },
                });
            }
            scar = filtered;
        }
        Ok(SliceOutput { wall, scar, events })
    }
}

fn predict_box(ctx: &SubjectContext<'_>, failures: &mut Vec<StageFailure>) -> Option<BoundingBox> {
    let f = ctx.frame_size();
    let regressor = ctx.components.regressor.as_ref()?;
    let proposal = proposal_box(f, f);
    let transform = select_reference_slice(ctx.images.len()).and_then(|r| {
        let reference = normalize_or_zero(&ctx.images[r])?;
        regressor.predict(&RegressorInput {
            subject_id: ctx.id,
            reference: &reference,
            labels: ctx.reference.as_deref(),
        })
    });
    let transform = match transform.and_then(|t| t.validate().map(|_| t)) {
        Ok(t) => t,
        Err(e) => {
            warn!("{}: box regressor failed ({e}); using the proposal box", ctx.id);
            failures.push(StageFailure { slice: None, stage: "bbox".into(), message: e.to_string() });
            BoxTransform::IDENTITY
        }
    };
    Some(apply_transform(&proposal, &transform))
}

fn load_imported(
    dir: &std::path::Path,
    subject: &SubjectRecord,
    stage: Stage,
    frame: &Frame,
    config: &PipelineConfig,
) -> Result<Vec<Mask2>> {
    let dims = subject.image.dims();
    let m = import_masks(dir, &subject.id, stage, dims, config.slice_order)?;
    Ok((0..dims.nz).map(|z| frame.to_frame(&m.slice(z), false)).collect())
}

/// Runs the cascade on one subject with components built from `config`.
pub fn run_subject(subject: &SubjectRecord, config: &PipelineConfig) -> Result<QuantReport> {
    let components = Components::from_config(config)?;
    run_subject_with(subject, config, &components)
}

/// Runs the cascade with the myocardium stage replaced by the reference wall.
pub fn replace_with_gt_myocardium(subject: &SubjectRecord, config: &PipelineConfig) -> Result<QuantReport> {
    if subject.labels.is_none() {
        return Err(Error::Missing(format!("reference labels for subject '{}'", subject.id)));
    }
    let config = PipelineConfig { gt_myocardium: true, ..config.clone() };
    run_subject(subject, &config)
}

pub fn run_subject_with(
    subject: &SubjectRecord,
    config: &PipelineConfig,
    components: &Components,
) -> Result<QuantReport> {
    config.validate()?;
    let dims = subject.image.dims();
    if dims.nz == 0 {
        return Err(Error::InvalidArgument(format!("subject '{}' has no slices", subject.id)));
    }
    if config.gt_myocardium && subject.labels.is_none() {
        return Err(Error::Missing(format!("reference labels for subject '{}'", subject.id)));
    }
    let frame = Frame::new(dims.nx, dims.ny, config.frame_size);
    let images: Vec<Slice2D> = subject.image.slices().iter().map(|s| frame.to_frame(s, 0.0)).collect();
    let reference: Option<Vec<LabelSlice>> =
        subject.labels.as_ref().map(|l| l.slices().iter().map(|s| frame.to_frame(s, 0u8)).collect());
    let imported_myo = match &components.myo {
        MyoSource::Imported(dir) => Some(load_imported(dir, subject, Stage::Myocardium, &frame, config)?),
        MyoSource::Segmenter(_) => None,
    };
    let imported_scar = match &components.scar {
        ScarSource::Imported(dir) => Some(load_imported(dir, subject, Stage::Scar, &frame, config)?),
        ScarSource::Segmenter(_) => None,
    };
    let ctx = SubjectContext {
        id: &subject.id,
        seed: derive_seed_str(config.seed, &subject.id),
        config,
        components,
        images,
        reference,
        imported_myo,
        imported_scar,
    };

    let mut failures = Vec::new();
    let bbox = predict_box(&ctx, &mut failures);
    let f = config.frame_size as f64;
    let window = bbox.unwrap_or(BoundingBox { cx: f / 2.0, cy: f / 2.0, w: f, h: f });

    let mut qc_events = Vec::new();
    let mut label_slices = Vec::with_capacity(dims.nz);
    for z in 0..dims.nz {
        let (wall, scar) = match ctx.process_slice(z, &window) {
            Ok(out) => {
                qc_events.extend(out.events);
                (out.wall, out.scar)
            }
            Err(e) => {
                warn!("{} slice {z}: {e}", subject.id);
                failures.push(StageFailure { slice: Some(z), stage: "slice".into(), message: e.to_string() });
                (ctx.empty(), ctx.empty())
            }
        };
        let wall = frame.from_frame(&wall, false);
        let scar = frame.from_frame(&scar, false).and(&wall);
        let cavity = interior_or_empty(&wall);
        label_slices.push(Grid2::from_fn(dims.nx, dims.ny, |x, y| {
            if scar.get(x, y) {
                Class::Scar.as_u8()
            } else if wall.get(x, y) {
                Class::Myocardium.as_u8()
            } else if cavity.get(x, y) {
                Class::Cavity.as_u8()
            } else {
                Class::Background.as_u8()
            }
        }));
    }
    let prediction = LabelMap::from_slices(&label_slices, subject.image.spacing())?;
    let (slice_rows, subject_rows) = subject_metrics(&subject.id, &prediction, subject.labels.as_ref())?;
    Ok(QuantReport {
        subject_id: subject.id.clone(),
        variant: config.variant,
        config: config.clone(),
        bbox,
        slice_rows,
        subject_rows,
        qc_events,
        failures,
        scar_present: prediction.contains_class(Class::Scar),
        reference_scar_present: subject.labels.as_ref().map(|l| l.contains_class(Class::Scar)),
        prediction,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectFailure {
    pub subject_id: String,
    pub message: String,
}

/// Reports for a whole dataset plus, for variant E, the synthetic manifest.
#[derive(Clone, Debug, Serialize)]
pub struct DatasetRun {
    pub reports: Vec<QuantReport>,
    pub subject_failures: Vec<SubjectFailure>,
    pub manifest: Option<Vec<ManifestRow>>,
}

impl DatasetRun {
    pub fn is_partial(&self) -> bool {
        !self.subject_failures.is_empty() || self.reports.iter().any(QuantReport::is_partial)
    }
}

/// Runs every subject in parallel; reports come back in input order.
pub fn run_dataset(subjects: &[SubjectRecord], config: &PipelineConfig) -> Result<DatasetRun> {
    let components = Components::from_config(config)?;
    let results: Vec<Result<QuantReport>> =
        subjects.par_iter().map(|s| run_subject_with(s, config, &components)).collect();
    let mut reports = Vec::new();
    let mut subject_failures = Vec::new();
    for (s, r) in subjects.iter().zip(results) {
        match r {
            Ok(r) => reports.push(r),
            Err(e) => {
                warn!("subject {}: {e}", s.id);
                subject_failures.push(SubjectFailure { subject_id: s.id.clone(), message: e.to_string() });
            }
        }
    }
    let manifest = if config.variant == Variant::E {
        match &config.synth.out_dir {
            Some(dir) => {
                let requests =
                    plan_requests(subjects, config.synth.augmentations_per_subject, config.synth.swaps, config.seed)?;
                Some(emit_dataset(&requests, subjects, &config.synth.params, derive_seed(config.seed, 0x5e), dir)?)
            }
            None => {
                warn!("variant e without a synthetic output directory; no dataset emitted");
                None
            }
        }
    } else {
        None
    };
    Ok(DatasetRun { reports, subject_failures, manifest })
}
