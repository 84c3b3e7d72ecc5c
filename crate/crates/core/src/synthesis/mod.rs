//! Synthetic training data: label augmentation, label/style swapping, a
//! procedural label-conditioned synthesiser and box-regressor augmentation.

pub mod bbox_aug;
pub mod dataset;
pub mod labels;
pub mod style;

pub use bbox_aug::{apply_bbox_aug, augment_for_bbox, sample_bbox_aug, BboxAugParams, BboxAugSpec};
pub use dataset::{emit_dataset, plan_requests, read_manifest, ManifestRow, MANIFEST_FILE};
pub use labels::{elastic_deform, morph, rotate_labels, ElasticSpec, LabelAugSpec, MorphOp};
pub use style::{
    augment_request, style_statistics, swap_label_style, synthesize_image, ClassStats, SynthParams, SynthesisRequest,
    TrainingStage,
};
