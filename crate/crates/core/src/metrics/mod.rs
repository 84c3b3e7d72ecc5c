//! Segmentation and agreement metrics.

pub mod hausdorff;
pub mod overlap;
pub mod stats;

pub use hausdorff::{
    boundary, hausdorff95_mm, hausdorff_mm, squared_distance_transform, surface_distances, SurfaceDistances,
};
pub use overlap::{dice, mask_volume, scar_burden, volume_difference};
pub use stats::{
    bland_altman, classification_accuracy, pearson_r, wilcoxon_signed_rank, AgreementResult, Alternative, PairedSeries,
    WilcoxonMethod, WilcoxonResult, WILCOXON_EXACT_MAX_N, WILCOXON_MIN_N_NONZERO,
};
