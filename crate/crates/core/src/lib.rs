//! Cascaded scar quantification for late gadolinium enhancement cardiac MR.

pub mod bbox;
pub mod error;
pub mod filters;
pub mod grid;
pub mod metrics;
pub mod nifti;
pub mod phantom;
pub mod pipeline;
pub mod preprocess;
pub mod qc;
pub mod rng;
pub mod segment;
pub mod synthesis;
pub mod volume;

pub use error::{Error, Result};
pub use grid::{Dims, Grid2, LabelSlice, Mask2, Mask3, Slice2D};
pub use volume::{Class, LabelMap, Spacing, SubjectRecord, Volume};
