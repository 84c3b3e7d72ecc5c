//! Volumetric image and label types.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Dims, Grid2, LabelSlice, Mask2, Mask3, Slice2D};

/// Physical voxel size in millimetres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spacing {
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
}

impl Spacing {
    pub fn new(dx: f64, dy: f64, dz: f64) -> Result<Self> {
        for (name, v) in [("dx", dx), ("dy", dy), ("dz", dz)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("spacing {name} must be positive and finite, got {v}")));
            }
        }
        Ok(Self { dx, dy, dz })
    }

    pub fn isotropic(d: f64) -> Result<Self> {
        Self::new(d, d, d)
    }
}

/// Volume of one voxel in cm³.
pub fn voxel_volume_cm3(spacing: Spacing) -> f64 {
    spacing.dx * spacing.dy * spacing.dz / 1000.0
}

/// Tissue classes. MVO is merged into [`Class::Scar`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Class {
    Background = 0,
    Cavity = 1,
    Myocardium = 2,
    Scar = 3,
}

impl Class {
    pub const ALL: [Class; 4] = [Class::Background, Class::Cavity, Class::Myocardium, Class::Scar];

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Class::Background),
            1 => Some(Class::Cavity),
            2 => Some(Class::Myocardium),
            3 => Some(Class::Scar),
            _ => None,
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }
}

/// 3D scalar image. Slices are stored base to apex.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    dims: Dims,
    spacing: Spacing,
    data: Vec<f64>,
}

impl Volume {
    pub fn new(dims: Dims, spacing: Spacing, data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(Error::DimensionMismatch(format!(
                "volume {:?} needs {} values, got {}",
                dims,
                dims.len(),
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Range(format!("non-finite voxel at index {i}")));
        }
        Ok(Self { dims, spacing, data })
    }

    pub fn from_slices(slices: &[Slice2D], spacing: Spacing) -> Result<Self> {
        let first = slices.first().ok_or_else(|| Error::InvalidArgument("no slices".into()))?;
        let dims = Dims::new(first.width(), first.height(), slices.len());
        let mut data = Vec::with_capacity(dims.len());
        for s in slices {
            first.ensure_same_shape(s, "slice stack")?;
            data.extend_from_slice(s.as_slice());
        }
        Self::new(dims, spacing, data)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.dims.index(x, y, z)]
    }

    pub fn slice(&self, z: usize) -> Slice2D {
        let n = self.dims.slice_len();
        Grid2::from_vec(self.dims.nx, self.dims.ny, self.data[z * n..(z + 1) * n].to_vec())
            .expect("slice length matches dims")
    }

    pub fn slices(&self) -> Vec<Slice2D> {
        (0..self.dims.nz).map(|z| self.slice(z)).collect()
    }

    /// Same grid with the slice order flipped.
    pub fn reversed_slices(&self) -> Self {
        let n = self.dims.slice_len();
        let data = self.data.chunks(n).rev().flatten().copied().collect();
        Self { dims: self.dims, spacing: self.spacing, data }
    }
}

/// 3D label grid with values in `{0, 1, 2, 3}`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelMap {
    dims: Dims,
    spacing: Spacing,
    data: Vec<u8>,
}

impl LabelMap {
    pub fn new(dims: Dims, spacing: Spacing, data: Vec<u8>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(Error::DimensionMismatch(format!(
                "label map {:?} needs {} values, got {}",
                dims,
                dims.len(),
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|&&v| v > 3) {
            return Err(Error::Range(format!("label value {v} outside {{0,1,2,3}}")));
        }
        Ok(Self { dims, spacing, data })
    }

    pub fn empty(dims: Dims, spacing: Spacing) -> Self {
        Self { dims, spacing, data: vec![0; dims.len()] }
    }

    pub fn from_slices(slices: &[LabelSlice], spacing: Spacing) -> Result<Self> {
        let first = slices.first().ok_or_else(|| Error::InvalidArgument("no slices".into()))?;
        let dims = Dims::new(first.width(), first.height(), slices.len());
        let mut data = Vec::with_capacity(dims.len());
        for s in slices {
            first.ensure_same_shape(s, "slice stack")?;
            data.extend_from_slice(s.as_slice());
        }
        Self::new(dims, spacing, data)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> u8 {
        self.data[self.dims.index(x, y, z)]
    }

    pub fn slice(&self, z: usize) -> LabelSlice {
        let n = self.dims.slice_len();
        Grid2::from_vec(self.dims.nx, self.dims.ny, self.data[z * n..(z + 1) * n].to_vec())
            .expect("slice length matches dims")
    }

    pub fn slices(&self) -> Vec<LabelSlice> {
        (0..self.dims.nz).map(|z| self.slice(z)).collect()
    }

    pub fn reversed_slices(&self) -> Self {
        let n = self.dims.slice_len();
        let data = self.data.chunks(n).rev().flatten().copied().collect();
        Self { dims: self.dims, spacing: self.spacing, data }
    }

    /// Voxels whose class is any of `classes`.
    pub fn mask_of(&self, classes: &[Class]) -> Mask3 {
        let data = self.data.iter().map(|v| classes.iter().any(|c| c.as_u8() == *v)).collect();
        Mask3::from_vec(self.dims, data).expect("same dims")
    }

    /// Myocardial wall: healthy myocardium plus scar.
    pub fn wall_mask(&self) -> Mask3 {
        self.mask_of(&[Class::Myocardium, Class::Scar])
    }

    pub fn count(&self, class: Class) -> usize {
        self.data.iter().filter(|&&v| v == class.as_u8()).count()
    }

    pub fn contains_class(&self, class: Class) -> bool {
        self.data.iter().any(|&v| v == class.as_u8())
    }
}

/// Slice-level helpers for class masks.
pub fn slice_mask(labels: &LabelSlice, classes: &[Class]) -> Mask2 {
    labels.map(|v| classes.iter().any(|c| c.as_u8() == v))
}

/// Volume of `class` in cm³.
pub fn volume_of_class(labels: &LabelMap, class: Class) -> f64 {
    labels.count(class) as f64 * voxel_volume_cm3(labels.spacing)
}

/// Volume of a 3D mask in cm³.
pub fn mask_volume_cm3(mask: &Mask3, spacing: Spacing) -> f64 {
    mask.count() as f64 * voxel_volume_cm3(spacing)
}

/// One subject: image, optional reference labels, identifiers.
#[derive(Clone, Debug)]
pub struct SubjectRecord {
    pub id: String,
    pub image: Volume,
    pub labels: Option<LabelMap>,
    pub pathological: Option<bool>,
}

impl SubjectRecord {
    pub fn new(
        id: impl Into<String>,
        image: Volume,
        labels: Option<LabelMap>,
        pathological: Option<bool>,
    ) -> Result<Self> {
        if let Some(l) = &labels {
            if l.dims() != image.dims() {
                return Err(Error::DimensionMismatch(format!("labels {:?} vs image {:?}", l.dims(), image.dims())));
            }
        }
        Ok(Self { id: id.into(), image, labels, pathological })
    }
}
