//! Dense 2D and 3D grids used for slices, label slices and binary masks.

use std::fmt;

use crate::error::{Error, Result};

/// Row-major 2D grid. Pixel `(x, y)` lives at `y * width + x`.
#[derive(Clone, PartialEq)]
pub struct Grid2<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Grid2<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = f.debug_struct("Grid2");
        s.field("width", &self.width).field("height", &self.height);
        if self.data.len() <= 64 {
            s.field("data", &self.data).finish()
        } else {
            s.finish_non_exhaustive()
        }
    }
}

/// Binary 2D mask.
pub type Mask2 = Grid2<bool>;
/// One slice of a label map.
pub type LabelSlice = Grid2<u8>;
/// One intensity slice.
pub type Slice2D = Grid2<f64>;

impl<T: Copy> Grid2<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} grid needs {} values, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[self.index(x, y)]
    }

    /// Value at signed coordinates, or `None` outside the grid.
    #[inline]
    pub fn get_signed(&self, x: isize, y: isize) -> Option<T> {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            None
        } else {
            Some(self.get(x as usize, y as usize))
        }
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        let i = self.index(x, y);
        self.data[i] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Grid2<U> {
        Grid2 { width: self.width, height: self.height, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn same_shape<U>(&self, other: &Grid2<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn ensure_same_shape<U>(&self, other: &Grid2<U>, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "{what}: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }
}

impl Mask2 {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|&b| b)
    }

    pub fn and(&self, other: &Mask2) -> Mask2 {
        debug_assert!(self.same_shape(other));
        Grid2 {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a && b).collect(),
        }
    }

    pub fn or(&self, other: &Mask2) -> Mask2 {
        debug_assert!(self.same_shape(other));
        Grid2 {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a || b).collect(),
        }
    }

    pub fn and_not(&self, other: &Mask2) -> Mask2 {
        debug_assert!(self.same_shape(other));
        Grid2 {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a && !b).collect(),
        }
    }

    pub fn is_subset_of(&self, other: &Mask2) -> bool {
        self.same_shape(other) && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    /// Coordinates of set pixels in raster order.
    pub fn points(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.data.iter().enumerate().filter(|(_, &b)| b).map(move |(i, _)| (i % w, i / w))
    }
}

/// Voxel counts along x, y and z.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Dims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Dims {
    pub const fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Self { nx, ny, nz }
    }

    pub const fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn slice_len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub const fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.ny + y) * self.nx + x
    }
}

/// Binary 3D mask, same memory order as [`crate::Volume`].
#[derive(Clone, Debug, PartialEq)]
pub struct Mask3 {
    dims: Dims,
    data: Vec<bool>,
}

impl Mask3 {
    pub fn empty(dims: Dims) -> Self {
        Self { dims, data: vec![false; dims.len()] }
    }

    pub fn from_vec(dims: Dims, data: Vec<bool>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(Error::DimensionMismatch(format!(
                "{:?} needs {} voxels, got {}",
                dims,
                dims.len(),
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn from_slices(slices: &[Mask2]) -> Result<Self> {
        let first = slices.first().ok_or_else(|| Error::InvalidArgument("no slices".into()))?;
        let dims = Dims::new(first.width(), first.height(), slices.len());
        let mut data = Vec::with_capacity(dims.len());
        for s in slices {
            first.ensure_same_shape(s, "slice stack")?;
            data.extend_from_slice(s.as_slice());
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.data[self.dims.index(x, y, z)]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn slice(&self, z: usize) -> Mask2 {
        let n = self.dims.slice_len();
        Grid2::from_vec(self.dims.nx, self.dims.ny, self.data[z * n..(z + 1) * n].to_vec())
            .expect("slice length matches dims")
    }
}

/// Shared read-only view over binary masks of any dimensionality.
pub trait BinaryMask {
    /// `(nx, ny, nz)`; 2D masks report `nz = 1`.
    fn shape(&self) -> (usize, usize, usize);
    fn bits(&self) -> &[bool];
}

impl BinaryMask for Mask2 {
    fn shape(&self) -> (usize, usize, usize) {
        (self.width, self.height, 1)
    }

    fn bits(&self) -> &[bool] {
        &self.data
    }
}

impl BinaryMask for Mask3 {
    fn shape(&self) -> (usize, usize, usize) {
        (self.dims.nx, self.dims.ny, self.dims.nz)
    }

    fn bits(&self) -> &[bool] {
        &self.data
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(Grid2::from_vec(2, 2, vec![0u8; 3]).is_err());
        let g = Grid2::from_vec(3, 2, (0..6).collect::<Vec<u8>>()).unwrap();
        assert_eq!(g.get(2, 1), 5);
        assert_eq!(g.get_signed(-1, 0), None);
        assert_eq!(g.get_signed(3, 0), None);
    }

    #[test]
    fn mask_set_ops() {
        let a = Mask2::from_vec(2, 1, vec![true, true]).unwrap();
        let b = Mask2::from_vec(2, 1, vec![false, true]).unwrap();
        assert_eq!(a.and(&b).count(), 1);
        assert_eq!(a.and_not(&b).points().collect::<Vec<_>>(), vec![(0, 0)]);
        assert!(b.is_subset_of(&a));
        assert!(!a.is_subset_of(&b));
    }

    #[test]
    fn mask3_slices_roundtrip() {
        let s0 = Mask2::from_vec(2, 2, vec![true, false, false, false]).unwrap();
        let s1 = Mask2::from_vec(2, 2, vec![false, false, false, true]).unwrap();
        let m = Mask3::from_slices(&[s0.clone(), s1.clone()]).unwrap();
        assert_eq!(m.dims(), Dims::new(2, 2, 2));
        assert!(m.get(1, 1, 1));
        assert_eq!(m.slice(0), s0);
        assert_eq!(m.slice(1), s1);
    }
}
