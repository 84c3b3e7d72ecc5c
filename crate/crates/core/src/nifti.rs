//! NIfTI-1 single-file (`.nii`) reading and writing.
//!
//! Supports datatype codes 2 (uint8), 4 (int16) and 16 (float32), both byte
//! orders on read (detected through `sizeof_hdr`), and `scl_slope`/`scl_inter`
//! scaling. Gzip containers are not handled; decompress first.

use crate::error::{Error, Result};
use crate::grid::Dims;
use crate::volume::{LabelMap, Spacing, Volume};

/// Size of the fixed NIfTI-1 header.
pub const HEADER_SIZE: usize = 348;
/// Offset where we place voxel data on write (header + 4-byte extension flag).
pub const DEFAULT_VOX_OFFSET: usize = 352;
/// Magic of single-file NIfTI-1.
pub const MAGIC_NP1: &[u8; 4] = b"n+1\0";
/// Magic of the header/image pair variant.
pub const MAGIC_NI1: &[u8; 4] = b"ni1\0";

/// Voxel storage types we read and write.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataType {
    Uint8,
    Int16,
    Float32,
}

impl DataType {
    pub fn code(self) -> i16 {
        match self {
            DataType::Uint8 => 2,
            DataType::Int16 => 4,
            DataType::Float32 => 16,
        }
    }

    pub fn from_code(code: i16) -> Result<Self> {
        match code {
            2 => Ok(DataType::Uint8),
            4 => Ok(DataType::Int16),
            16 => Ok(DataType::Float32),
            other => Err(Error::Unsupported(format!("NIfTI datatype code {other}"))),
        }
    }

    pub fn bytes_per_voxel(self) -> usize {
        match self {
            DataType::Uint8 => 1,
            DataType::Int16 => 2,
            DataType::Float32 => 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Endian {
    Little,
    Big,
}

/// How slices are ordered after reading.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SliceOrder {
    /// Use the sform when present: a positive z-step along the slice axis
    /// (towards superior, i.e. towards the base) means the file is stored
    /// apex first and gets reversed. Without an sform the stored order is kept.
    #[default]
    Auto,
    AsStored,
    Reversed,
}

impl std::str::FromStr for SliceOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(SliceOrder::Auto),
            "as-stored" | "stored" => Ok(SliceOrder::AsStored),
            "reversed" | "reverse" => Ok(SliceOrder::Reversed),
            other => Err(Error::Config(format!("unknown slice order '{other}'"))),
        }
    }
}

/// The header fields this crate interprets.
#[derive(Clone, Debug, PartialEq)]
pub struct NiftiHeader {
    pub endian: Endian,
    pub dims: Dims,
    pub pixdim: [f32; 3],
    pub datatype: DataType,
    pub vox_offset: usize,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub sform_code: i16,
    pub srow_z: [f32; 4],
}

impl NiftiHeader {
    fn needs_reversal(&self, order: SliceOrder) -> bool {
        match order {
            SliceOrder::AsStored => false,
            SliceOrder::Reversed => true,
            SliceOrder::Auto => self.sform_code > 0 && self.srow_z[2] > 0.0,
        }
    }
}

/// Decoded voxels with their header.
#[derive(Clone, Debug)]
pub struct NiftiImage {
    pub header: NiftiHeader,
    /// Scaled voxel values in file order.
    pub data: Vec<f64>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    endian: Endian,
}

impl Reader<'_> {
    fn i16(&self, off: usize) -> i16 {
        let b = [self.bytes[off], self.bytes[off + 1]];
        match self.endian {
            Endian::Little => i16::from_le_bytes(b),
            Endian::Big => i16::from_be_bytes(b),
        }
    }

    fn f32(&self, off: usize) -> f32 {
        let b = [self.bytes[off], self.bytes[off + 1], self.bytes[off + 2], self.bytes[off + 3]];
        match self.endian {
            Endian::Little => f32::from_le_bytes(b),
            Endian::Big => f32::from_be_bytes(b),
        }
    }
}

/// Parses the header and decodes the payload.
pub fn read_nifti(bytes: &[u8]) -> Result<NiftiImage> {
    if bytes.len() < HEADER_SIZE {
        return Err(Error::Length { expected: HEADER_SIZE, found: bytes.len() });
    }
    let size_bytes = [bytes[0], bytes[1], bytes[2], bytes[3]];
    let endian = if i32::from_le_bytes(size_bytes) == HEADER_SIZE as i32 {
        Endian::Little
    } else if i32::from_be_bytes(size_bytes) == HEADER_SIZE as i32 {
        Endian::Big
    } else {
        return Err(Error::Format("sizeof_hdr is not 348 in either byte order".into()));
    };
    let magic = &bytes[344..348];
    if magic != MAGIC_NP1 && magic != MAGIC_NI1 {
        return Err(Error::Format(format!("bad magic {:?}", String::from_utf8_lossy(magic))));
    }
    let r = Reader { bytes, endian };

    let ndim = r.i16(40);
    if !(1..=7).contains(&ndim) {
        return Err(Error::Format(format!("dim[0] = {ndim} outside 1..=7")));
    }
    let mut dim = [1usize; 8];
    for (i, d) in dim.iter_mut().enumerate().skip(1).take(ndim as usize) {
        let v = r.i16(40 + 2 * i);
        if v < 1 {
            return Err(Error::Format(format!("dim[{i}] = {v}")));
        }
        *d = v as usize;
    }
    if dim[4..].iter().any(|&d| d != 1) {
        return Err(Error::Unsupported(format!("non-spatial dimensions {:?}", &dim[4..=ndim.max(4) as usize])));
    }
    let dims = Dims::new(dim[1], dim[2], dim[3]);

    let datatype = DataType::from_code(r.i16(70))?;
    let mut pixdim = [1.0f32; 3];
    for (i, p) in pixdim.iter_mut().enumerate() {
        if (i as i16) < ndim {
            *p = r.f32(76 + 4 * (i + 1)).abs();
        }
    }
    let vox_offset_raw = r.f32(108);
    if !(vox_offset_raw.is_finite() && vox_offset_raw >= 0.0) {
        return Err(Error::Format(format!("vox_offset {vox_offset_raw}")));
    }
    let vox_offset = (vox_offset_raw as usize).max(HEADER_SIZE);
    let scl_slope = r.f32(112);
    let scl_inter = r.f32(116);
    let sform_code = r.i16(254);
    let srow_z = [r.f32(312), r.f32(316), r.f32(320), r.f32(324)];

    let n = dims.len();
    let expected = vox_offset + n * datatype.bytes_per_voxel();
    if bytes.len() < expected {
        return Err(Error::Length { expected, found: bytes.len() });
    }

    let payload = &bytes[vox_offset..expected];
    let mut data: Vec<f64> = match datatype {
        DataType::Uint8 => payload.iter().map(|&b| f64::from(b)).collect(),
        DataType::Int16 => payload
            .chunks_exact(2)
            .map(|c| {
                let b = [c[0], c[1]];
                f64::from(match endian {
                    Endian::Little => i16::from_le_bytes(b),
                    Endian::Big => i16::from_be_bytes(b),
                })
            })
            .collect(),
        DataType::Float32 => payload
            .chunks_exact(4)
            .map(|c| {
                let b = [c[0], c[1], c[2], c[3]];
                f64::from(match endian {
                    Endian::Little => f32::from_le_bytes(b),
                    Endian::Big => f32::from_be_bytes(b),
                })
            })
            .collect(),
    };
    if scl_slope != 0.0 && scl_slope.is_finite() {
        let (s, i) = (f64::from(scl_slope), f64::from(scl_inter));
        if s != 1.0 || i != 0.0 {
            for v in &mut data {
                *v = *v * s + i;
            }
        }
    }
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::Range(format!("non-finite voxel at index {i}")));
    }

    Ok(NiftiImage {
        header: NiftiHeader { endian, dims, pixdim, datatype, vox_offset, scl_slope, scl_inter, sform_code, srow_z },
        data,
    })
}

fn spacing_of(h: &NiftiHeader) -> Result<Spacing> {
    Spacing::new(f64::from(h.pixdim[0]), f64::from(h.pixdim[1]), f64::from(h.pixdim[2]))
        .map_err(|e| Error::Format(format!("pixdim: {e}")))
}

/// Reads an intensity volume, normalising slice order.
pub fn read_volume(bytes: &[u8], order: SliceOrder) -> Result<Volume> {
    let img = read_nifti(bytes)?;
    let v = Volume::new(img.header.dims, spacing_of(&img.header)?, img.data)?;
    Ok(if img.header.needs_reversal(order) { v.reversed_slices() } else { v })
}

/// Reads a label map. Class 4 (MVO) is merged into class 3 (scar).
pub fn read_labels(bytes: &[u8], order: SliceOrder) -> Result<LabelMap> {
    let img = read_nifti(bytes)?;
    let mut labels = Vec::with_capacity(img.data.len());
    for &v in &img.data {
        if v.fract() != 0.0 || !(0.0..=4.0).contains(&v) {
            return Err(Error::Range(format!("label value {v} is not one of 0..=4")));
        }
        labels.push(if v == 4.0 { 3 } else { v as u8 });
    }
    let l = LabelMap::new(img.header.dims, spacing_of(&img.header)?, labels)?;
    Ok(if img.header.needs_reversal(order) { l.reversed_slices() } else { l })
}

fn check_representable(values: &[f64], datatype: DataType) -> Result<()> {
    for (i, &v) in values.iter().enumerate() {
        let ok = match datatype {
            DataType::Uint8 => v.fract() == 0.0 && (0.0..=255.0).contains(&v),
            DataType::Int16 => v.fract() == 0.0 && (f64::from(i16::MIN)..=f64::from(i16::MAX)).contains(&v),
            DataType::Float32 => v.is_finite() && v.abs() <= f64::from(f32::MAX),
        };
        if !ok {
            return Err(Error::Range(format!("value {v} at index {i} not representable as {datatype:?}")));
        }
    }
    Ok(())
}

/// Encodes a grid as a single-file NIfTI-1 image.
///
/// The header written is canonical: sform code 1 with a diagonal affine
/// whose slice axis points inferior (stored base first), `scl_slope = 1`.
pub fn write_nifti(
    dims: Dims,
    spacing: Spacing,
    values: &[f64],
    datatype: DataType,
    endian: Endian,
) -> Result<Vec<u8>> {
    if values.len() != dims.len() {
        return Err(Error::DimensionMismatch(format!("{} values for {:?}", values.len(), dims)));
    }
    for (axis, n) in [("nx", dims.nx), ("ny", dims.ny), ("nz", dims.nz)] {
        if n == 0 || n > i16::MAX as usize {
            return Err(Error::Range(format!("{axis} = {n} outside 1..=32767")));
        }
    }
    check_representable(values, datatype)?;

    let mut out = vec![0u8; DEFAULT_VOX_OFFSET + values.len() * datatype.bytes_per_voxel()];
    let put_i32 = |buf: &mut [u8], off: usize, v: i32| {
        let b = match endian {
            Endian::Little => v.to_le_bytes(),
            Endian::Big => v.to_be_bytes(),
        };
        buf[off..off + 4].copy_from_slice(&b);
    };
    let put_i16 = |buf: &mut [u8], off: usize, v: i16| {
        let b = match endian {
            Endian::Little => v.to_le_bytes(),
            Endian::Big => v.to_be_bytes(),
        };
        buf[off..off + 2].copy_from_slice(&b);
    };
    let put_f32 = |buf: &mut [u8], off: usize, v: f32| {
        let b = match endian {
            Endian::Little => v.to_le_bytes(),
            Endian::Big => v.to_be_bytes(),
        };
        buf[off..off + 4].copy_from_slice(&b);
    };

    put_i32(&mut out, 0, HEADER_SIZE as i32);
    out[38] = b'r';
    let dim: [i16; 8] = [3, dims.nx as i16, dims.ny as i16, dims.nz as i16, 1, 1, 1, 1];
    for (i, d) in dim.iter().enumerate() {
        put_i16(&mut out, 40 + 2 * i, *d);
    }
    put_i16(&mut out, 70, datatype.code());
    put_i16(&mut out, 72, (datatype.bytes_per_voxel() * 8) as i16);
    let (dx, dy, dz) = (spacing.dx as f32, spacing.dy as f32, spacing.dz as f32);
    let pixdim: [f32; 8] = [1.0, dx, dy, dz, 1.0, 1.0, 1.0, 1.0];
    for (i, p) in pixdim.iter().enumerate() {
        put_f32(&mut out, 76 + 4 * i, *p);
    }
    put_f32(&mut out, 108, DEFAULT_VOX_OFFSET as f32);
    put_f32(&mut out, 112, 1.0);
    put_f32(&mut out, 116, 0.0);
    // xyzt_units: millimetres
    out[123] = 2;
    put_i16(&mut out, 254, 1);
    let srow = [[dx, 0.0, 0.0, 0.0], [0.0, dy, 0.0, 0.0], [0.0, 0.0, -dz, 0.0]];
    for (r, row) in srow.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            put_f32(&mut out, 280 + 16 * r + 4 * c, *v);
        }
    }
    out[344..348].copy_from_slice(MAGIC_NP1);

    let payload = &mut out[DEFAULT_VOX_OFFSET..];
    match datatype {
        DataType::Uint8 => {
            for (dst, &v) in payload.iter_mut().zip(values) {
                *dst = v as u8;
            }
        }
        DataType::Int16 => {
            for (dst, &v) in payload.chunks_exact_mut(2).zip(values) {
                let b = match endian {
                    Endian::Little => (v as i16).to_le_bytes(),
                    Endian::Big => (v as i16).to_be_bytes(),
                };
                dst.copy_from_slice(&b);
            }
        }
        DataType::Float32 => {
            for (dst, &v) in payload.chunks_exact_mut(4).zip(values) {
                let b = match endian {
                    Endian::Little => (v as f32).to_le_bytes(),
                    Endian::Big => (v as f32).to_be_bytes(),
                };
                dst.copy_from_slice(&b);
            }
        }
    }
    Ok(out)
}

/// Little-endian encoding of an intensity volume.
pub fn write_volume(volume: &Volume, datatype: DataType) -> Result<Vec<u8>> {
    write_nifti(volume.dims(), volume.spacing(), volume.data(), datatype, Endian::Little)
}

/// Little-endian encoding of a label map.
pub fn write_labels(labels: &LabelMap, datatype: DataType) -> Result<Vec<u8>> {
    let values: Vec<f64> = labels.data().iter().map(|&v| f64::from(v)).collect();
    write_nifti(labels.dims(), labels.spacing(), &values, datatype, Endian::Little)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp() -> Spacing {
        Spacing::new(1.25, 1.25, 8.0).unwrap()
    }

    #[test]
    fn minimal_float_volume() {
        let bytes =
            write_nifti(Dims::new(2, 2, 1), sp(), &[1.0, 2.0, 3.0, 4.0], DataType::Float32, Endian::Little).unwrap();
        let v = read_volume(&bytes, SliceOrder::AsStored).unwrap();
        assert_eq!(v.dims(), Dims::new(2, 2, 1));
        assert_eq!(v.data(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(v.spacing(), sp());
    }

    #[test]
    fn big_endian_matches_little_endian() {
        let vals: Vec<f64> = (0..24).map(|i| f64::from(i as i16 * 37 - 300)).collect();
        for dt in [DataType::Uint8, DataType::Int16, DataType::Float32] {
            let vals: Vec<f64> =
                if dt == DataType::Uint8 { vals.iter().map(|v| v.abs() % 256.0).collect() } else { vals.clone() };
            let le = write_nifti(Dims::new(2, 3, 4), sp(), &vals, dt, Endian::Little).unwrap();
            let be = write_nifti(Dims::new(2, 3, 4), sp(), &vals, dt, Endian::Big).unwrap();
            assert_ne!(le, be);
            let a = read_nifti(&le).unwrap();
            let b = read_nifti(&be).unwrap();
            assert_eq!(a.header.endian, Endian::Little);
            assert_eq!(b.header.endian, Endian::Big);
            assert_eq!(a.data, b.data);
            assert_eq!(a.header.dims, b.header.dims);
            assert_eq!(a.header.pixdim, b.header.pixdim);
        }
    }

    #[test]
    fn bad_magic() {
        let mut bytes = write_nifti(Dims::new(1, 1, 1), sp(), &[0.0], DataType::Uint8, Endian::Little).unwrap();
        bytes[344..348].copy_from_slice(b"xxxx");
        assert!(matches!(read_nifti(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn unsupported_datatype() {
        let mut bytes = write_nifti(Dims::new(1, 1, 1), sp(), &[0.0], DataType::Uint8, Endian::Little).unwrap();
        bytes[70..72].copy_from_slice(&64i16.to_le_bytes());
        assert!(matches!(read_nifti(&bytes), Err(Error::Unsupported(_))));
    }

    #[test]
    fn truncated_payload() {
        let bytes = write_nifti(Dims::new(4, 4, 2), sp(), &[1.0; 32], DataType::Int16, Endian::Little).unwrap();
        let err = read_nifti(&bytes[..bytes.len() - 1]).unwrap_err();
        assert!(matches!(err, Error::Length { .. }));
        assert!(matches!(read_nifti(&bytes[..100]), Err(Error::Length { .. })));
    }

    #[test]
    fn labels_as_uint8_payload() {
        let labels = LabelMap::new(Dims::new(4, 1, 1), sp(), vec![0, 1, 2, 3]).unwrap();
        let bytes = write_labels(&labels, DataType::Uint8).unwrap();
        assert_eq!(&bytes[DEFAULT_VOX_OFFSET..], &[0, 1, 2, 3]);
        assert_eq!(read_labels(&bytes, SliceOrder::AsStored).unwrap(), labels);
    }

    #[test]
    fn mvo_merged_into_scar() {
        let bytes =
            write_nifti(Dims::new(5, 1, 1), sp(), &[0.0, 1.0, 2.0, 3.0, 4.0], DataType::Uint8, Endian::Little).unwrap();
        assert_eq!(read_labels(&bytes, SliceOrder::AsStored).unwrap().data(), &[0, 1, 2, 3, 3]);
        let bad = write_nifti(Dims::new(1, 1, 1), sp(), &[7.0], DataType::Uint8, Endian::Little).unwrap();
        assert!(read_labels(&bad, SliceOrder::AsStored).is_err());
    }

    #[test]
    fn range_errors() {
        let err = write_nifti(Dims::new(1, 1, 1), sp(), &[1e40], DataType::Int16, Endian::Little).unwrap_err();
        assert!(matches!(err, Error::Range(_)));
        assert!(write_nifti(Dims::new(1, 1, 1), sp(), &[256.0], DataType::Uint8, Endian::Little).is_err());
        assert!(write_nifti(Dims::new(1, 1, 1), sp(), &[0.5], DataType::Int16, Endian::Little).is_err());
    }

    #[test]
    fn scaling_applied() {
        let mut bytes = write_nifti(Dims::new(2, 1, 1), sp(), &[1.0, 2.0], DataType::Int16, Endian::Little).unwrap();
        bytes[112..116].copy_from_slice(&2.0f32.to_le_bytes());
        bytes[116..120].copy_from_slice(&0.5f32.to_le_bytes());
        assert_eq!(read_nifti(&bytes).unwrap().data, vec![2.5, 4.5]);
        // slope 0 means "no scaling"
        bytes[112..116].copy_from_slice(&0.0f32.to_le_bytes());
        assert_eq!(read_nifti(&bytes).unwrap().data, vec![1.0, 2.0]);
    }

    #[test]
    fn vox_offset_honoured() {
        let bytes = write_nifti(Dims::new(2, 1, 1), sp(), &[5.0, 6.0], DataType::Uint8, Endian::Little).unwrap();
        let mut shifted = bytes[..DEFAULT_VOX_OFFSET].to_vec();
        shifted.extend_from_slice(&[0u8; 16]);
        shifted.extend_from_slice(&bytes[DEFAULT_VOX_OFFSET..]);
        shifted[108..112].copy_from_slice(&((DEFAULT_VOX_OFFSET + 16) as f32).to_le_bytes());
        assert_eq!(read_nifti(&shifted).unwrap().data, vec![5.0, 6.0]);
    }

    #[test]
    fn slice_order_from_sform() {
        let vals = [1.0, 2.0, 3.0];
        let mut bytes = write_nifti(Dims::new(1, 1, 3), sp(), &vals, DataType::Float32, Endian::Little).unwrap();
        assert_eq!(read_volume(&bytes, SliceOrder::Auto).unwrap().data(), &vals);
        assert_eq!(read_volume(&bytes, SliceOrder::Reversed).unwrap().data(), &[3.0, 2.0, 1.0]);
        // slice axis pointing superior: stored apex first
        bytes[320..324].copy_from_slice(&8.0f32.to_le_bytes());
        assert_eq!(read_volume(&bytes, SliceOrder::Auto).unwrap().data(), &[3.0, 2.0, 1.0]);
        assert_eq!(read_volume(&bytes, SliceOrder::AsStored).unwrap().data(), &vals);
    }

    #[test]
    fn non_finite_voxels_rejected() {
        let mut bytes = write_nifti(Dims::new(1, 1, 1), sp(), &[0.0], DataType::Float32, Endian::Little).unwrap();
        bytes[DEFAULT_VOX_OFFSET..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(read_nifti(&bytes), Err(Error::Range(_))));
    }
}
