//! Hausdorff distances between mask boundaries, in millimetres.

use crate::error::{Error, Result};
use crate::grid::BinaryMask;
use crate::preprocess::percentile_sorted;
use crate::volume::Spacing;

/// Foreground voxels with a face neighbour outside the mask. Voxels beyond
/// the volume count as outside; the z axis is ignored for single-slice masks.
pub fn boundary<M: BinaryMask + ?Sized>(mask: &M) -> Vec<bool> {
    let (nx, ny, nz) = mask.shape();
    let bits = mask.bits();
    let at = |x: isize, y: isize, z: isize| -> bool {
        if x < 0 || y < 0 || z < 0 || x >= nx as isize || y >= ny as isize || z >= nz as isize {
            return false;
        }
        bits[(z as usize * ny + y as usize) * nx + x as usize]
    };
    let mut out = vec![false; bits.len()];
    for z in 0..nz as isize {
        for y in 0..ny as isize {
            for x in 0..nx as isize {
                if !at(x, y, z) {
                    continue;
                }
                let mut edge = !at(x - 1, y, z) || !at(x + 1, y, z) || !at(x, y - 1, z) || !at(x, y + 1, z);
                if nz > 1 {
                    edge = edge || !at(x, y, z - 1) || !at(x, y, z + 1);
                }
                out[(z as usize * ny + y as usize) * nx + x as usize] = edge;
            }
        }
    }
    out
}

/// Lower envelope of parabolas: `out[q] = min_p f[p] + (w (q - p))^2`.
fn edt_1d(f: &[f64], w: f64, out: &mut [f64], v: &mut Vec<usize>, z: &mut Vec<f64>) {
    let n = f.len();
    v.clear();
    z.clear();
    let key = |p: usize| f[p] + (w * p as f64).powi(2);
    for q in 0..n {
        if f[q].is_infinite() {
            continue;
        }
        loop {
            match v.last() {
                None => {
                    v.push(q);
                    z.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let s = (key(q) - key(p)) / (2.0 * w * w * (q - p) as f64);
                    if s <= *z.last().unwrap() {
                        v.pop();
                        z.pop();
                    } else {
                        v.push(q);
                        z.push(s);
                        break;
                    }
                }
            }
        }
    }
    if v.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while k + 1 < v.len() && z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        *o = f[p] + (w * (q as f64 - p as f64)).powi(2);
    }
}

/// Squared Euclidean distance (mm²) from every voxel centre to the nearest
/// seed voxel centre.
pub fn squared_distance_transform(seeds: &[bool], shape: (usize, usize, usize), spacing: Spacing) -> Vec<f64> {
    let (nx, ny, nz) = shape;
    let mut d: Vec<f64> = seeds.iter().map(|&s| if s { 0.0 } else { f64::INFINITY }).collect();
    let (mut v, mut zb) = (Vec::new(), Vec::new());
    let axes = [(nx, 1usize, spacing.dx), (ny, nx, spacing.dy), (nz, nx * ny, spacing.dz)];
    for (axis, &(len, stride, w)) in axes.iter().enumerate() {
        if len <= 1 {
            continue;
        }
        let mut line = vec![0.0; len];
        let mut out = vec![0.0; len];
        let starts: Vec<usize> = (0..d.len())
            .filter(|&i| match axis {
                0 => i % nx == 0,
                1 => (i / nx) % ny == 0,
                _ => i < nx * ny,
            })
            .collect();
        for s in starts {
            for (j, l) in line.iter_mut().enumerate() {
                *l = d[s + j * stride];
            }
            edt_1d(&line, w, &mut out, &mut v, &mut zb);
            for (j, &o) in out.iter().enumerate() {
                d[s + j * stride] = o;
            }
        }
    }
    d
}

/// Distances from each boundary voxel of one mask to the other boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceDistances {
    pub a_to_b: Vec<f64>,
    pub b_to_a: Vec<f64>,
}

pub fn surface_distances<M: BinaryMask + ?Sized>(a: &M, b: &M, spacing: Spacing) -> Result<SurfaceDistances> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!("hausdorff: {:?} vs {:?}", a.shape(), b.shape())));
    }
    if !a.bits().contains(&true) || !b.bits().contains(&true) {
        return Err(Error::Degenerate("hausdorff distance of an empty mask is undefined".into()));
    }
    let (ba, bb) = (boundary(a), boundary(b));
    let directed = |from: &[bool], to: &[bool]| -> Vec<f64> {
        let dt = squared_distance_transform(to, a.shape(), spacing);
        from.iter().zip(&dt).filter(|(&f, _)| f).map(|(_, &d)| d.sqrt()).collect()
    };
    Ok(SurfaceDistances { a_to_b: directed(&ba, &bb), b_to_a: directed(&bb, &ba) })
}

/// Symmetric maximum of the directed boundary distances.
pub fn hausdorff_mm<M: BinaryMask + ?Sized>(a: &M, b: &M, spacing: Spacing) -> Result<f64> {
    let s = surface_distances(a, b, spacing)?;
    Ok(s.a_to_b.iter().chain(&s.b_to_a).copied().fold(0.0, f64::max))
}

/// 95th percentile of the pooled directed boundary distances.
pub fn hausdorff95_mm<M: BinaryMask + ?Sized>(a: &M, b: &M, spacing: Spacing) -> Result<f64> {
    let s = surface_distances(a, b, spacing)?;
    let mut all: Vec<f64> = s.a_to_b.into_iter().chain(s.b_to_a).collect();
    all.sort_by(f64::total_cmp);
    Ok(percentile_sorted(&all, 95.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Dims, Mask2, Mask3};

    #[test]
    fn single_voxels() {
        let dims = Dims::new(5, 1, 1);
        let a = Mask3::from_vec(dims, vec![true, false, false, false, false]).unwrap();
        let b = Mask3::from_vec(dims, vec![false, false, false, true, false]).unwrap();
        let s = Spacing::new(1.0, 1.0, 1.0).unwrap();
        assert_eq!(hausdorff_mm(&a, &b, s).unwrap(), 3.0);
        assert_eq!(hausdorff_mm(&a, &a, s).unwrap(), 0.0);
    }

    #[test]
    fn anisotropic_z() {
        let dims = Dims::new(1, 1, 4);
        let a = Mask3::from_vec(dims, vec![true, false, false, false]).unwrap();
        let b = Mask3::from_vec(dims, vec![false, false, true, false]).unwrap();
        assert_eq!(hausdorff_mm(&a, &b, Spacing::new(1.0, 1.0, 8.0).unwrap()).unwrap(), 16.0);
    }

    #[test]
    fn boundary_of_square() {
        let m = Mask2::from_fn(5, 5, |x, y| (1..4).contains(&x) && (1..4).contains(&y));
        let b = boundary(&m);
        assert_eq!(b.iter().filter(|&&v| v).count(), 8);
        assert!(!b[2 * 5 + 2]);
    }

    #[test]
    fn empty_is_undefined() {
        let a = Mask2::filled(3, 3, false);
        let b = Mask2::filled(3, 3, true);
        assert!(hausdorff_mm(&a, &b, Spacing::isotropic(1.0).unwrap()).is_err());
    }
}
