//! Overlap and volume measures.

use crate::error::{Error, Result};
use crate::grid::BinaryMask;
use crate::volume::{voxel_volume_cm3, Spacing};

/// Dice similarity coefficient; two empty masks score 1.
pub fn dice<M: BinaryMask + ?Sized>(a: &M, b: &M) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!("dice: {:?} vs {:?}", a.shape(), b.shape())));
    }
    let (mut na, mut nb, mut both) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        na += usize::from(x);
        nb += usize::from(y);
        both += usize::from(x && y);
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (na + nb) as f64)
}

/// Volume of a mask in cm³.
pub fn mask_volume<M: BinaryMask + ?Sized>(mask: &M, spacing: Spacing) -> f64 {
    mask.bits().iter().filter(|&&b| b).count() as f64 * voxel_volume_cm3(spacing)
}

/// `|vol(a) - vol(b)|` in cm³.
pub fn volume_difference<M: BinaryMask + ?Sized>(a: &M, b: &M, spacing: Spacing) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!("volume difference: {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok((mask_volume(a, spacing) - mask_volume(b, spacing)).abs())
}

/// Scar as a percentage of the wall (myocardium plus scar).
pub fn scar_burden<M: BinaryMask + ?Sized>(scar: &M, myo: &M, spacing: Spacing) -> Result<f64> {
    if scar.shape() != myo.shape() {
        return Err(Error::DimensionMismatch(format!("scar burden: {:?} vs {:?}", scar.shape(), myo.shape())));
    }
    let scar_n = scar.bits().iter().filter(|&&b| b).count();
    let myo_only = scar.bits().iter().zip(myo.bits()).filter(|(&s, &m)| m && !s).count();
    if scar_n + myo_only == 0 {
        return Err(Error::Degenerate("empty wall".into()));
    }
    let v = voxel_volume_cm3(spacing);
    Ok(100.0 * (scar_n as f64 * v) / ((myo_only + scar_n) as f64 * v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Mask2;

    fn line(bits: &[u8]) -> Mask2 {
        Mask2::from_vec(bits.len(), 1, bits.iter().map(|&b| b == 1).collect()).unwrap()
    }

    #[test]
    fn dice_examples() {
        let a = line(&[1, 1, 1, 1, 0, 0]);
        let b = line(&[0, 0, 1, 1, 1, 1]);
        assert_eq!(dice(&a, &b).unwrap(), 0.5);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        assert_eq!(dice(&line(&[1, 0]), &line(&[0, 1])).unwrap(), 0.0);
        assert_eq!(dice(&line(&[0, 0]), &line(&[0, 0])).unwrap(), 1.0);
        assert!(dice(&line(&[0]), &line(&[0, 0])).is_err());
    }

    #[test]
    fn volumes() {
        let s = Spacing::isotropic(1.0).unwrap();
        let a = Mask2::filled(10, 10, false);
        let b = Mask2::filled(10, 10, true);
        assert!((volume_difference(&a, &b, s).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(volume_difference(&b, &b, s).unwrap(), 0.0);
    }

    #[test]
    fn burden() {
        let s = Spacing::isotropic(1.0).unwrap();
        let scar = Mask2::from_fn(10, 10, |x, _| x == 0);
        let myo = Mask2::from_fn(10, 10, |x, _| x > 0);
        assert!((scar_burden(&scar, &myo, s).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(scar_burden(&a_none(), &myo, s).unwrap(), 0.0);
        assert!(scar_burden(&a_none(), &a_none(), s).is_err());
    }

    fn a_none() -> Mask2 {
        Mask2::filled(10, 10, false)
    }
}
