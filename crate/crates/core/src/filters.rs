//! Separable Gaussian smoothing with replicated borders.

use crate::error::{Error, Result};
use crate::grid::Grid2;

/// Normalised kernel of radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("gaussian sigma must be finite and >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(vec![1.0]);
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    Ok(k)
}

fn convolve_rows(grid: &Grid2<f64>, kernel: &[f64]) -> Grid2<f64> {
    let (w, h) = (grid.width(), grid.height());
    let r = (kernel.len() / 2) as isize;
    Grid2::from_fn(w, h, |x, y| {
        kernel
            .iter()
            .enumerate()
            .map(|(i, k)| {
                let sx = (x as isize + i as isize - r).clamp(0, w as isize - 1) as usize;
                k * grid.get(sx, y)
            })
            .sum()
    })
}

fn transpose(grid: &Grid2<f64>) -> Grid2<f64> {
    Grid2::from_fn(grid.height(), grid.width(), |x, y| grid.get(y, x))
}

/// Gaussian blur with standard deviation `sigma` pixels on both axes.
pub fn gaussian_blur(grid: &Grid2<f64>, sigma: f64) -> Result<Grid2<f64>> {
    let kernel = gaussian_kernel(sigma)?;
    if kernel.len() == 1 || grid.is_empty() {
        return Ok(grid.clone());
    }
    let rows = convolve_rows(grid, &kernel);
    Ok(transpose(&convolve_rows(&transpose(&rows), &kernel)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_sums_to_one() {
        let k = gaussian_kernel(1.5).unwrap();
        assert_eq!(k.len(), 11);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(gaussian_kernel(-1.0).is_err());
    }

    #[test]
    fn constant_is_preserved() {
        let g = Grid2::filled(7, 5, 3.0);
        let b = gaussian_blur(&g, 2.0).unwrap();
        assert!(b.as_slice().iter().all(|v| (v - 3.0).abs() < 1e-12));
    }

    #[test]
    fn impulse_spreads_symmetrically() {
        let mut g = Grid2::filled(21, 21, 0.0);
        g.set(10, 10, 1.0);
        let b = gaussian_blur(&g, 1.0).unwrap();
        assert!((b.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((b.get(9, 10) - b.get(11, 10)).abs() < 1e-15);
        assert!((b.get(10, 9) - b.get(9, 10)).abs() < 1e-15);
        assert_eq!(gaussian_blur(&g, 0.0).unwrap(), g);
    }
}
