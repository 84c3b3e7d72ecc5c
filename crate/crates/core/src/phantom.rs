//! Parametric left-ventricle phantoms with analytic ground truth.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Dims, Grid2, LabelSlice, Slice2D};
use crate::rng::{derive_seed, rng_from_seed};
use crate::volume::{Class, LabelMap, Spacing, SubjectRecord, Volume};

/// Intensity of each class before noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassIntensities {
    pub background: f64,
    pub cavity: f64,
    pub myocardium: f64,
    pub scar: f64,
}

impl Default for ClassIntensities {
    fn default() -> Self {
        Self { background: 0.0, cavity: 0.25, myocardium: 0.75, scar: 1.0 }
    }
}

impl ClassIntensities {
    pub fn of(&self, class: Class) -> f64 {
        match class {
            Class::Background => self.background,
            Class::Cavity => self.cavity,
            Class::Myocardium => self.myocardium,
            Class::Scar => self.scar,
        }
    }

    fn distinct(&self) -> bool {
        let v = [self.background, self.cavity, self.myocardium, self.scar];
        (0..4).all(|i| ((i + 1)..4).all(|j| v[i] != v[j]))
    }
}

/// Subendocardial scar occupying an angular sector on a run of slices.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScarSpec {
    /// Sector start in degrees, counter-clockwise from +x in image coordinates.
    pub theta0_deg: f64,
    /// Sector end; `theta1_deg - theta0_deg` is the angular extent in (0, 360].
    pub theta1_deg: f64,
    /// Fraction of the wall thickness covered from the endocardium, in (0, 1].
    pub transmurality: f64,
    /// First slice with scar.
    pub z_start: usize,
    /// One past the last slice with scar.
    pub z_end: usize,
}

impl ScarSpec {
    pub fn extent_deg(&self) -> f64 {
        self.theta1_deg - self.theta0_deg
    }

    fn in_sector(&self, angle_deg: f64) -> bool {
        (angle_deg - self.theta0_deg).rem_euclid(360.0) < self.extent_deg()
    }

    pub fn on_slice(&self, z: usize) -> bool {
        (self.z_start..self.z_end).contains(&z)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub spacing: Spacing,
    /// Ventricle centre in pixel coordinates.
    pub center: (f64, f64),
    /// Endocardial radius at the base, mm.
    pub inner_radius_mm: f64,
    /// Epicardial radius at the base, mm.
    pub outer_radius_mm: f64,
    /// Radius scale reached at the apical slice; radii taper linearly.
    pub apex_scale: f64,
    pub scar: Option<ScarSpec>,
    pub intensities: ClassIntensities,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            nx: 128,
            ny: 128,
            nz: 8,
            spacing: Spacing { dx: 1.5, dy: 1.5, dz: 8.0 },
            center: (63.5, 63.5),
            inner_radius_mm: 18.0,
            outer_radius_mm: 27.0,
            apex_scale: 0.55,
            scar: None,
            intensities: ClassIntensities::default(),
            noise_sigma: 0.02,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    /// Inner and outer radius in mm on slice `z` (0 is the base).
    pub fn radii(&self, z: usize) -> (f64, f64) {
        let t = if self.nz > 1 { z as f64 / (self.nz - 1) as f64 } else { 0.0 };
        let s = 1.0 - (1.0 - self.apex_scale) * t;
        (self.inner_radius_mm * s, self.outer_radius_mm * s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 || self.nz == 0 {
            return Err(Error::InvalidArgument("phantom grid must be nonempty".into()));
        }
        let (r, big_r) = (self.inner_radius_mm, self.outer_radius_mm);
        if !(r > 0.0 && r < big_r && big_r.is_finite()) {
            return Err(Error::InvalidArgument(format!("need 0 < r < R, got r={r}, R={big_r}")));
        }
        if !(self.apex_scale > 0.0 && self.apex_scale <= 1.0) {
            return Err(Error::InvalidArgument(format!("apex scale {} outside (0, 1]", self.apex_scale)));
        }
        if !self.intensities.distinct() {
            return Err(Error::InvalidArgument("class intensities must be distinct".into()));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!("noise sigma {} must be >= 0", self.noise_sigma)));
        }
        let (cx, cy) = self.center;
        let (rx, ry) = (big_r / self.spacing.dx, big_r / self.spacing.dy);
        if cx - rx < 1.0 || cy - ry < 1.0 || cx + rx > self.nx as f64 - 2.0 || cy + ry > self.ny as f64 - 2.0 {
            return Err(Error::Range(format!(
                "ventricle of radius {big_r} mm at ({cx}, {cy}) does not fit a {}x{} grid",
                self.nx, self.ny
            )));
        }
        if let Some(s) = &self.scar {
            let extent = s.extent_deg();
            if !(extent > 0.0 && extent <= 360.0) {
                return Err(Error::InvalidArgument(format!("scar sector extent {extent} outside (0, 360]")));
            }
            if !(s.transmurality > 0.0 && s.transmurality <= 1.0) {
                return Err(Error::InvalidArgument(format!("transmurality {} outside (0, 1]", s.transmurality)));
            }
            if s.z_start >= s.z_end || s.z_end > self.nz {
                return Err(Error::InvalidArgument(format!(
                    "scar slices {}..{} invalid for {} slices",
                    s.z_start, s.z_end, self.nz
                )));
            }
        }
        Ok(())
    }

    /// Analytic label of the pixel centre `(x, y)` on slice `z`.
    pub fn label_at(&self, x: usize, y: usize, z: usize) -> Class {
        let (r, big_r) = self.radii(z);
        let ex = (x as f64 - self.center.0) * self.spacing.dx;
        let ey = (y as f64 - self.center.1) * self.spacing.dy;
        let d = ex.hypot(ey);
        if d < r {
            return Class::Cavity;
        }
        if d >= big_r {
            return Class::Background;
        }
        if let Some(s) = &self.scar {
            if s.on_slice(z) && d < r + s.transmurality * (big_r - r) && s.in_sector(ey.atan2(ex).to_degrees()) {
                return Class::Scar;
            }
        }
        Class::Myocardium
    }

    pub fn label_slice(&self, z: usize) -> LabelSlice {
        Grid2::from_fn(self.nx, self.ny, |x, y| self.label_at(x, y, z).as_u8())
    }
}

/// Rasterises `spec` and adds seeded Gaussian noise.
pub fn generate_phantom(id: &str, spec: &PhantomSpec) -> Result<SubjectRecord> {
    spec.validate()?;
    let labels: Vec<LabelSlice> = (0..spec.nz).map(|z| spec.label_slice(z)).collect();
    let mut rng = rng_from_seed(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let images: Vec<Slice2D> = labels
        .iter()
        .map(|l| {
            let mut img = l.map(|v| spec.intensities.of(Class::from_u8(v).unwrap_or(Class::Background)));
            if spec.noise_sigma > 0.0 {
                img.as_mut_slice().iter_mut().for_each(|v| *v += noise.sample(&mut rng));
            }
            img
        })
        .collect();
    let pathological = labels.iter().any(|l| l.as_slice().contains(&Class::Scar.as_u8()));
    let image = Volume::from_slices(&images, spec.spacing)?;
    let labels = LabelMap::from_slices(&labels, spec.spacing)?;
    debug_assert_eq!(image.dims(), Dims::new(spec.nx, spec.ny, spec.nz));
    SubjectRecord::new(id, image, Some(labels), Some(pathological))
}

/// Sampling ranges for [`generate_population`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationConfig {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub spacing: Spacing,
    /// Maximum centre offset from the grid centre, pixels per axis.
    pub center_jitter_px: f64,
    pub outer_radius_mm: (f64, f64),
    pub wall_thickness_mm: (f64, f64),
    pub apex_scale: f64,
    pub scar_extent_deg: (f64, f64),
    pub transmurality: (f64, f64),
    /// Fraction of slices covered by scar.
    pub scar_slice_fraction: (f64, f64),
    pub intensities: ClassIntensities,
    pub noise_sigma: f64,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        Self {
            nx: 128,
            ny: 128,
            nz: 8,
            spacing: Spacing { dx: 1.5, dy: 1.5, dz: 8.0 },
            center_jitter_px: 8.0,
            outer_radius_mm: (24.0, 32.0),
            wall_thickness_mm: (7.0, 11.0),
            apex_scale: 0.55,
            scar_extent_deg: (60.0, 150.0),
            transmurality: (0.5, 1.0),
            scar_slice_fraction: (0.4, 0.8),
            intensities: ClassIntensities::default(),
            noise_sigma: 0.02,
        }
    }
}

fn uniform(rng: &mut impl rand::Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Samples the spec of one subject.
pub fn sample_spec(config: &PopulationConfig, pathological: bool, seed: u64) -> PhantomSpec {
    let mut rng = rng_from_seed(seed);
    let j = config.center_jitter_px;
    let center = (
        (config.nx as f64 - 1.0) / 2.0 + uniform(&mut rng, (-j, j)),
        (config.ny as f64 - 1.0) / 2.0 + uniform(&mut rng, (-j, j)),
    );
    let outer = uniform(&mut rng, config.outer_radius_mm);
    let inner = outer - uniform(&mut rng, config.wall_thickness_mm);
    let scar = pathological.then(|| {
        let theta0 = uniform(&mut rng, (0.0, 360.0));
        let extent = uniform(&mut rng, config.scar_extent_deg);
        let transmurality = uniform(&mut rng, config.transmurality);
        let n_scar =
            ((config.nz as f64 * uniform(&mut rng, config.scar_slice_fraction)).round() as usize).clamp(1, config.nz);
        let z_start = rng.random_range(0..=config.nz - n_scar);
        ScarSpec { theta0_deg: theta0, theta1_deg: theta0 + extent, transmurality, z_start, z_end: z_start + n_scar }
    });
    PhantomSpec {
        nx: config.nx,
        ny: config.ny,
        nz: config.nz,
        spacing: config.spacing,
        center,
        inner_radius_mm: inner,
        outer_radius_mm: outer,
        apex_scale: config.apex_scale,
        scar,
        intensities: config.intensities,
        noise_sigma: config.noise_sigma,
        seed: derive_seed(seed, 1),
    }
}

/// Identifier of the `i`-th population member.
pub fn phantom_id(i: usize) -> String {
    format!("phantom_{i:03}")
}

/// `n` phantoms of which `round(n * pathological_fraction)` carry scar.
pub fn generate_population(
    n: usize,
    pathological_fraction: f64,
    seed: u64,
    config: &PopulationConfig,
) -> Result<Vec<SubjectRecord>> {
    if n < 1 {
        return Err(Error::InvalidArgument("population size must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&pathological_fraction) {
        return Err(Error::InvalidArgument(format!("pathological fraction {pathological_fraction} outside [0, 1]")));
    }
    let n_path = (n as f64 * pathological_fraction).round() as usize;
    let mut flags: Vec<bool> = (0..n).map(|i| i < n_path).collect();
    flags.shuffle(&mut rng_from_seed(seed));
    flags
        .par_iter()
        .enumerate()
        .map(|(i, &p)| generate_phantom(&phantom_id(i), &sample_spec(config, p, derive_seed(seed, i as u64))))
        .collect()
}
