//! Classical myocardium segmenter used in place of a trained network.

use log::debug;

use crate::error::Result;
use crate::grid::{Mask2, Slice2D};
use crate::qc::{connected_components, holes, Connectivity};
use crate::rng::derive_seed;
use crate::segment::em::{em_fit_counts, EmOptions};
use crate::segment::{MyoSegmenter, MyoStageInput};

/// Components smaller than this fraction of the slice are ignored.
const MIN_COMPONENT_FRACTION: f64 = 0.002;

/// Histogram resolution of the mixture fit.
pub const HISTOGRAM_BINS: usize = 256;

/// Number of seeded restarts used by [`EmMyocardiumSegmenter::with_seed`].
pub const DEFAULT_RESTARTS: u64 = 4;

/// Three-class EM intensity clustering followed by selection of the
/// annulus enclosing the slice centre.
#[derive(Clone, Debug)]
pub struct EmMyocardiumSegmenter {
    pub em: EmOptions,
}

impl Default for EmMyocardiumSegmenter {
    fn default() -> Self {
        Self::with_seed(0)
    }
}

/// Bins `values` into [`HISTOGRAM_BINS`] equal bins over `[lo, hi]`; each
/// occupied bin is represented by the mean of its members.
fn binned_sample(values: &[f64], lo: f64, hi: f64) -> (Vec<f64>, Vec<u64>) {
    let scale = HISTOGRAM_BINS as f64 / (hi - lo);
    let mut sums = vec![0.0; HISTOGRAM_BINS];
    let mut counts = vec![0u64; HISTOGRAM_BINS];
    for &v in values {
        let b = (((v - lo) * scale) as usize).min(HISTOGRAM_BINS - 1);
        sums[b] += v;
        counts[b] += 1;
    }
    sums.iter().zip(&counts).filter(|(_, &c)| c > 0).map(|(&s, &c)| (s / c as f64, c)).unzip()
}

struct Candidate {
    component: Mask2,
    hole_area: usize,
    contains_center: bool,
    center_distance: f64,
}

impl EmMyocardiumSegmenter {
    pub fn new(em: EmOptions) -> Self {
        Self { em }
    }

    /// Quantile initialisation plus [`DEFAULT_RESTARTS`] restarts derived from `seed`.
    pub fn with_seed(seed: u64) -> Self {
        let restarts = (0..DEFAULT_RESTARTS).map(|i| derive_seed(seed, i)).collect();
        Self { em: EmOptions { restarts, ..EmOptions::default() } }
    }

    pub fn segment_slice(&self, slice: &Slice2D) -> Result<Mask2> {
        let (w, h) = (slice.width(), slice.height());
        let empty = Mask2::filled(w, h, false);
        let values = slice.as_slice();
        let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if hi <= lo {
            return Ok(empty);
        }
        let k = 3.min(values.len());
        let (reps, counts) = binned_sample(values, lo, hi);
        let fit = em_fit_counts(&reps, &counts, k, &self.em)?;
        let classes: Vec<usize> = values.iter().map(|&v| fit.mixture.classify(v)).collect();

        let (cx, cy) = (w / 2, h / 2);
        let min_size = ((w * h) as f64 * MIN_COMPONENT_FRACTION).ceil() as usize;
        let mut candidates = Vec::new();
        for c in 0..k {
            let cluster = Mask2::from_vec(w, h, classes.iter().map(|&l| l == c).collect())?;
            let cc = connected_components(&cluster, Connectivity::Eight);
            let border = cc.touching_border();
            for (i, &size) in cc.sizes.iter().enumerate() {
                let id = i as u32 + 1;
                if size < min_size || border[id as usize] {
                    continue;
                }
                let component = cc.component_mask(id);
                let enclosed = holes(&component);
                let area = enclosed.count();
                if area == 0 {
                    continue;
                }
                let (sx, sy) = enclosed.points().fold((0.0, 0.0), |(a, b), (x, y)| (a + x as f64, b + y as f64));
                let (hx, hy) = (sx / area as f64, sy / area as f64);
                candidates.push(Candidate {
                    component,
                    hole_area: area,
                    contains_center: enclosed.get(cx, cy),
                    center_distance: ((hx - cx as f64).powi(2) + (hy - cy as f64).powi(2)).sqrt(),
                });
            }
        }
        // innermost ring around the centre, else the ring closest to it
        let best = candidates.into_iter().min_by(|a, b| {
            let by_distance = a.center_distance.round().total_cmp(&b.center_distance.round());
            let by_area = a.hole_area.cmp(&b.hole_area);
            b.contains_center.cmp(&a.contains_center).then(if a.contains_center {
                by_area.then(by_distance)
            } else {
                by_distance.then(by_area)
            })
        });
        match best {
            Some(c) => Ok(c.component),
            None => {
                debug!("no annular component found");
                Ok(empty)
            }
        }
    }
}

impl MyoSegmenter for EmMyocardiumSegmenter {
    fn name(&self) -> &str {
        "em-annulus"
    }

    fn segment(&self, input: &MyoStageInput<'_>) -> Result<Mask2> {
        self.segment_slice(input.image)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn annulus(size: usize, r: f64, big_r: f64, levels: [f64; 3]) -> (Slice2D, Mask2) {
        let c = (size as f64 - 1.0) / 2.0;
        let d = |x: usize, y: usize| ((x as f64 - c).powi(2) + (y as f64 - c).powi(2)).sqrt();
        let img = Slice2D::from_fn(size, size, |x, y| {
            let d = d(x, y);
            if d < r {
                levels[1]
            } else if d < big_r {
                levels[2]
            } else {
                levels[0]
            }
        });
        let ring = Mask2::from_fn(size, size, |x, y| (r..big_r).contains(&d(x, y)));
        (img, ring)
    }

    #[test]
    fn noiseless_ring_is_exact() {
        let (img, ring) = annulus(64, 10.0, 18.0, [0.0, 0.3, 0.8]);
        assert_eq!(EmMyocardiumSegmenter::default().segment_slice(&img).unwrap(), ring);
    }

    #[test]
    fn blank_slice_is_empty() {
        let m = EmMyocardiumSegmenter::default().segment_slice(&Slice2D::filled(32, 32, 0.4)).unwrap();
        assert!(!m.any());
    }
}
