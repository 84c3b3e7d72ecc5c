//! Quality control: connected components, closed-myocardium detection with
//! ensemble re-voting, and the scar-to-myocardium ratio filter.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::bbox::BoundingBox;
use crate::error::{Error, Result};
use crate::grid::{Grid2, Mask2};
use crate::rng::rng_from_seed;

/// Pixel adjacency.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    fn backward_neighbors(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(-1, 0), (0, -1)],
            Connectivity::Eight => &[(-1, 0), (-1, -1), (0, -1), (1, -1)],
        }
    }
}

/// Component labelling of a binary mask.
#[derive(Clone, Debug, PartialEq)]
pub struct ComponentSet {
    /// Component id per pixel, 0 for background. Ids are dense `1..=N` in
    /// raster order of each component's first pixel.
    pub labels: Grid2<u32>,
    /// `sizes[i]` is the pixel count of component `i + 1`.
    pub sizes: Vec<usize>,
    pub connectivity: Connectivity,
}

impl ComponentSet {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    /// Mask of component `id` (1-based).
    pub fn component_mask(&self, id: u32) -> Mask2 {
        self.labels.map(|l| l == id)
    }

    /// Id of the largest component, lowest id on ties.
    pub fn largest(&self) -> Option<u32> {
        let mut best: Option<(usize, u32)> = None;
        for (i, &s) in self.sizes.iter().enumerate() {
            if best.is_none_or(|(bs, _)| s > bs) {
                best = Some((s, i as u32 + 1));
            }
        }
        best.map(|(_, id)| id)
    }

    /// Ids of components that touch the image border.
    pub fn touching_border(&self) -> Vec<bool> {
        let mut touches = vec![false; self.sizes.len() + 1];
        let (w, h) = (self.labels.width(), self.labels.height());
        for x in 0..w {
            touches[self.labels.get(x, 0) as usize] = true;
            touches[self.labels.get(x, h - 1) as usize] = true;
        }
        for y in 0..h {
            touches[self.labels.get(0, y) as usize] = true;
            touches[self.labels.get(w - 1, y) as usize] = true;
        }
        touches
    }
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        parent[x as usize] = parent[parent[x as usize] as usize];
        x = parent[x as usize];
    }
    x
}

fn union(parent: &mut [u32], a: u32, b: u32) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        // keep the smaller provisional label as root
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi as usize] = lo;
    }
}

/// Two-pass union-find labelling.
pub fn connected_components(mask: &Mask2, connectivity: Connectivity) -> ComponentSet {
    let (w, h) = (mask.width(), mask.height());
    let mut provisional = Grid2::filled(w, h, 0u32);
    let mut parent: Vec<u32> = vec![0];

    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let mut label = 0u32;
            for &(dx, dy) in connectivity.backward_neighbors() {
                if let Some(l) = provisional.get_signed(x as isize + dx, y as isize + dy) {
                    if l == 0 {
                        continue;
                    }
                    if label == 0 {
                        label = l;
                    } else if l != label {
                        union(&mut parent, label, l);
                    }
                }
            }
            if label == 0 {
                label = parent.len() as u32;
                parent.push(label);
            }
            provisional.set(x, y, label);
        }
    }

    // Dense ids in raster order of first pixel. Roots are minimal provisional
    // labels, and provisional labels are issued in raster order.
    let mut dense = vec![0u32; parent.len()];
    let mut sizes = Vec::new();
    let mut labels = Grid2::filled(w, h, 0u32);
    for y in 0..h {
        for x in 0..w {
            let l = provisional.get(x, y);
            if l == 0 {
                continue;
            }
            let root = find(&mut parent, l) as usize;
            if dense[root] == 0 {
                sizes.push(0);
                dense[root] = sizes.len() as u32;
            }
            let id = dense[root];
            sizes[id as usize - 1] += 1;
            labels.set(x, y, id);
        }
    }
    ComponentSet { labels, sizes, connectivity }
}

/// Complement components that do not touch the border (holes).
pub(crate) fn holes(mask: &Mask2) -> Mask2 {
    let complement = mask.map(|b| !b);
    let cc = connected_components(&complement, Connectivity::Four);
    let border = cc.touching_border();
    cc.labels.map(|l| l != 0 && !border[l as usize])
}

/// A myocardium is closed when it is one 8-connected piece that encloses a
/// 4-connected background region not touching the image border.
pub fn is_closed_myocardium(mask: &Mask2) -> bool {
    if !mask.any() {
        return false;
    }
    if connected_components(mask, Connectivity::Eight).count() != 1 {
        return false;
    }
    holes(mask).any()
}

/// Region enclosed by a closed myocardium (the cavity).
pub fn interior_of(mask: &Mask2) -> Result<Mask2> {
    if !is_closed_myocardium(mask) {
        return Err(Error::Degenerate("myocardium is not closed; no interior".into()));
    }
    Ok(holes(mask))
}

/// `mask` with every enclosed hole filled.
pub fn fill_holes(mask: &Mask2) -> Mask2 {
    mask.or(&holes(mask))
}

/// Range of the per-axis jitter, as a fraction of the box side.
pub const JITTER_RANGE: (f64, f64) = (0.14, 0.21);

/// `count` copies of `bbox` translated by `±U(0.14, 0.21)` of its side per axis.
pub fn jitter_boxes(bbox: &BoundingBox, count: usize, seed: u64) -> Result<Vec<BoundingBox>> {
    if count == 0 {
        return Err(Error::InvalidArgument("jitter count must be at least 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let ux = rng.random_range(JITTER_RANGE.0..=JITTER_RANGE.1) * if rng.random::<bool>() { 1.0 } else { -1.0 };
        let uy = rng.random_range(JITTER_RANGE.0..=JITTER_RANGE.1) * if rng.random::<bool>() { 1.0 } else { -1.0 };
        out.push(BoundingBox { cx: bbox.cx + ux * bbox.w, cy: bbox.cy + uy * bbox.h, ..*bbox });
    }
    Ok(out)
}

/// How a vote threshold `k` selects pixels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum VoteRule {
    /// `count >= k`
    #[default]
    AtLeast,
    /// `count > k`
    Exceeds,
}

/// Order in which thresholds are tried.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum VoteSearch {
    #[default]
    SmallestK,
    LargestK,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteConfig {
    pub rule: VoteRule,
    pub search: VoteSearch,
}

/// Outcome of [`ensemble_revote`].
#[derive(Clone, Debug, PartialEq)]
pub struct VoteResult {
    pub mask: Mask2,
    /// Threshold that produced `mask`; `None` on fallback.
    pub k: Option<usize>,
    pub closed: bool,
    pub fell_back: bool,
}

/// Per-pixel vote count over `predictions`.
pub fn vote_counts(predictions: &[Mask2]) -> Result<Grid2<u32>> {
    let first = predictions.first().ok_or_else(|| Error::InvalidArgument("no predictions".into()))?;
    let mut counts = Grid2::filled(first.width(), first.height(), 0u32);
    for p in predictions {
        first.ensure_same_shape(p, "ensemble predictions")?;
        for (c, &b) in counts.as_mut_slice().iter_mut().zip(p.as_slice()) {
            *c += u32::from(b);
        }
    }
    Ok(counts)
}

/// Candidate mask for threshold `k`.
pub fn vote_candidate(counts: &Grid2<u32>, k: usize, rule: VoteRule) -> Mask2 {
    let k = k as u32;
    match rule {
        VoteRule::AtLeast => counts.map(|c| c >= k),
        VoteRule::Exceeds => counts.map(|c| c > k),
    }
}

/// Thresholds the summed predictions at the first `k` (in `config.search`
/// order over `1..=n`) that yields a closed myocardium; falls back to
/// `original` when none does.
pub fn ensemble_revote(predictions: &[Mask2], original: &Mask2, config: VoteConfig) -> Result<VoteResult> {
    if predictions.len() < 2 {
        return Err(Error::InvalidArgument(format!("re-vote needs at least 2 predictions, got {}", predictions.len())));
    }
    let counts = vote_counts(predictions)?;
    original.ensure_same_shape(&counts, "original prediction")?;
    let n = predictions.len();
    let ks: Vec<usize> = match config.search {
        VoteSearch::SmallestK => (1..=n).collect(),
        VoteSearch::LargestK => (1..=n).rev().collect(),
    };
    for k in ks {
        let candidate = vote_candidate(&counts, k, config.rule);
        if is_closed_myocardium(&candidate) {
            return Ok(VoteResult { mask: candidate, k: Some(k), closed: true, fell_back: false });
        }
    }
    Ok(VoteResult { mask: original.clone(), k: None, closed: is_closed_myocardium(original), fell_back: true })
}

/// Default minimum scar-to-myocardium ratio.
pub const MIN_SCAR_RATIO: f64 = 0.03;

/// Drops every 8-connected scar component smaller than `min_ratio` of the
/// wall (myocardium including scar).
pub fn scar_ratio_filter(scar: &Mask2, myo: &Mask2, min_ratio: f64) -> Result<Mask2> {
    scar.ensure_same_shape(myo, "scar_ratio_filter")?;
    let wall = myo.or(scar).count();
    if !myo.any() || wall == 0 {
        return Err(Error::Degenerate("empty myocardium".into()));
    }
    let cc = connected_components(scar, Connectivity::Eight);
    let keep: Vec<bool> =
        std::iter::once(false).chain(cc.sizes.iter().map(|&s| s as f64 / wall as f64 >= min_ratio)).collect();
    Ok(cc.labels.map(|l| keep[l as usize]))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn ring(size: usize, cx: f64, cy: f64, r_in: f64, r_out: f64) -> Mask2 {
        Mask2::from_fn(size, size, |x, y| {
            let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
            d >= r_in && d < r_out
        })
    }

    fn parse(rows: &[&str]) -> Mask2 {
        let h = rows.len();
        let w = rows[0].len();
        Mask2::from_fn(w, h, |x, y| rows[y].as_bytes()[x] == b'#')
    }

    #[test]
    fn diagonal_pixels() {
        let m = parse(&["#.", ".#"]);
        assert_eq!(connected_components(&m, Connectivity::Four).count(), 2);
        assert_eq!(connected_components(&m, Connectivity::Eight).count(), 1);
        assert_eq!(connected_components(&Mask2::filled(5, 5, false), Connectivity::Eight).count(), 0);
    }

    #[test]
    fn ids_follow_raster_order() {
        let m = parse(&["..#.#", "#....", "#.###"]);
        let cc = connected_components(&m, Connectivity::Four);
        assert_eq!(cc.count(), 4);
        assert_eq!(cc.labels.get(2, 0), 1);
        assert_eq!(cc.labels.get(4, 0), 2);
        assert_eq!(cc.labels.get(0, 1), 3);
        assert_eq!(cc.labels.get(2, 2), 4);
        assert_eq!(cc.sizes, vec![1, 1, 2, 3]);
        assert_eq!(cc.largest(), Some(4));
    }

    #[test]
    fn u_shape_merges() {
        let m = parse(&["#.#", "#.#", "###"]);
        let cc = connected_components(&m, Connectivity::Four);
        assert_eq!(cc.count(), 1);
        assert_eq!(cc.sizes, vec![7]);
    }

    #[test]
    fn closed_open_solid() {
        let closed = parse(&[".....", ".###.", ".#.#.", ".###.", "....."]);
        assert!(is_closed_myocardium(&closed));
        let open = parse(&[".....", ".#.#.", ".#.#.", ".###.", "....."]);
        assert!(!is_closed_myocardium(&open));
        let solid = parse(&[".....", ".###.", ".###.", ".###.", "....."]);
        assert!(!is_closed_myocardium(&solid));
        assert!(!is_closed_myocardium(&Mask2::filled(5, 5, false)));
        // a diagonal 1-px ring is 8-connected and still seals its interior
        let diamond = parse(&["..#..", ".#.#.", "#...#", ".#.#.", "..#.."]);
        assert!(is_closed_myocardium(&diamond));
    }

    #[test]
    fn line_across_image_is_not_closed() {
        let m = parse(&["..#..", "..#..", "..#.."]);
        assert!(!is_closed_myocardium(&m));
    }

    #[test]
    fn interior_of_ring() {
        let closed = parse(&[".....", ".###.", ".#.#.", ".###.", "....."]);
        let hole = interior_of(&closed).unwrap();
        assert_eq!(hole.points().collect::<Vec<_>>(), vec![(2, 2)]);
        let open = parse(&[".....", ".#.#.", ".#.#.", ".###.", "....."]);
        assert!(interior_of(&open).is_err());
        assert_eq!(fill_holes(&closed).count(), 9);
    }

    #[test]
    fn ring_hole_area_close_to_disk_area() {
        let r = 15.0;
        let m = ring(64, 32.0, 32.0, r, r + 4.0);
        let hole = interior_of(&m).unwrap();
        // the hole is exactly the pixels with d < r; count them directly
        let direct = (0..64)
            .flat_map(|y| (0..64).map(move |x| (x, y)))
            .filter(|&(x, y)| ((x as f64 - 32.0).powi(2) + (y as f64 - 32.0).powi(2)).sqrt() < r)
            .count();
        assert_eq!(hole.count(), direct);
        let area = std::f64::consts::PI * r * r;
        assert!((hole.count() as f64 - area).abs() < 2.0 * std::f64::consts::PI * r);
    }

    #[test]
    fn jitter_is_deterministic_and_in_range() {
        let b = BoundingBox { cx: 128.0, cy: 120.0, w: 100.0, h: 80.0 };
        let a1 = jitter_boxes(&b, 10, 42).unwrap();
        let a2 = jitter_boxes(&b, 10, 42).unwrap();
        assert_eq!(a1, a2);
        for j in &a1 {
            let ux = ((j.cx - b.cx) / b.w).abs();
            let uy = ((j.cy - b.cy) / b.h).abs();
            assert!((0.14 - 1e-12..=0.21 + 1e-12).contains(&ux));
            assert!((0.14 - 1e-12..=0.21 + 1e-12).contains(&uy));
            assert_eq!((j.w, j.h), (b.w, b.h));
        }
        assert!(jitter_boxes(&b, 0, 1).is_err());
    }

    #[test]
    fn jitter_boxes_are_distinct() {
        let b = BoundingBox { cx: 50.0, cy: 50.0, w: 40.0, h: 40.0 };
        for seed in 0..100 {
            let boxes = jitter_boxes(&b, 10, seed).unwrap();
            for i in 0..boxes.len() {
                for j in i + 1..boxes.len() {
                    assert_ne!(boxes[i], boxes[j], "seed {seed}");
                }
            }
        }
    }

    #[test]
    fn unanimous_closed_votes_k1() {
        let r = ring(32, 16.0, 16.0, 6.0, 9.0);
        let preds = vec![r.clone(); 10];
        let v = ensemble_revote(&preds, &r, VoteConfig::default()).unwrap();
        assert_eq!(v.k, Some(1));
        assert_eq!(v.mask, r);
        assert!(v.closed && !v.fell_back);
    }

    #[test]
    fn open_arcs_fall_back() {
        let mut arc = ring(32, 16.0, 16.0, 6.0, 9.0);
        for y in 0..32 {
            for x in 15..18 {
                if y < 16 {
                    arc.set(x, y, false);
                }
            }
        }
        assert!(!is_closed_myocardium(&arc));
        let original = arc.clone();
        let v = ensemble_revote(&vec![arc; 10], &original, VoteConfig::default()).unwrap();
        assert!(v.fell_back);
        assert_eq!(v.k, None);
        assert_eq!(v.mask, original);
        assert!(ensemble_revote(std::slice::from_ref(&original), &original, VoteConfig::default()).is_err());
    }

    #[test]
    fn revote_selects_k3_on_leak_fixture() {
        let r = ring(32, 16.0, 16.0, 6.0, 9.0);
        let mut preds = vec![r.clone(); 10];
        // two voters leak a border-touching strip, two more leave a gap
        for p in &mut preds[..2] {
            for x in 0..3 {
                for y in 14..18 {
                    p.set(x, y, true);
                }
            }
        }
        for p in &mut preds[2..4] {
            for y in 0..32 {
                for x in 15..18 {
                    if y < 16 {
                        p.set(x, y, false);
                    }
                }
            }
        }
        let counts = vote_counts(&preds).unwrap();
        let closed: Vec<bool> =
            (1..=10).map(|k| is_closed_myocardium(&vote_candidate(&counts, k, VoteRule::AtLeast))).collect();
        assert_eq!(&closed[..3], &[false, false, true]);
        let original = preds[0].clone();
        let v = ensemble_revote(&preds, &original, VoteConfig::default()).unwrap();
        assert_eq!(v.k, Some(3));
        assert_eq!(v.mask, r);
        assert!(v.closed && !v.fell_back);
    }

    #[test]
    fn ratio_filter_arithmetic() {
        // wall of 1000 pixels in a 50x20 strip; scar components of 50 and 10
        let myo = Mask2::filled(50, 20, true);
        let mut scar = Mask2::filled(50, 20, false);
        for x in 0..50 {
            scar.set(x, 0, true);
        }
        for x in 0..10 {
            scar.set(x, 10, true);
        }
        let out = scar_ratio_filter(&scar, &myo, MIN_SCAR_RATIO).unwrap();
        assert_eq!(out.count(), 50);
        assert!(out.get(0, 0) && !out.get(0, 10));

        let mut two_pct = Mask2::filled(50, 20, false);
        for x in 0..20 {
            two_pct.set(x, 5, true);
        }
        assert_eq!(scar_ratio_filter(&two_pct, &myo, MIN_SCAR_RATIO).unwrap().count(), 0);

        let mut exact = Mask2::filled(50, 20, false);
        for x in 0..30 {
            exact.set(x, 5, true);
        }
        assert_eq!(scar_ratio_filter(&exact, &myo, MIN_SCAR_RATIO).unwrap().count(), 30);

        assert!(scar_ratio_filter(&exact, &Mask2::filled(50, 20, false), MIN_SCAR_RATIO).is_err());
    }
}
