//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use scarquant_core::bbox::{apply_transform, encode_transform, proposal_box, BoundingBox, BoxTransform};
use scarquant_core::metrics::{
    bland_altman, classification_accuracy, dice, hausdorff_mm, pearson_r, wilcoxon_signed_rank, Alternative,
    PairedSeries,
};
use scarquant_core::nifti::{read_nifti, write_nifti, DataType, Endian};
use scarquant_core::phantom::{generate_population, PopulationConfig};
use scarquant_core::pipeline::{run_dataset, PipelineConfig, RegressorChoice, Variant, CLASS_MYOCARDIUM, CLASS_SCAR};
use scarquant_core::qc::{
    ensemble_revote, is_closed_myocardium, scar_ratio_filter, vote_candidate, vote_counts, VoteConfig, VoteRule,
    MIN_SCAR_RATIO,
};
use scarquant_core::rng::rng_from_seed;
use scarquant_core::segment::{em_fit, fwhm_threshold, nsd_threshold, otsu_from_histogram, EmOptions, OTSU_BINS};
use scarquant_core::synthesis::{
    augment_for_bbox, elastic_deform, emit_dataset, plan_requests, sample_bbox_aug, BboxAugSpec, ElasticSpec,
    LabelAugSpec, MorphOp, SynthParams,
};
use scarquant_core::{Dims, Grid2, Mask2, Mask3, Spacing, SubjectRecord};

// tolerances
const METRIC_TOL: f64 = 1e-9;
const EM_LL_TOL: f64 = 1e-9;
const EM_MEAN_TOL: f64 = 0.2;
const BOX_TOL: f64 = 1e-9;
const STATS_TOL: f64 = 1e-12;
const METRIC_RUNTIME_S: f64 = 60.0;
const SUITE_RUNTIME_S: f64 = 300.0;

// workloads
const METRIC_PAIRS: usize = 1000;
const METRIC_SIDE: usize = 12;
const OTSU_HISTOGRAMS: usize = 500;
const EM_RUNS: u64 = 100;
const BOX_PAIRS: usize = 10_000;
const AUG_SEEDS: u64 = 100;
const PHANTOMS: usize = 20;
const PHANTOM_SEED: u64 = 2024;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {{
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($arg)+));
        }
    }};
}

fn run(id: usize, name: &str, f: impl FnOnce() -> Check) -> bool {
    let t = Instant::now();
    let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    });
    let secs = t.elapsed().as_secs_f64();
    match &outcome {
        Ok(detail) => println!("PASS  {id:>2}  {name}: {detail} [{secs:.1}s]"),
        Err(detail) => println!("FAIL  {id:>2}  {name}: {detail} [{secs:.1}s]"),
    }
    outcome.is_ok()
}

// 1 ------------------------------------------------------------------------

fn brute_boundary(m: &Mask3) -> Vec<(usize, usize, usize)> {
    let d = m.dims();
    let inside = |x: isize, y: isize, z: isize| {
        x >= 0
            && y >= 0
            && z >= 0
            && (x as usize) < d.nx
            && (y as usize) < d.ny
            && (z as usize) < d.nz
            && m.get(x as usize, y as usize, z as usize)
    };
    let mut out = Vec::new();
    for z in 0..d.nz {
        for y in 0..d.ny {
            for x in 0..d.nx {
                if !m.get(x, y, z) {
                    continue;
                }
                let (xi, yi, zi) = (x as isize, y as isize, z as isize);
                let faces = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)];
                if faces.iter().any(|&(a, b, c)| !inside(xi + a, yi + b, zi + c)) {
                    out.push((x, y, z));
                }
            }
        }
    }
    out
}

fn brute_hausdorff(a: &Mask3, b: &Mask3, sp: Spacing) -> f64 {
    let (ba, bb) = (brute_boundary(a), brute_boundary(b));
    let dist = |p: (usize, usize, usize), q: (usize, usize, usize)| {
        let dx = (p.0 as f64 - q.0 as f64) * sp.dx;
        let dy = (p.1 as f64 - q.1 as f64) * sp.dy;
        let dz = (p.2 as f64 - q.2 as f64) * sp.dz;
        dx * dx + dy * dy + dz * dz
    };
    let directed = |from: &[(usize, usize, usize)], to: &[(usize, usize, usize)]| {
        from.iter().map(|&p| to.iter().map(|&q| dist(p, q)).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max)
    };
    directed(&ba, &bb).max(directed(&bb, &ba)).sqrt()
}

fn brute_dice(a: &Mask3, b: &Mask3) -> f64 {
    let (na, nb) = (a.count(), b.count());
    if na + nb == 0 {
        return 1.0;
    }
    let both = a.as_slice().iter().zip(b.as_slice()).filter(|(x, y)| **x && **y).count();
    2.0 * both as f64 / (na + nb) as f64
}

fn random_mask(rng: &mut impl Rng, side: usize) -> Mask3 {
    let dims = Dims::new(side, side, side);
    let data: Vec<bool> = if rng.random_bool(0.5) {
        let p = rng.random_range(0.05..0.9);
        (0..dims.len()).map(|_| rng.random_bool(p)).collect()
    } else {
        let c: [f64; 3] = [rng.random_range(2.0..10.0), rng.random_range(2.0..10.0), rng.random_range(2.0..10.0)];
        let r = rng.random_range(1.5..6.0);
        (0..dims.len())
            .map(|i| {
                let (x, y, z) = (i % side, (i / side) % side, i / (side * side));
                let d2 = (x as f64 - c[0]).powi(2) + (y as f64 - c[1]).powi(2) + (z as f64 - c[2]).powi(2);
                d2 <= r * r
            })
            .collect()
    };
    Mask3::from_vec(dims, data).unwrap()
}

fn metric_oracle() -> Check {
    let t = Instant::now();
    let mut rng = rng_from_seed(1);
    let sp = Spacing::new(1.25, 0.75, 2.5).unwrap();
    let mut worst_hd = 0.0f64;
    let mut evaluated = 0;
    while evaluated < METRIC_PAIRS {
        let a = random_mask(&mut rng, METRIC_SIDE);
        let b = random_mask(&mut rng, METRIC_SIDE);
        let d = dice(&a, &b).map_err(|e| e.to_string())?;
        ensure!(d == brute_dice(&a, &b), "dice {} != oracle {}", d, brute_dice(&a, &b));
        if a.count() == 0 || b.count() == 0 {
            continue;
        }
        let h = hausdorff_mm(&a, &b, sp).map_err(|e| e.to_string())?;
        let o = brute_hausdorff(&a, &b, sp);
        worst_hd = worst_hd.max((h - o).abs());
        ensure!((h - o).abs() <= METRIC_TOL, "hausdorff {} vs oracle {}", h, o);
        evaluated += 1;
    }
    let secs = t.elapsed().as_secs_f64();
    ensure!(secs < METRIC_RUNTIME_S, "took {:.1}s (limit {}s)", secs, METRIC_RUNTIME_S);
    Ok(format!("{METRIC_PAIRS} pairs of {METRIC_SIDE}^3 masks, dice exact, max |HD error| {worst_hd:.1e} mm"))
}

// 2 ------------------------------------------------------------------------

/// Exhaustive maximiser of w0 w1 (mu0 - mu1)^2, compared as exact fractions.
fn brute_otsu(counts: &[u64]) -> Option<usize> {
    let mut best: Option<(usize, i128, i128)> = None;
    for t in 0..counts.len() - 1 {
        let (mut n0, mut s0, mut n1, mut s1) = (0i128, 0i128, 0i128, 0i128);
        for (i, &c) in counts.iter().enumerate() {
            if i <= t {
                n0 += c as i128;
                s0 += i as i128 * c as i128;
            } else {
                n1 += c as i128;
                s1 += i as i128 * c as i128;
            }
        }
        if n0 == 0 || n1 == 0 {
            continue;
        }
        // n0 n1 (s0/n0 - s1/n1)^2 = (n1 s0 - n0 s1)^2 / (n0 n1)
        let num = (n1 * s0 - n0 * s1).pow(2);
        let den = n0 * n1;
        match best {
            Some((_, bn, bd)) if num * bd <= bn * den => {}
            _ => best = Some((t, num, den)),
        }
    }
    best.map(|b| b.0)
}

fn otsu_optimality() -> Check {
    let mut rng = rng_from_seed(2);
    let mut checked = 0;
    for _ in 0..OTSU_HISTOGRAMS {
        let mut counts = vec![0u64; OTSU_BINS];
        let modes = rng.random_range(1..4);
        for _ in 0..modes {
            let centre = rng.random_range(0..OTSU_BINS) as f64;
            let width = rng.random_range(1.0..40.0);
            let mass = rng.random_range(10..2000);
            for _ in 0..mass {
                let v = (centre + width * rng.random_range(-1.0..1.0)).round().clamp(0.0, 255.0) as usize;
                counts[v] += 1;
            }
        }
        if rng.random_bool(0.2) {
            for c in counts.iter_mut() {
                *c = rng.random_range(0..50);
            }
        }
        let oracle = brute_otsu(&counts);
        let got = otsu_from_histogram(&counts).ok();
        match oracle {
            Some(t) => {
                ensure!(got == Some(t), "histogram {}: got {:?}, oracle {}", checked, got, t);
            }
            None => ensure!(got.is_none() || counts.iter().filter(|&&c| c > 0).count() < 2, "expected degenerate"),
        }
        checked += 1;
    }
    Ok(format!("{checked} random histograms match the exhaustive maximiser"))
}

// 3 ------------------------------------------------------------------------

fn em_correctness() -> Check {
    for seed in 0..EM_RUNS {
        let mut rng = rng_from_seed(seed);
        let k = 1 + (seed % 3) as usize;
        let values: Vec<f64> = (0..300)
            .map(|_| {
                let c = rng.random_range(0..k) as f64;
                Normal::new(c * 4.0, 1.0 + c * 0.5).unwrap().sample(&mut rng)
            })
            .collect();
        let opts = EmOptions { restarts: vec![seed], ..EmOptions::default() };
        let fit = em_fit(&values, k, &opts).map_err(|e| e.to_string())?;
        for (i, w) in fit.log_likelihood.windows(2).enumerate() {
            ensure!(w[1] >= w[0] - EM_LL_TOL, "run {}: LL fell at iteration {}: {} -> {}", seed, i + 1, w[0], w[1]);
        }
    }
    let mut rng = rng_from_seed(3);
    let low = Normal::new(0.0, 1.0).unwrap();
    let high = Normal::new(10.0, 1.0).unwrap();
    let a: Vec<f64> = (0..500).map(|_| low.sample(&mut rng)).collect();
    let b: Vec<f64> = (0..500).map(|_| high.sample(&mut rng)).collect();
    let values: Vec<f64> = a.iter().chain(&b).copied().collect();
    let fit = em_fit(&values, 2, &EmOptions::default()).map_err(|e| e.to_string())?;
    let means: Vec<f64> = fit.mixture.components().iter().map(|c| c.mean).collect();
    let sample_means = [a.iter().sum::<f64>() / 500.0, b.iter().sum::<f64>() / 500.0];
    for (i, truth) in [0.0, 10.0].into_iter().enumerate() {
        ensure!((means[i] - truth).abs() <= EM_MEAN_TOL, "mean {} = {} vs truth {}", i, means[i], truth);
        ensure!(
            (means[i] - sample_means[i]).abs() <= EM_MEAN_TOL,
            "mean {} = {} vs sample {}",
            i,
            means[i],
            sample_means[i]
        );
    }
    Ok(format!("{EM_RUNS} traces monotone; recovered means {:.3}, {:.3}", means[0], means[1]))
}

// 4 ------------------------------------------------------------------------

fn threshold_analytics() -> Check {
    // remote region of 50 exactly representable values: mean 1.0, population sd 0.1
    let mut values = vec![1.0; 48];
    values.extend([0.5, 1.5, 1.4, 1.6]);
    let myo = vec![true; values.len()];
    let remote: Vec<bool> = (0..values.len()).map(|i| i < 50).collect();
    let nsd = nsd_threshold(&values, &myo, &remote, 5.0).map_err(|e| e.to_string())?;
    ensure!(nsd.threshold == 1.5, "nSD threshold {:.17}", nsd.threshold);
    ensure!(!nsd.mask[50] && nsd.mask[51], "nSD mask {:?}", nsd.mask);

    let values = [2.0, 0.9, 1.1, 1.0];
    let seed = [true, false, false, false];
    let fwhm = fwhm_threshold(&values, &[true; 4], &seed).map_err(|e| e.to_string())?;
    ensure!(fwhm.threshold == 1.0, "FWHM threshold {:.17}", fwhm.threshold);
    ensure!(!fwhm.mask[1] && fwhm.mask[2], "FWHM mask {:?}", fwhm.mask);
    Ok(format!("nSD threshold {}, FWHM threshold {}", nsd.threshold, fwhm.threshold))
}

// 5 ------------------------------------------------------------------------

fn geometry() -> Check {
    let mut rng = rng_from_seed(5);
    let mut worst = 0.0f64;
    for _ in 0..BOX_PAIRS {
        let mut b = || BoundingBox {
            cx: rng.random_range(-50.0..300.0),
            cy: rng.random_range(-50.0..300.0),
            w: rng.random_range(0.5..300.0),
            h: rng.random_range(0.5..300.0),
        };
        let (p, t) = (b(), b());
        let back = apply_transform(&p, &encode_transform(&p, &t));
        let err = [(back.cx, t.cx), (back.cy, t.cy), (back.w, t.w), (back.h, t.h)]
            .iter()
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst = worst.max(err);
        ensure!(err <= BOX_TOL, "roundtrip error {} for {:?} -> {:?}", err, p, t);
    }
    let p = proposal_box(256, 256);
    let id = encode_transform(&p, &p);
    ensure!(id == BoxTransform { dx: 0.0, dy: 0.0, sx: 1.0, sy: 1.0 }, "identity encodes to {:?}", id);
    Ok(format!("{BOX_PAIRS} pairs, max error {worst:.1e}; identity -> (0,0,1,1)"))
}

// 6 ------------------------------------------------------------------------

fn nifti_parser() -> Check {
    let mut rng = rng_from_seed(6);
    let sp = Spacing::new(1.25, 0.75, 8.0).unwrap();
    let dims = Dims::new(7, 5, 3);
    for dt in [DataType::Uint8, DataType::Int16, DataType::Float32] {
        let values: Vec<f64> = (0..dims.len())
            .map(|_| match dt {
                DataType::Uint8 => rng.random_range(0..=255) as f64,
                DataType::Int16 => rng.random_range(i16::MIN..=i16::MAX) as f64,
                DataType::Float32 => f64::from(rng.random_range(-1e4f32..1e4)),
            })
            .collect();
        let le = write_nifti(dims, sp, &values, dt, Endian::Little).map_err(|e| e.to_string())?;
        let be = write_nifti(dims, sp, &values, dt, Endian::Big).map_err(|e| e.to_string())?;
        let a = read_nifti(&le).map_err(|e| e.to_string())?;
        let b = read_nifti(&be).map_err(|e| e.to_string())?;
        ensure!(a.header.dims == dims, "{:?}: dims {:?}", dt, a.header.dims);
        let pix = [f64::from(a.header.pixdim[0]), f64::from(a.header.pixdim[1]), f64::from(a.header.pixdim[2])];
        ensure!(pix == [sp.dx, sp.dy, sp.dz], "{:?}: spacing {:?}", dt, pix);
        ensure!(a.data == values, "{:?}: data differs after round trip", dt);
        let again = write_nifti(a.header.dims, sp, &a.data, dt, Endian::Little).map_err(|e| e.to_string())?;
        ensure!(again == le, "{:?}: re-serialisation is not byte-identical", dt);
        ensure!(b.data == a.data && b.header.dims == a.header.dims, "{:?}: big-endian decode differs", dt);
        ensure!(le[..4] == 348i32.to_le_bytes() && be[..4] == 348i32.to_be_bytes(), "{:?}: sizeof_hdr", dt);
    }
    Ok("codes 2/4/16 round-trip, byte-identical rewrite, endian cross-check".into())
}

// 7 ------------------------------------------------------------------------

fn disk_mask(size: usize, c: f64, r_in: f64, r_out: f64) -> Mask2 {
    Grid2::from_fn(size, size, |x, y| {
        let d = ((x as f64 - c).powi(2) + (y as f64 - c).powi(2)).sqrt();
        d >= r_in && d <= r_out
    })
}

fn cut_top(m: &Mask2) -> Mask2 {
    let mut out = m.clone();
    for y in 0..m.height() / 2 {
        for x in m.width() / 2 - 1..m.width() / 2 + 2 {
            out.set(x, y, false);
        }
    }
    out
}

fn qc_topology() -> Check {
    let ring = disk_mask(32, 16.0, 6.0, 9.0);
    let open = cut_top(&ring);
    let solid = disk_mask(32, 16.0, 0.0, 9.0);
    let fixtures = [("closed ring", &ring, true), ("open arc", &open, false), ("solid disk", &solid, false)];
    for (name, m, expected) in fixtures {
        ensure!(is_closed_myocardium(m) == expected, "{} classified {}", name, !expected);
    }

    let v = ensemble_revote(&vec![ring.clone(); 10], &ring, VoteConfig::default()).map_err(|e| e.to_string())?;
    ensure!(v.k == Some(1) && v.mask == ring, "unanimous closed: k = {:?}", v.k);

    let v = ensemble_revote(&vec![open.clone(); 10], &open, VoteConfig::default()).map_err(|e| e.to_string())?;
    ensure!(v.fell_back && v.k.is_none() && v.mask == open, "no closing k: fell_back = {}", v.fell_back);

    let mut preds = vec![ring.clone(); 10];
    for p in &mut preds[..2] {
        for x in 0..3 {
            for y in 14..18 {
                p.set(x, y, true);
            }
        }
    }
    for p in &mut preds[2..4] {
        *p = cut_top(p);
    }
    let counts = vote_counts(&preds).map_err(|e| e.to_string())?;
    let oracle_k = (1..=10).find(|&k| is_closed_myocardium(&vote_candidate(&counts, k, VoteRule::AtLeast)));
    ensure!(oracle_k == Some(3), "fixture oracle gives k = {:?}", oracle_k);
    let v = ensemble_revote(&preds, &preds[0], VoteConfig::default()).map_err(|e| e.to_string())?;
    ensure!(v.k == Some(3) && v.closed && !v.fell_back, "leak fixture: k = {:?}", v.k);

    // wall of 1000 px; components of 50 (5%), 20 (2%), 30 (exactly 3%)
    let myo = Mask2::filled(50, 20, true);
    let mut scar = Mask2::filled(50, 20, false);
    for x in 0..50 {
        scar.set(x, 0, true);
    }
    for x in 0..20 {
        scar.set(x, 5, true);
    }
    for x in 0..30 {
        scar.set(x, 10, true);
    }
    let kept = scar_ratio_filter(&scar, &myo, MIN_SCAR_RATIO).map_err(|e| e.to_string())?;
    ensure!(
        kept.count() == 80 && kept.get(0, 0) && !kept.get(0, 5) && kept.get(0, 10),
        "ratio filter kept {}",
        kept.count()
    );
    Ok("3/3 topology fixtures; revote k=1, fallback, k=3; ratio filter removes only the 2% component".into())
}

// 8 ------------------------------------------------------------------------

fn in_range(v: f64, neutral: f64, lo: f64, hi: f64) -> bool {
    v == neutral || (lo..=hi).contains(&v)
}

fn augmentation() -> Check {
    let spec = BboxAugSpec::default();
    for seed in 0..AUG_SEEDS {
        let p = sample_bbox_aug(&spec, seed).map_err(|e| e.to_string())?;
        ensure!(in_range(p.rotation_deg, 0.0, -90.0, 90.0), "seed {}: rotation {}", seed, p.rotation_deg);
        ensure!(in_range(p.shear_deg, 0.0, -20.0, 20.0), "seed {}: shear {}", seed, p.shear_deg);
        ensure!(in_range(p.scale, 1.0, 0.5, 1.5), "seed {}: scale {}", seed, p.scale);
        for t in [p.tx_frac, p.ty_frac] {
            ensure!(in_range(t.abs(), 0.0, 0.14, 0.21), "seed {}: translation {}", seed, t);
        }
        ensure!(p.blur_sigma == 0.0 || p.blur_sigma == 1.5, "seed {}: blur {}", seed, p.blur_sigma);
        ensure!(p.noise.is_none() || p.noise == Some((0.1, 0.1)), "seed {}: noise {:?}", seed, p.noise);

        let l = LabelAugSpec::sample(seed);
        ensure!(
            l.rotation_deg % 60 == 0 && (0..360).contains(&l.rotation_deg),
            "seed {}: label rotation {}",
            seed,
            l.rotation_deg
        );
        ensure!(matches!(l.morph, MorphOp::None | MorphOp::Dilate | MorphOp::Open), "seed {}: morph", seed);
    }

    let subjects = generate_population(4, 0.5, 8, &PopulationConfig { nz: 3, ..PopulationConfig::default() })
        .map_err(|e| e.to_string())?;
    let labels = subjects[0].labels.as_ref().unwrap().slice(1);
    let still =
        elastic_deform(&labels, &ElasticSpec { alpha: 0.0, ..ElasticSpec::with_seed(9) }).map_err(|e| e.to_string())?;
    ensure!(still == labels, "elastic deformation with alpha = 0 changed the labels");

    let image = subjects[0].image.slice(1);
    let gt = BoundingBox { cx: 64.0, cy: 64.0, w: 40.0, h: 40.0 };
    let x = augment_for_bbox(&image, &gt, &spec, 11).map_err(|e| e.to_string())?;
    let y = augment_for_bbox(&image, &gt, &spec, 11).map_err(|e| e.to_string())?;
    ensure!(x == y, "augment_for_bbox is not deterministic");

    let regenerated = generate_population(4, 0.5, 8, &PopulationConfig { nz: 3, ..PopulationConfig::default() })
        .map_err(|e| e.to_string())?;
    for (a, b) in subjects.iter().zip(&regenerated) {
        ensure!(a.image.data() == b.image.data(), "phantom {} not deterministic", a.id);
    }

    let requests = plan_requests(&subjects, 2, true, 12).map_err(|e| e.to_string())?;
    let dirs = [tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?];
    for d in &dirs {
        emit_dataset(&requests, &subjects, &SynthParams::default(), 13, d.path()).map_err(|e| e.to_string())?;
    }
    let files = dir_bytes(dirs[0].path())?;
    ensure!(files == dir_bytes(dirs[1].path())?, "synthetic datasets differ between reruns");
    Ok(format!("{AUG_SEEDS} seeds within support; alpha=0 identity; {} synthesis files byte-identical", files.len()))
}

fn dir_bytes(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .map(|e| {
            let p = e.map_err(|e| e.to_string())?.path();
            let bytes = std::fs::read(&p).map_err(|e| e.to_string())?;
            Ok((p.file_name().unwrap().to_string_lossy().into_owned(), bytes))
        })
        .collect::<Result<_, String>>()?;
    out.sort();
    Ok(out)
}

// 9 ------------------------------------------------------------------------

#[derive(serde::Deserialize)]
struct Baseline {
    myocardium_dsc: f64,
    scar_dsc: f64,
}

fn slice_means(subjects: &[SubjectRecord], config: &PipelineConfig) -> Result<(f64, f64), String> {
    let run = run_dataset(subjects, config).map_err(|e| e.to_string())?;
    if let Some(f) = run.subject_failures.first() {
        return Err(format!("{}: {}", f.subject_id, f.message));
    }
    let mean_of = |class: &str| {
        let v: Vec<f64> = run
            .reports
            .iter()
            .flat_map(|r| r.slice_rows.iter())
            .filter(|r| r.class == class)
            .filter_map(|r| r.dsc)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    Ok((mean_of(CLASS_MYOCARDIUM), mean_of(CLASS_SCAR)))
}

fn end_to_end() -> Check {
    let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/phantom_baseline.json"))
        .map_err(|e| e.to_string())?;
    let baseline: Baseline = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let subjects =
        generate_population(PHANTOMS, 0.5, PHANTOM_SEED, &PopulationConfig::default()).map_err(|e| e.to_string())?;

    let (om, os) = slice_means(&subjects, &PipelineConfig::oracle(Variant::A))?;
    ensure!(om == 1.0 && os == 1.0, "label-oracle variant (a): DSC {} / {}", om, os);

    let mut a = PipelineConfig::for_variant(Variant::A);
    a.regressor = RegressorChoice::Heuristic;
    let (am, as_) = slice_means(&subjects, &a)?;
    ensure!(
        am > baseline.myocardium_dsc,
        "variant (a) myocardium DSC {:.4} <= recorded {}",
        am,
        baseline.myocardium_dsc
    );
    ensure!(as_ > baseline.scar_dsc, "variant (a) scar DSC {:.4} <= recorded {}", as_, baseline.scar_dsc);

    let (dm, ds) = slice_means(&subjects, &PipelineConfig::for_variant(Variant::D))?;
    let (a_mean, d_mean) = ((am + as_) / 2.0, (dm + ds) / 2.0);
    ensure!(a_mean >= d_mean, "variant (a) mean DSC {:.4} < variant (d) {:.4}", a_mean, d_mean);
    Ok(format!(
        "oracle 1.0/1.0; (a) myo {am:.4} > {}, scar {as_:.4} > {}; (a) {a_mean:.4} >= (d) {d_mean:.4}",
        baseline.myocardium_dsc, baseline.scar_dsc
    ))
}

// 10 -----------------------------------------------------------------------

fn statistics() -> Check {
    let diffs = [0.3, 0.1, 0.5, 0.2, 0.4];
    // exact enumeration over the 2^5 sign patterns of ranks 1..5
    let w_obs: u32 = 15;
    let at_least =
        (0u32..32).filter(|mask| (0..5).filter(|i| mask & (1 << i) != 0).map(|i| i + 1).sum::<u32>() >= w_obs).count();
    let oracle = at_least as f64 / 32.0;
    let w = wilcoxon_signed_rank(&diffs, Alternative::Greater).map_err(|e| e.to_string())?;
    ensure!(w.p_value == oracle && oracle == 1.0 / 32.0, "one-sided p = {}, oracle {}", w.p_value, oracle);

    let manual = vec![10.0, 12.5, 7.25, 20.0, 15.5, 9.0, 11.0, 30.25];
    let auto = vec![11.0, 12.0, 8.0, 18.5, 16.25, 9.5, 10.0, 29.0];
    let s = PairedSeries::new(manual.clone(), auto.clone()).map_err(|e| e.to_string())?;
    let n = manual.len() as f64;
    let (mx, my) = (manual.iter().sum::<f64>() / n, auto.iter().sum::<f64>() / n);
    let cov: f64 = manual.iter().zip(&auto).map(|(x, y)| (x - mx) * (y - my)).sum();
    let vx: f64 = manual.iter().map(|x| (x - mx).powi(2)).sum();
    let vy: f64 = auto.iter().map(|y| (y - my).powi(2)).sum();
    let r_oracle = cov / (vx * vy).sqrt();
    let r = pearson_r(&s).map_err(|e| e.to_string())?;
    ensure!((r - r_oracle).abs() <= STATS_TOL, "pearson {} vs {}", r, r_oracle);

    let d: Vec<f64> = auto.iter().zip(&manual).map(|(a, m)| a - m).collect();
    let bias = d.iter().sum::<f64>() / n;
    let sd = (d.iter().map(|v| (v - bias).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let ba = bland_altman(&s);
    ensure!((ba.bias - bias).abs() <= STATS_TOL, "bias {} vs {}", ba.bias, bias);
    ensure!((ba.loa_low - (bias - 1.96 * sd)).abs() <= STATS_TOL, "lower LoA {}", ba.loa_low);
    ensure!((ba.loa_high - (bias + 1.96 * sd)).abs() <= STATS_TOL, "upper LoA {}", ba.loa_high);

    let gt = vec![true; 50];
    let pred: Vec<bool> = (0..50).map(|i| i >= 3).collect();
    let acc = classification_accuracy(&pred, &gt).map_err(|e| e.to_string())?;
    ensure!(acc == 94.0, "47/50 gives {}%", acc);
    Ok(format!("p = {} (1/32); pearson and Bland-Altman within {STATS_TOL:e}; 47/50 = {acc}%", w.p_value))
}

fn main() {
    let start = Instant::now();
    let mut ok = vec![
        run(1, "metric oracle equivalence", metric_oracle),
        run(2, "Otsu optimality", otsu_optimality),
        run(3, "EM correctness", em_correctness),
        run(4, "threshold analytics", threshold_analytics),
        run(5, "bounding-box geometry", geometry),
        run(6, "NIfTI parser", nifti_parser),
        run(7, "QC topology", qc_topology),
        run(8, "augmentation determinism and ranges", augmentation),
        run(9, "end-to-end phantom", end_to_end),
        run(10, "statistics", statistics),
    ];
    let total = start.elapsed().as_secs_f64();
    ok.push(run(11, "runtime budget", || {
        ensure!(total < SUITE_RUNTIME_S, "acceptance checks took {:.1}s (limit {}s)", total, SUITE_RUNTIME_S);
        Ok(format!("acceptance checks {total:.1}s < {SUITE_RUNTIME_S}s, offline, no external data"))
    }));
    let passed = ok.iter().filter(|&&b| b).count();
    println!("{passed}/{} acceptance criteria passed", ok.len());
    if passed != ok.len() {
        std::process::exit(1);
    }
}
