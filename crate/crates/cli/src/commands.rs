use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use log::{info, warn};
use serde::Serialize;

use scarquant_core::metrics::{bland_altman, pearson_r, PairedSeries};
use scarquant_core::nifti::{read_labels, write_labels, DataType, SliceOrder};
use scarquant_core::phantom::{generate_population, PopulationConfig};
use scarquant_core::pipeline::{
    collect_rows, format_mean_sd, load_dataset, mean_sd, parse_kv, read_rows_csv, reports_json, run_ablation,
    run_dataset, save_subject, scan_dataset_dir, subject_metrics, train_test_split, write_dataset_manifest,
    write_rows_csv, MetricRow, PipelineConfig, Variant, CLASS_MYOCARDIUM, CLASS_SCAR, SLICE_ALL, SUBJECTS_FILE,
};
use scarquant_core::qc::{connected_components, is_closed_myocardium, scar_ratio_filter, Connectivity};
use scarquant_core::synthesis::{emit_dataset, plan_requests, SynthParams};
use scarquant_core::volume::slice_mask;
use scarquant_core::{Class, LabelMap};

use crate::plot::{bland_altman_svg, scatter_svg};
use crate::{AblateArgs, IngestArgs, MetricsArgs, PhantomArgs, QcArgs, ReportArgs, SegmentArgs, SynthArgs};

pub enum Outcome {
    Complete,
    Partial,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Input,
    Config,
}

impl Kind {
    pub fn code(self) -> u8 {
        match self {
            Kind::Input => 1,
            Kind::Config => 2,
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub kind: Kind,
    pub error: anyhow::Error,
}

impl From<scarquant_core::Error> for Failure {
    fn from(e: scarquant_core::Error) -> Self {
        let kind = if matches!(e, scarquant_core::Error::Config(_)) { Kind::Config } else { Kind::Input };
        Self { kind, error: e.into() }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let kind = match error.downcast_ref::<scarquant_core::Error>() {
            Some(scarquant_core::Error::Config(_)) => Kind::Config,
            _ => Kind::Input,
        };
        Self { kind, error }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self { kind: Kind::Input, error: e.into() }
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Self { kind: Kind::Input, error: e.into() }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Self { kind: Kind::Input, error: e.into() }
    }
}

fn config_error(msg: impl Into<String>) -> Failure {
    Failure { kind: Kind::Config, error: anyhow!(msg.into()) }
}

fn input_error(msg: impl Into<String>) -> Failure {
    Failure { kind: Kind::Input, error: anyhow!(msg.into()) }
}

type CmdResult = Result<Outcome, Failure>;

fn outcome(partial: bool) -> Outcome {
    if partial {
        Outcome::Partial
    } else {
        Outcome::Complete
    }
}

fn slice_order(s: &str) -> Result<SliceOrder, Failure> {
    Ok(s.parse()?)
}

fn require_dir(dir: &Path) -> Result<(), Failure> {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(input_error(format!("{} is not a directory", dir.display())))
    }
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), Failure> {
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_sink(out: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match out {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout().lock()),
    })
}

/// `(id, path)` of every file in `dir` ending in `suffix`, sorted by id.
fn files_with_suffix(dir: &Path, suffix: &str) -> Result<Vec<(String, PathBuf)>, Failure> {
    require_dir(dir)?;
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        if let Some(id) = name.strip_suffix(suffix) {
            if !id.is_empty() && path.is_file() {
                out.push((id.to_string(), path.clone()));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn load_labels(path: &Path) -> Result<LabelMap, Failure> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(read_labels(&bytes, SliceOrder::AsStored).with_context(|| format!("decoding {}", path.display()))?)
}

pub fn ingest(a: IngestArgs) -> CmdResult {
    require_dir(&a.data)?;
    let entries = scan_dataset_dir(&a.data, slice_order(&a.slice_order)?)?;
    if entries.is_empty() {
        return Err(input_error(format!("no *_image.nii files in {}", a.data.display())));
    }
    let out = a.out.unwrap_or_else(|| a.data.join(SUBJECTS_FILE));
    write_dataset_manifest(&out, &entries)?;
    let labelled = entries.iter().filter(|e| e.label_path.is_some()).count();
    println!("{} subjects ({labelled} labelled) -> {}", entries.len(), out.display());
    if let Some(t) = a.test_fraction {
        if !(0.0..=1.0).contains(&t) {
            return Err(config_error(format!("test fraction {t} outside [0, 1]")));
        }
        let ids: Vec<String> = entries.iter().map(|e| e.subject_id.clone()).collect();
        let (train, test) = train_test_split(&ids, 1.0 - t, a.seed)?;
        #[derive(Serialize)]
        struct SplitRow<'a> {
            subject_id: &'a str,
            set: &'a str,
        }
        let mut rows: Vec<SplitRow> = train.iter().map(|id| SplitRow { subject_id: id, set: "train" }).collect();
        rows.extend(test.iter().map(|id| SplitRow { subject_id: id, set: "test" }));
        rows.sort_by(|x, y| x.subject_id.cmp(y.subject_id));
        let split = out.with_file_name("split.csv");
        write_csv(&split, &rows)?;
        println!("split: {} train, {} test -> {}", train.len(), test.len(), split.display());
    }
    Ok(Outcome::Complete)
}

pub fn phantom(a: PhantomArgs) -> CmdResult {
    let mut pop = PopulationConfig::default();
    if let Some(n) = a.noise {
        pop.noise_sigma = n;
    }
    if let Some(nz) = a.slices {
        pop.nz = nz;
    }
    if let Some(s) = a.size {
        pop.nx = s;
        pop.ny = s;
    }
    if !(0.0..=1.0).contains(&a.pathological_fraction) {
        return Err(config_error(format!("pathological fraction {} outside [0, 1]", a.pathological_fraction)));
    }
    let subjects = generate_population(a.count, a.pathological_fraction, a.seed, &pop).map_err(|e| match e {
        scarquant_core::Error::InvalidArgument(m) => config_error(m),
        other => other.into(),
    })?;
    fs::create_dir_all(&a.out)?;
    for s in &subjects {
        save_subject(&a.out, s)?;
    }
    let entries = scan_dataset_dir(&a.out, SliceOrder::AsStored)?;
    write_dataset_manifest(&a.out.join(SUBJECTS_FILE), &entries)?;
    let scarred = subjects.iter().filter(|s| s.pathological == Some(true)).count();
    println!("{} phantoms ({scarred} with scar) -> {}", subjects.len(), a.out.display());
    Ok(Outcome::Complete)
}

fn segment_config(a: &SegmentArgs) -> Result<PipelineConfig, Failure> {
    let mut kv: BTreeMap<String, String> = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            parse_kv(&text)?
        }
        None => BTreeMap::new(),
    };
    let flags = [
        ("variant", a.variant.clone()),
        ("myo_seg", a.myo_seg.clone()),
        ("scar_seg", a.scar_seg.clone()),
        ("regressor", a.regressor.clone()),
        ("seed", a.seed.map(|s| s.to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            kv.insert(k.to_string(), v);
        }
    }
    for o in &a.overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| config_error(format!("override '{o}' is not KEY=VALUE")))?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    let mut config = PipelineConfig::from_kv(&kv)?;
    if a.gt_myocardium {
        config.gt_myocardium = true;
    }
    config.validate()?;
    Ok(config)
}

fn print_dsc_summary(rows: &[MetricRow]) {
    for class in [CLASS_MYOCARDIUM, CLASS_SCAR] {
        let dsc: Vec<f64> = rows
            .iter()
            .filter(|r| r.class == class && r.slice.parse::<usize>().is_ok())
            .filter_map(|r| r.dsc)
            .collect();
        if !dsc.is_empty() {
            println!("{class:<10} per-slice DSC {} over {} slices", format_mean_sd(&dsc), dsc.len());
        }
    }
}

pub fn segment(a: SegmentArgs) -> CmdResult {
    let config = segment_config(&a)?;
    require_dir(&a.data)?;
    let subjects = load_dataset(&a.data, config.slice_order)?;
    if subjects.is_empty() {
        return Err(input_error(format!("no subjects in {}", a.data.display())));
    }
    info!("{} subjects, variant {}", subjects.len(), config.variant);
    let run = run_dataset(&subjects, &config)?;
    let (reports, subject_failures) = (run.reports, run.subject_failures);

    fs::create_dir_all(&a.out)?;
    let rows = collect_rows(&reports);
    write_rows_csv(&rows, fs::File::create(a.out.join("metrics.csv"))?)?;
    fs::write(a.out.join("report.json"), reports_json(&reports)?)?;
    if !a.no_predictions {
        for r in &reports {
            fs::write(a.out.join(format!("{}_pred.nii", r.subject_id)), write_labels(&r.prediction, DataType::Uint8)?)?;
        }
    }
    let stage_failures = reports.iter().filter(|r| r.is_partial()).count();
    if !subject_failures.is_empty() {
        write_csv(&a.out.join("failures.csv"), &subject_failures)?;
    }
    print_dsc_summary(&rows);
    println!(
        "{} subjects processed, {} with stage failures, {} failed -> {}",
        reports.len(),
        stage_failures,
        subject_failures.len(),
        a.out.display()
    );
    Ok(outcome(!subject_failures.is_empty() || stage_failures > 0))
}

#[derive(Serialize)]
struct QcRow {
    subject_id: String,
    slice: usize,
    wall_pixels: usize,
    closed: Option<bool>,
    scar_components: usize,
    small_components: usize,
    small_pixels: usize,
}

pub fn qc(a: QcArgs) -> CmdResult {
    if !(0.0..=1.0).contains(&a.min_scar_ratio) {
        return Err(config_error(format!("min scar ratio {} outside [0, 1]", a.min_scar_ratio)));
    }
    let files = files_with_suffix(&a.labels, &a.suffix)?;
    if files.is_empty() {
        return Err(input_error(format!("no *{} files in {}", a.suffix, a.labels.display())));
    }
    let mut rows = Vec::new();
    for (id, path) in &files {
        let labels = load_labels(path)?;
        for (z, s) in labels.slices().iter().enumerate() {
            let wall = slice_mask(s, &[Class::Myocardium, Class::Scar]);
            let scar = slice_mask(s, &[Class::Scar]);
            let n_wall = wall.count();
            let before = connected_components(&scar, Connectivity::Eight).count();
            let (small_components, small_pixels) = if n_wall > 0 && before > 0 {
                let kept = scar_ratio_filter(&scar, &wall, a.min_scar_ratio)?;
                (before - connected_components(&kept, Connectivity::Eight).count(), scar.count() - kept.count())
            } else {
                (0, 0)
            };
            rows.push(QcRow {
                subject_id: id.clone(),
                slice: z,
                wall_pixels: n_wall,
                closed: (n_wall > 0).then(|| is_closed_myocardium(&wall)),
                scar_components: before,
                small_components,
                small_pixels,
            });
        }
    }
    let mut w = csv::Writer::from_writer(csv_sink(a.out.as_deref())?);
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let open = rows.iter().filter(|r| r.closed == Some(false)).count();
    let small: usize = rows.iter().map(|r| r.small_components).sum();
    eprintln!(
        "{} subjects, {} slices: {open} open myocardium, {small} scar components below ratio",
        files.len(),
        rows.len()
    );
    Ok(Outcome::Complete)
}

pub fn synth(a: SynthArgs) -> CmdResult {
    require_dir(&a.data)?;
    let subjects = load_dataset(&a.data, SliceOrder::Auto)?;
    if subjects.is_empty() {
        return Err(input_error(format!("no subjects in {}", a.data.display())));
    }
    let mut params = SynthParams::default();
    if let Some(s) = a.blend_sigma {
        params.blend_sigma = s;
    }
    if let Some(n) = a.noise {
        params.noise_fraction = n;
    }
    let requests = plan_requests(&subjects, a.augmentations, !a.no_swaps, a.seed)?;
    let rows = emit_dataset(&requests, &subjects, &params, a.seed, &a.out)?;
    println!("{} synthetic subjects -> {}", rows.len(), a.out.display());
    Ok(Outcome::Complete)
}

pub fn metrics(a: MetricsArgs) -> CmdResult {
    require_dir(&a.pred)?;
    let gt = files_with_suffix(&a.gt, &a.gt_suffix)?;
    if gt.is_empty() {
        return Err(input_error(format!("no *{} files in {}", a.gt_suffix, a.gt.display())));
    }
    let mut rows = Vec::new();
    let mut missing = 0;
    for (id, gt_path) in &gt {
        let pred_path = a.pred.join(format!("{id}{}", a.pred_suffix));
        if !pred_path.is_file() {
            warn!("no prediction for {id}");
            missing += 1;
            continue;
        }
        let reference = load_labels(gt_path)?;
        let prediction = load_labels(&pred_path)?;
        if prediction.dims() != reference.dims() {
            warn!("{id}: prediction {:?} vs reference {:?}", prediction.dims(), reference.dims());
            missing += 1;
            continue;
        }
        let (slices, subject) = subject_metrics(id, &prediction, Some(&reference))?;
        rows.extend(slices);
        rows.extend(subject);
    }
    scarquant_core::pipeline::sort_rows(&mut rows);
    write_rows_csv(&rows, csv_sink(a.out.as_deref())?)?;
    if missing > 0 {
        eprintln!("{missing} of {} subjects had no usable prediction", gt.len());
    }
    Ok(outcome(missing > 0))
}

fn ablation_configs(a: &AblateArgs) -> Result<Vec<(String, PipelineConfig)>, Failure> {
    let mut configs = Vec::new();
    for v in &a.variants {
        let variant: Variant = v.trim().parse()?;
        let mut c = PipelineConfig::for_variant(variant);
        c.seed = a.seed;
        configs.push((variant.to_string(), c));
    }
    for spec in &a.configs {
        let (name, path) =
            spec.split_once('=').ok_or_else(|| config_error(format!("config '{spec}' is not NAME=FILE")))?;
        let c = PipelineConfig::from_file(Path::new(path)).map_err(|e| match e {
            scarquant_core::Error::Io(io) => input_error(format!("reading {path}: {io}")),
            other => other.into(),
        })?;
        c.validate()?;
        configs.push((name.to_string(), c));
    }
    if configs.is_empty() {
        for v in [Variant::A, Variant::B, Variant::C, Variant::D] {
            let mut c = PipelineConfig::for_variant(v);
            c.seed = a.seed;
            configs.push((v.to_string(), c));
        }
    }
    if configs.len() < 2 {
        return Err(config_error(format!("ablation needs at least 2 configurations, got {}", configs.len())));
    }
    let mut names: Vec<&str> = configs.iter().map(|(n, _)| n.as_str()).collect();
    names.sort();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(config_error(format!("duplicate configuration name '{}'", w[0])));
    }
    Ok(configs)
}

pub fn ablate(a: AblateArgs) -> CmdResult {
    let configs = ablation_configs(&a)?;
    require_dir(&a.data)?;
    let subjects = load_dataset(&a.data, SliceOrder::Auto)?;
    if subjects.is_empty() {
        return Err(input_error(format!("no subjects in {}", a.data.display())));
    }
    let table = run_ablation(&subjects, &configs)?;
    fs::create_dir_all(&a.out)?;
    write_csv(&a.out.join("ablation_rows.csv"), &table.rows)?;
    write_csv(&a.out.join("ablation_summary.csv"), &table.summaries)?;
    write_csv(&a.out.join("ablation_tests.csv"), &table.tests)?;
    write_json(&a.out.join("ablation.json"), &table)?;
    for s in &table.summaries {
        println!("{:<12} {:<10} {} (n = {})", s.config, s.class, s.formatted, s.n);
    }
    for t in &table.tests {
        let p = t.p_value.map_or_else(|| "n/a".to_string(), |p| format!("{p:.4}"));
        println!("{} vs {} {:<10} p = {p} ({} pairs)", t.config_a, t.config_b, t.class, t.n_pairs);
    }
    Ok(Outcome::Complete)
}

#[derive(Serialize)]
struct ClassSummary {
    class: String,
    slices: usize,
    dsc: Option<(f64, f64)>,
    dsc_formatted: String,
    hd_mm: Option<(f64, f64)>,
    hd_mm_formatted: String,
    subjects: usize,
    vol_diff_cm3: Option<(f64, f64)>,
    vol_diff_cm3_formatted: String,
    volume_pearson_r: Option<f64>,
    volume_bias_cm3: Option<f64>,
    volume_loa_cm3: Option<(f64, f64)>,
}

pub fn report(a: ReportArgs) -> CmdResult {
    if !a.metrics.is_file() {
        return Err(input_error(format!("{} not found", a.metrics.display())));
    }
    let rows = read_rows_csv(&a.metrics)?;
    fs::create_dir_all(&a.out)?;
    let mut summaries = Vec::new();
    for class in [CLASS_MYOCARDIUM, CLASS_SCAR] {
        let per_slice: Vec<&MetricRow> =
            rows.iter().filter(|r| r.class == class && r.slice.parse::<usize>().is_ok()).collect();
        let per_subject: Vec<&MetricRow> = rows.iter().filter(|r| r.class == class && r.slice == SLICE_ALL).collect();
        let dsc: Vec<f64> = per_slice.iter().filter_map(|r| r.dsc).collect();
        let hd: Vec<f64> = per_slice.iter().filter_map(|r| r.hd_mm).collect();
        let vd: Vec<f64> = per_subject.iter().filter_map(|r| r.vol_diff_cm3).collect();
        let (manual, auto): (Vec<f64>, Vec<f64>) =
            per_subject.iter().filter_map(|r| Some((r.vol_manual_cm3?, r.vol_auto_cm3?))).unzip();
        let mut summary = ClassSummary {
            class: class.to_string(),
            slices: per_slice.len(),
            dsc: mean_sd(&dsc),
            dsc_formatted: format_mean_sd(&dsc),
            hd_mm: mean_sd(&hd),
            hd_mm_formatted: format_mean_sd(&hd),
            subjects: per_subject.len(),
            vol_diff_cm3: mean_sd(&vd),
            vol_diff_cm3_formatted: format_mean_sd(&vd),
            volume_pearson_r: None,
            volume_bias_cm3: None,
            volume_loa_cm3: None,
        };
        if manual.len() >= 2 {
            let series = PairedSeries::new(manual.clone(), auto.clone())?;
            summary.volume_pearson_r = pearson_r(&series).ok();
            let ba = bland_altman(&series);
            summary.volume_bias_cm3 = Some(ba.bias);
            summary.volume_loa_cm3 = Some((ba.loa_low, ba.loa_high));
            let title = format!("{class} volume (cm3)");
            fs::write(a.out.join(format!("scatter_{class}.svg")), scatter_svg(&manual, &auto, &title))?;
            fs::write(a.out.join(format!("bland_altman_{class}.svg")), bland_altman_svg(&manual, &auto, &ba, &title))?;
        } else {
            warn!("{class}: fewer than 2 subjects with volumes, no plots");
        }
        println!(
            "{class:<10} DSC {} | HD {} mm | volume diff {} cm3 over {} subjects",
            summary.dsc_formatted, summary.hd_mm_formatted, summary.vol_diff_cm3_formatted, summary.subjects
        );
        summaries.push(summary);
    }
    write_json(&a.out.join("summary.json"), &summaries)?;
    let mut w = csv::Writer::from_path(a.out.join("summary.csv"))?;
    w.write_record([
        "class",
        "slices",
        "dsc",
        "hd_mm",
        "subjects",
        "vol_diff_cm3",
        "volume_pearson_r",
        "volume_bias_cm3",
    ])?;
    for s in &summaries {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v:.4}"));
        w.write_record([
            s.class.clone(),
            s.slices.to_string(),
            s.dsc_formatted.clone(),
            s.hd_mm_formatted.clone(),
            s.subjects.to_string(),
            s.vol_diff_cm3_formatted.clone(),
            opt(s.volume_pearson_r),
            opt(s.volume_bias_cm3),
        ])?;
    }
    w.flush()?;
    Ok(Outcome::Complete)
}
