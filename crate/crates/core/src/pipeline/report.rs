//! Metric rows and report serialisation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::BinaryMask;
use crate::metrics::{dice, hausdorff95_mm, hausdorff_mm, mask_volume, scar_burden};
use crate::pipeline::run::QuantReport;
use crate::volume::{slice_mask, Class, LabelMap, Spacing};

pub const CLASS_MYOCARDIUM: &str = "myocardium";
pub const CLASS_SCAR: &str = "scar";
/// Slice key of 3D subject rows.
pub const SLICE_ALL: &str = "all";
/// Slice key of rows averaging the per-slice values.
pub const SLICE_MEAN: &str = "mean";

/// One metric row. `slice` is a slice index, `all` (3D) or `mean`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub subject_id: String,
    pub slice: String,
    pub class: String,
    pub dsc: Option<f64>,
    pub hd_mm: Option<f64>,
    pub hd95_mm: Option<f64>,
    pub vol_manual_cm3: Option<f64>,
    pub vol_auto_cm3: Option<f64>,
    pub vol_diff_cm3: Option<f64>,
    pub scar_burden_pct: Option<f64>,
    pub scar_burden_manual_pct: Option<f64>,
}

fn class_sets() -> [(&'static str, &'static [Class]); 2] {
    [(CLASS_MYOCARDIUM, &[Class::Myocardium, Class::Scar]), (CLASS_SCAR, &[Class::Scar])]
}

fn burden<M: BinaryMask>(scar: &M, wall: &M, spacing: Spacing) -> Option<f64> {
    scar_burden(scar, wall, spacing).ok()
}

fn compare<M: BinaryMask>(
    subject_id: &str,
    slice: String,
    class: &str,
    pred: (&M, &M),
    gt: Option<(&M, &M)>,
    spacing: Spacing,
    with_hd95: bool,
) -> Result<MetricRow> {
    let (p, p_wall) = pred;
    let is_scar = class == CLASS_SCAR;
    let vol_auto = mask_volume(p, spacing);
    let mut row = MetricRow {
        subject_id: subject_id.to_string(),
        slice,
        class: class.to_string(),
        dsc: None,
        hd_mm: None,
        hd95_mm: None,
        vol_manual_cm3: None,
        vol_auto_cm3: Some(vol_auto),
        vol_diff_cm3: None,
        scar_burden_pct: if is_scar { burden(p, p_wall, spacing) } else { None },
        scar_burden_manual_pct: None,
    };
    if let Some((g, g_wall)) = gt {
        let vol_manual = mask_volume(g, spacing);
        row.dsc = Some(dice(p, g)?);
        row.hd_mm = hausdorff_mm(p, g, spacing).ok();
        if with_hd95 {
            row.hd95_mm = hausdorff95_mm(p, g, spacing).ok();
        }
        row.vol_manual_cm3 = Some(vol_manual);
        row.vol_diff_cm3 = Some((vol_auto - vol_manual).abs());
        if is_scar {
            row.scar_burden_manual_pct = burden(g, g_wall, spacing);
        }
    }
    Ok(row)
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Per-slice rows and per-subject (`all` and `mean`) rows.
pub fn subject_metrics(
    subject_id: &str,
    prediction: &LabelMap,
    reference: Option<&LabelMap>,
) -> Result<(Vec<MetricRow>, Vec<MetricRow>)> {
    let spacing = prediction.spacing();
    let pred_slices = prediction.slices();
    let ref_slices = reference.map(|r| r.slices());
    let mut slice_rows = Vec::new();
    for (z, p) in pred_slices.iter().enumerate() {
        let p_wall = slice_mask(p, &[Class::Myocardium, Class::Scar]);
        let g = ref_slices.as_ref().map(|r| &r[z]);
        let g_wall = g.map(|g| slice_mask(g, &[Class::Myocardium, Class::Scar]));
        for (name, classes) in class_sets() {
            let pm = slice_mask(p, classes);
            let gm = g.map(|g| slice_mask(g, classes));
            let gt = gm.as_ref().zip(g_wall.as_ref());
            slice_rows.push(compare(subject_id, z.to_string(), name, (&pm, &p_wall), gt, spacing, false)?);
        }
    }
    let mut subject_rows = Vec::new();
    let p_wall = prediction.wall_mask();
    let g_wall = reference.map(|r| r.wall_mask());
    for (name, classes) in class_sets() {
        let pm = prediction.mask_of(classes);
        let gm = reference.map(|r| r.mask_of(classes));
        let gt = gm.as_ref().zip(g_wall.as_ref());
        subject_rows.push(compare(subject_id, SLICE_ALL.into(), name, (&pm, &p_wall), gt, spacing, true)?);
        let rows: Vec<&MetricRow> = slice_rows.iter().filter(|r| r.class == name).collect();
        subject_rows.push(MetricRow {
            subject_id: subject_id.to_string(),
            slice: SLICE_MEAN.into(),
            class: name.to_string(),
            dsc: mean_of(rows.iter().map(|r| r.dsc)),
            hd_mm: mean_of(rows.iter().map(|r| r.hd_mm)),
            hd95_mm: None,
            vol_manual_cm3: None,
            vol_auto_cm3: None,
            vol_diff_cm3: None,
            scar_burden_pct: None,
            scar_burden_manual_pct: None,
        });
    }
    Ok((slice_rows, subject_rows))
}

fn slice_key(s: &str) -> (u8, usize) {
    match s.parse::<usize>() {
        Ok(z) => (0, z),
        Err(_) if s == SLICE_ALL => (1, 0),
        Err(_) => (2, 0),
    }
}

/// Orders rows by subject, slice (indices, then `all`, then `mean`) and class.
pub fn sort_rows(rows: &mut [MetricRow]) {
    rows.sort_by(|a, b| {
        a.subject_id
            .cmp(&b.subject_id)
            .then_with(|| slice_key(&a.slice).cmp(&slice_key(&b.slice)))
            .then_with(|| a.class.cmp(&b.class))
    });
}

/// All rows of `reports`, sorted.
pub fn collect_rows(reports: &[QuantReport]) -> Vec<MetricRow> {
    let mut rows: Vec<MetricRow> =
        reports.iter().flat_map(|r| r.slice_rows.iter().chain(&r.subject_rows).cloned()).collect();
    sort_rows(&mut rows);
    rows
}

pub fn write_rows_csv<W: std::io::Write>(rows: &[MetricRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows_csv(path: &Path) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

/// Reports sorted by subject id, serialised as pretty JSON.
pub fn reports_json(reports: &[QuantReport]) -> Result<String> {
    let mut sorted: Vec<&QuantReport> = reports.iter().collect();
    sorted.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
    Ok(serde_json::to_string_pretty(&sorted)?)
}

/// Mean and sample sd, formatted as `mean (sd)` with two decimals.
pub fn mean_sd(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some((mean, sd))
}

pub fn format_mean_sd(values: &[f64]) -> String {
    match mean_sd(values) {
        Some((m, s)) => format!("{m:.2} ({s:.2})"),
        None => "n/a".into(),
    }
}
