//! Side-by-side comparison of pipeline configurations.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{wilcoxon_signed_rank, Alternative, WILCOXON_MIN_N_NONZERO};
use crate::pipeline::config::PipelineConfig;
use crate::pipeline::report::{format_mean_sd, mean_sd, CLASS_MYOCARDIUM, CLASS_SCAR};
use crate::pipeline::run::run_dataset;
use crate::volume::SubjectRecord;

/// Per-slice DSC of one configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub config: String,
    pub subject_id: String,
    pub slice: usize,
    pub myo_dsc: Option<f64>,
    pub scar_dsc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub config: String,
    pub class: String,
    pub n: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    /// `mean (sd)`.
    pub formatted: String,
}

/// Two-sided signed-rank test on paired per-slice DSC.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub config_a: String,
    pub config_b: String,
    pub class: String,
    pub n_pairs: usize,
    /// 1 when every difference is zero; `None` with too few nonzero differences.
    pub p_value: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    pub summaries: Vec<AblationSummary>,
    pub tests: Vec<PairwiseTest>,
}

impl AblationTable {
    pub fn summary(&self, config: &str, class: &str) -> Option<&AblationSummary> {
        self.summaries.iter().find(|s| s.config == config && s.class == class)
    }

    pub fn test(&self, a: &str, b: &str, class: &str) -> Option<&PairwiseTest> {
        self.tests.iter().find(|t| t.config_a == a && t.config_b == b && t.class == class)
    }
}

fn dsc_of(row: &AblationRow, class: &str) -> Option<f64> {
    if class == CLASS_MYOCARDIUM {
        row.myo_dsc
    } else {
        row.scar_dsc
    }
}

/// Paired p-value; `None` when fewer than the minimum number of nonzero
/// differences remain.
pub fn paired_p_value(differences: &[f64]) -> Result<Option<f64>> {
    let nonzero = differences.iter().filter(|&&d| d != 0.0).count();
    if nonzero == 0 {
        return Ok(Some(1.0));
    }
    if nonzero < WILCOXON_MIN_N_NONZERO {
        return Ok(None);
    }
    Ok(Some(wilcoxon_signed_rank(differences, Alternative::TwoSided)?.p_value))
}

/// Runs every named configuration over `subjects`; one row per
/// (configuration, subject, slice).
pub fn run_ablation(subjects: &[SubjectRecord], configs: &[(String, PipelineConfig)]) -> Result<AblationTable> {
    if configs.len() < 2 {
        return Err(Error::InvalidArgument(format!("ablation needs at least 2 configurations, got {}", configs.len())));
    }
    let mut names = std::collections::HashSet::new();
    for (name, _) in configs {
        if !names.insert(name.as_str()) {
            return Err(Error::InvalidArgument(format!("duplicate configuration name '{name}'")));
        }
    }
    let mut rows = Vec::new();
    for (name, config) in configs {
        let run = run_dataset(subjects, config)?;
        if let Some(f) = run.subject_failures.first() {
            return Err(Error::InvalidArgument(format!(
                "configuration '{name}': subject {} failed: {}",
                f.subject_id, f.message
            )));
        }
        for report in &run.reports {
            let nz = report.prediction.dims().nz;
            for z in 0..nz {
                rows.push(AblationRow {
                    config: name.clone(),
                    subject_id: report.subject_id.clone(),
                    slice: z,
                    myo_dsc: report.slice_row(z, CLASS_MYOCARDIUM).and_then(|r| r.dsc),
                    scar_dsc: report.slice_row(z, CLASS_SCAR).and_then(|r| r.dsc),
                });
            }
        }
    }

    let mut summaries = Vec::new();
    for (name, _) in configs {
        for class in [CLASS_MYOCARDIUM, CLASS_SCAR] {
            let v: Vec<f64> = rows.iter().filter(|r| &r.config == name).filter_map(|r| dsc_of(r, class)).collect();
            let ms = mean_sd(&v);
            summaries.push(AblationSummary {
                config: name.clone(),
                class: class.into(),
                n: v.len(),
                mean: ms.map(|m| m.0),
                sd: ms.map(|m| m.1),
                formatted: format_mean_sd(&v),
            });
        }
    }

    let mut tests = Vec::new();
    for i in 0..configs.len() {
        for j in (i + 1)..configs.len() {
            let (a, b) = (&configs[i].0, &configs[j].0);
            for class in [CLASS_MYOCARDIUM, CLASS_SCAR] {
                let lookup: HashMap<(&str, usize), f64> = rows
                    .iter()
                    .filter(|r| &r.config == b)
                    .filter_map(|r| dsc_of(r, class).map(|d| ((r.subject_id.as_str(), r.slice), d)))
                    .collect();
                let diffs: Vec<f64> = rows
                    .iter()
                    .filter(|r| &r.config == a)
                    .filter_map(|r| Some(dsc_of(r, class)? - lookup.get(&(r.subject_id.as_str(), r.slice))?))
                    .collect();
                tests.push(PairwiseTest {
                    config_a: a.clone(),
                    config_b: b.clone(),
                    class: class.into(),
                    n_pairs: diffs.len(),
                    p_value: paired_p_value(&diffs)?,
                });
            }
        }
    }
    Ok(AblationTable { rows, summaries, tests })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p_value_edge_cases() {
        assert_eq!(paired_p_value(&[0.0; 8]).unwrap(), Some(1.0));
        assert_eq!(paired_p_value(&[0.1, 0.0, -0.2]).unwrap(), None);
        assert_eq!(paired_p_value(&[0.1, 0.2, 0.3, 0.4, 0.5]).unwrap(), Some(0.0625));
    }
}
