//! Agreement statistics and the Wilcoxon signed-rank test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Per-subject manual and automatic measurements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedSeries {
    manual: Vec<f64>,
    automatic: Vec<f64>,
}

impl PairedSeries {
    pub fn new(manual: Vec<f64>, automatic: Vec<f64>) -> Result<Self> {
        if manual.len() != automatic.len() {
            return Err(Error::Length { expected: manual.len(), found: automatic.len() });
        }
        if manual.len() < 2 {
            return Err(Error::InvalidArgument("paired series needs at least 2 pairs".into()));
        }
        if manual.iter().chain(&automatic).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("paired series contains non-finite values".into()));
        }
        Ok(Self { manual, automatic })
    }

    pub fn manual(&self) -> &[f64] {
        &self.manual
    }

    pub fn automatic(&self) -> &[f64] {
        &self.automatic
    }

    pub fn len(&self) -> usize {
        self.manual.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manual.is_empty()
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Pearson correlation of manual against automatic values.
pub fn pearson_r(series: &PairedSeries) -> Result<f64> {
    let (x, y) = (series.manual(), series.automatic());
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("pearson correlation of a constant series".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementResult {
    /// Mean of `automatic - manual`.
    pub bias: f64,
    /// Sample sd of the differences.
    pub sd: f64,
    pub loa_low: f64,
    pub loa_high: f64,
}

pub const LOA_Z: f64 = 1.96;

pub fn bland_altman(series: &PairedSeries) -> AgreementResult {
    let d: Vec<f64> = series.automatic().iter().zip(series.manual()).map(|(a, m)| a - m).collect();
    let bias = mean(&d);
    let sd = (d.iter().map(|v| (v - bias).powi(2)).sum::<f64>() / (d.len() - 1) as f64).sqrt();
    AgreementResult { bias, sd, loa_low: bias - LOA_Z * sd, loa_high: bias + LOA_Z * sd }
}

/// Percentage of subjects whose predicted scar presence matches the reference.
pub fn classification_accuracy(pred_has_scar: &[bool], gt_has_scar: &[bool]) -> Result<f64> {
    if pred_has_scar.len() != gt_has_scar.len() {
        return Err(Error::Length { expected: gt_has_scar.len(), found: pred_has_scar.len() });
    }
    if gt_has_scar.is_empty() {
        return Err(Error::InvalidArgument("classification accuracy of an empty set".into()));
    }
    let correct = pred_has_scar.iter().zip(gt_has_scar).filter(|(p, g)| p == g).count();
    Ok(100.0 * correct as f64 / gt_has_scar.len() as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Alternative {
    #[default]
    TwoSided,
    /// Differences tend to be positive.
    Greater,
    Less,
}

impl std::str::FromStr for Alternative {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two-sided" => Ok(Alternative::TwoSided),
            "greater" => Ok(Alternative::Greater),
            "less" => Ok(Alternative::Less),
            other => Err(Error::InvalidArgument(format!("unknown alternative '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WilcoxonMethod {
    Exact,
    Normal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of the ranks of positive differences.
    pub w_plus: f64,
    /// Number of nonzero differences.
    pub n: usize,
    pub p_value: f64,
    pub method: WilcoxonMethod,
}

/// Largest sample size handled by exact enumeration.
pub const WILCOXON_EXACT_MAX_N: usize = 12;
/// Smallest number of nonzero differences accepted.
pub const WILCOXON_MIN_N_NONZERO: usize = 5;

/// Midranks of `|d|`, doubled so they are integers.
fn doubled_midranks(abs: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..abs.len()).collect();
    order.sort_by(|&a, &b| abs[a].total_cmp(&abs[b]));
    let mut ranks = vec![0u64; abs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && abs[order[j + 1]] == abs[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean; doubled: (i + 1) + (j + 1)
        let r2 = (i + j + 2) as u64;
        for &k in &order[i..=j] {
            ranks[k] = r2;
        }
        i = j + 1;
    }
    ranks
}

/// Signed-rank test on paired differences. Zero differences are dropped and
/// tied magnitudes share midranks.
pub fn wilcoxon_signed_rank(differences: &[f64], alternative: Alternative) -> Result<WilcoxonResult> {
    if differences.iter().any(|d| !d.is_finite()) {
        return Err(Error::InvalidArgument("non-finite difference".into()));
    }
    let nonzero: Vec<f64> = differences.iter().copied().filter(|&d| d != 0.0).collect();
    if nonzero.is_empty() {
        return Err(Error::Degenerate("all differences are zero".into()));
    }
    let n = nonzero.len();
    if n < WILCOXON_MIN_N_NONZERO {
        return Err(Error::InvalidArgument(format!(
            "{n} nonzero differences; at least {WILCOXON_MIN_N_NONZERO} required"
        )));
    }
    let abs: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let ranks = doubled_midranks(&abs);
    let w2: u64 = ranks.iter().zip(&nonzero).filter(|(_, &d)| d > 0.0).map(|(r, _)| r).sum();
    let w_plus = w2 as f64 / 2.0;

    let (p_greater, p_less, method) = if n <= WILCOXON_EXACT_MAX_N {
        // counts[s] = sign patterns whose doubled positive-rank sum is s
        let total: u64 = ranks.iter().sum();
        let mut counts = vec![0u64; total as usize + 1];
        counts[0] = 1;
        for &r in &ranks {
            for s in (r as usize..=total as usize).rev() {
                counts[s] += counts[s - r as usize];
            }
        }
        let all = (1u64 << n) as f64;
        let ge: u64 = counts[w2 as usize..].iter().sum();
        let le: u64 = counts[..=w2 as usize].iter().sum();
        (ge as f64 / all, le as f64 / all, WilcoxonMethod::Exact)
    } else {
        let nf = n as f64;
        let mut sorted = abs.clone();
        sorted.sort_by(f64::total_cmp);
        let mut tie_term = 0.0;
        let mut i = 0;
        while i < sorted.len() {
            let j = sorted[i..].iter().take_while(|&&v| v == sorted[i]).count();
            tie_term += (j * j * j - j) as f64;
            i += j;
        }
        let mu = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        if var <= 0.0 {
            return Err(Error::Degenerate("zero variance of the signed-rank statistic".into()));
        }
        let z = (w_plus - mu) / var.sqrt();
        let normal = Normal::standard();
        (normal.sf(z), normal.cdf(z), WilcoxonMethod::Normal)
    };
    let p_value = match alternative {
        Alternative::Greater => p_greater,
        Alternative::Less => p_less,
        Alternative::TwoSided => (2.0 * p_greater.min(p_less)).min(1.0),
    };
    Ok(WilcoxonResult { w_plus, n, p_value, method })
}
