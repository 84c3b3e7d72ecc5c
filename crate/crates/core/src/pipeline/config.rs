//! Pipeline configuration and its flat `key = value` file format.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bbox::{BoxRegressor, ExternalBoxPredictions, HeuristicRegressor, LabelOracleRegressor, DEFAULT_BOX_MARGIN};
use crate::error::{Error, Result};
use crate::nifti::SliceOrder;
use crate::qc::{VoteConfig, VoteRule, VoteSearch, MIN_SCAR_RATIO};
use crate::segment::{EmMyocardiumSegmenter, ScarRule};
use crate::synthesis::SynthParams;

/// Pipeline variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    /// Box, myocardium stage, scar stage.
    A,
    /// Myocardium stage and scar stage on the full frame.
    B,
    /// Box, then one stage segmenting myocardium and scar together.
    C,
    /// One combined stage on the full frame.
    D,
    /// Variant A plus emission of a synthetic training set.
    E,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::A, Variant::B, Variant::C, Variant::D, Variant::E];

    pub fn uses_bbox(self) -> bool {
        !matches!(self, Variant::B | Variant::D)
    }

    /// Whether myocardium and scar come out of a single stage.
    pub fn combined(self) -> bool {
        matches!(self, Variant::C | Variant::D)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::A => "a",
            Variant::B => "b",
            Variant::C => "c",
            Variant::D => "d",
            Variant::E => "e",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Variant::A),
            "b" => Ok(Variant::B),
            "c" => Ok(Variant::C),
            "d" => Ok(Variant::D),
            "e" => Ok(Variant::E),
            other => Err(Error::Config(format!("unknown variant '{other}'"))),
        }
    }
}

fn split_kind(s: &str) -> (&str, Option<&str>) {
    match s.split_once(':') {
        Some((k, v)) => (k, Some(v)),
        None => (s, None),
    }
}

/// Box regressor selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum RegressorChoice {
    None,
    Heuristic,
    LabelOracle,
    /// CSV of `subject_id,dx,dy,sx,sy`.
    External(PathBuf),
}

impl FromStr for RegressorChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match split_kind(s) {
            ("none", None) => Ok(RegressorChoice::None),
            ("heuristic", None) => Ok(RegressorChoice::Heuristic),
            ("oracle", None) => Ok(RegressorChoice::LabelOracle),
            ("external", Some(p)) if !p.is_empty() => Ok(RegressorChoice::External(PathBuf::from(p))),
            _ => Err(Error::Config(format!("unknown regressor '{s}' (none, heuristic, oracle, external:<csv>)"))),
        }
    }
}

impl fmt::Display for RegressorChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegressorChoice::None => f.write_str("none"),
            RegressorChoice::Heuristic => f.write_str("heuristic"),
            RegressorChoice::LabelOracle => f.write_str("oracle"),
            RegressorChoice::External(p) => write!(f, "external:{}", p.display()),
        }
    }
}

/// Myocardium stage selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum MyoChoice {
    Em,
    Oracle,
    /// Directory of `<subject_id>_myo.nii` label files.
    Imported(PathBuf),
}

impl FromStr for MyoChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match split_kind(s) {
            ("em", None) => Ok(MyoChoice::Em),
            ("oracle", None) => Ok(MyoChoice::Oracle),
            ("import", Some(p)) if !p.is_empty() => Ok(MyoChoice::Imported(PathBuf::from(p))),
            _ => Err(Error::Config(format!("unknown myocardium segmenter '{s}' (em, oracle, import:<dir>)"))),
        }
    }
}

impl fmt::Display for MyoChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MyoChoice::Em => f.write_str("em"),
            MyoChoice::Oracle => f.write_str("oracle"),
            MyoChoice::Imported(p) => write!(f, "import:{}", p.display()),
        }
    }
}

/// Scar stage selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ScarChoice {
    Rule(ScarRule),
    Oracle,
    /// Directory of `<subject_id>_scar.nii` label files.
    Imported(PathBuf),
}

impl FromStr for ScarChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match split_kind(s) {
            ("oracle", None) => Ok(ScarChoice::Oracle),
            ("import", Some(p)) if !p.is_empty() => Ok(ScarChoice::Imported(PathBuf::from(p))),
            (rule, None) => rule.parse::<ScarRule>().map(ScarChoice::Rule).map_err(|_| {
                Error::Config(format!(
                    "unknown scar segmenter '{s}' (nsd, <n>sd, fwhm, otsu, em, oracle, import:<dir>)"
                ))
            }),
            _ => Err(Error::Config(format!("unknown scar segmenter '{s}'"))),
        }
    }
}

impl fmt::Display for ScarChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScarChoice::Rule(r) => write!(f, "{r}"),
            ScarChoice::Oracle => f.write_str("oracle"),
            ScarChoice::Imported(p) => write!(f, "import:{}", p.display()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QcConfig {
    /// Re-segment jittered boxes when the myocardium is not closed.
    pub revote: bool,
    pub ratio_filter: bool,
    pub min_scar_ratio: f64,
    pub jitter_count: usize,
    pub vote: VoteConfig,
}

impl Default for QcConfig {
    fn default() -> Self {
        Self {
            revote: true,
            ratio_filter: true,
            min_scar_ratio: MIN_SCAR_RATIO,
            jitter_count: 10,
            vote: VoteConfig::default(),
        }
    }
}

/// Synthetic dataset emitted by variant E.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub out_dir: Option<PathBuf>,
    pub augmentations_per_subject: usize,
    pub swaps: bool,
    pub params: SynthParams,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { out_dir: None, augmentations_per_subject: 2, swaps: true, params: SynthParams::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub variant: Variant,
    pub regressor: RegressorChoice,
    pub myo: MyoChoice,
    pub scar: ScarChoice,
    pub qc: QcConfig,
    pub seed: u64,
    pub box_margin: f64,
    /// Side of the square frame every slice is cropped or padded to.
    pub frame_size: usize,
    /// Side of the myocardium-stage input.
    pub myo_input_size: usize,
    /// Side of the scar-stage crop around the myocardium centroid.
    pub scar_crop_size: usize,
    pub slice_order: SliceOrder,
    /// Replace the myocardium stage output with the reference wall.
    pub gt_myocardium: bool,
    pub synth: SynthConfig,
}

impl PipelineConfig {
    /// Defaults for `variant`: heuristic box, EM myocardium, 5SD scar; QC
    /// applies to the two-stage variants only.
    pub fn for_variant(variant: Variant) -> Self {
        Self {
            variant,
            regressor: if variant.uses_bbox() { RegressorChoice::Heuristic } else { RegressorChoice::None },
            myo: MyoChoice::Em,
            scar: ScarChoice::Rule(ScarRule::default()),
            qc: QcConfig { revote: !variant.combined(), ratio_filter: !variant.combined(), ..QcConfig::default() },
            seed: 0,
            box_margin: DEFAULT_BOX_MARGIN,
            frame_size: 256,
            myo_input_size: 128,
            scar_crop_size: 64,
            slice_order: SliceOrder::Auto,
            gt_myocardium: false,
            synth: SynthConfig::default(),
        }
    }

    /// All components driven by the reference labels.
    pub fn oracle(variant: Variant) -> Self {
        Self {
            regressor: if variant.uses_bbox() { RegressorChoice::LabelOracle } else { RegressorChoice::None },
            myo: MyoChoice::Oracle,
            scar: ScarChoice::Oracle,
            ..Self::for_variant(variant)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let has_regressor = self.regressor != RegressorChoice::None;
        if self.variant.uses_bbox() && !has_regressor {
            return Err(Error::Config(format!("variant {} needs a box regressor", self.variant)));
        }
        if !self.variant.uses_bbox() && has_regressor {
            return Err(Error::Config(format!("variant {} has no box stage; regressor must be none", self.variant)));
        }
        if self.variant.combined() {
            if let ScarChoice::Imported(_) = self.scar {
                return Err(Error::Config(
                    "combined variants segment scar in the myocardium stage; imported scar is not allowed".into(),
                ));
            }
        }
        if self.frame_size == 0 || self.frame_size % 2 != 0 {
            return Err(Error::Config(format!("frame size must be even and positive, got {}", self.frame_size)));
        }
        if self.myo_input_size < 2 || self.scar_crop_size < 2 {
            return Err(Error::Config("stage input sizes must be at least 2".into()));
        }
        if !(self.box_margin >= 0.0 && self.box_margin.is_finite()) {
            return Err(Error::Config(format!("box margin must be >= 0, got {}", self.box_margin)));
        }
        if !(0.0..=1.0).contains(&self.qc.min_scar_ratio) {
            return Err(Error::Config(format!("min scar ratio {} outside [0, 1]", self.qc.min_scar_ratio)));
        }
        if self.qc.revote && self.qc.jitter_count < 2 {
            return Err(Error::Config("re-voting needs at least 2 jittered boxes".into()));
        }
        Ok(())
    }

    pub fn build_regressor(&self) -> Result<Option<Box<dyn BoxRegressor>>> {
        Ok(match &self.regressor {
            RegressorChoice::None => None,
            RegressorChoice::Heuristic => {
                Some(Box::new(HeuristicRegressor { margin: self.box_margin, ..HeuristicRegressor::default() }))
            }
            RegressorChoice::LabelOracle => Some(Box::new(LabelOracleRegressor { margin: self.box_margin })),
            RegressorChoice::External(p) => Some(Box::new(ExternalBoxPredictions::from_csv(p)?)),
        })
    }

    pub fn em_myocardium(&self) -> EmMyocardiumSegmenter {
        EmMyocardiumSegmenter::with_seed(self.seed)
    }

    /// Keys accepted by [`PipelineConfig::from_kv`].
    pub const KEYS: [&'static str; 22] = [
        "variant",
        "regressor",
        "myo_seg",
        "scar_seg",
        "seed",
        "revote",
        "ratio_filter",
        "min_scar_ratio",
        "jitter_count",
        "vote_rule",
        "vote_search",
        "box_margin",
        "frame_size",
        "myo_input_size",
        "scar_crop_size",
        "slice_order",
        "gt_myocardium",
        "synth_out",
        "synth_augmentations",
        "synth_swaps",
        "blend_sigma",
        "synth_noise",
    ];

    /// Builds a config from `key = value` pairs. `variant` is applied first,
    /// then every other key overrides the variant defaults.
    pub fn from_kv(pairs: &BTreeMap<String, String>) -> Result<Self> {
        for k in pairs.keys() {
            if !Self::KEYS.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown config key '{k}'")));
            }
        }
        let variant = match pairs.get("variant") {
            Some(v) => v.parse()?,
            None => Variant::A,
        };
        let mut c = Self::for_variant(variant);
        for (k, v) in pairs {
            c.set(k, v)?;
        }
        Ok(c)
    }

    /// Sets one key; values use the same syntax as the config file.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "variant" => self.variant = v.parse()?,
            "regressor" => self.regressor = v.parse()?,
            "myo_seg" => self.myo = v.parse()?,
            "scar_seg" => self.scar = v.parse()?,
            "seed" => self.seed = parse_num(key, v)?,
            "revote" => self.qc.revote = parse_bool(key, v)?,
            "ratio_filter" => self.qc.ratio_filter = parse_bool(key, v)?,
            "min_scar_ratio" => self.qc.min_scar_ratio = parse_num(key, v)?,
            "jitter_count" => self.qc.jitter_count = parse_num(key, v)?,
            "vote_rule" => {
                self.qc.vote.rule = match v {
                    "at-least" => VoteRule::AtLeast,
                    "exceeds" => VoteRule::Exceeds,
                    _ => return Err(Error::Config(format!("vote_rule must be at-least or exceeds, got '{v}'"))),
                }
            }
            "vote_search" => {
                self.qc.vote.search = match v {
                    "smallest" => VoteSearch::SmallestK,
                    "largest" => VoteSearch::LargestK,
                    _ => return Err(Error::Config(format!("vote_search must be smallest or largest, got '{v}'"))),
                }
            }
            "box_margin" => self.box_margin = parse_num(key, v)?,
            "frame_size" => self.frame_size = parse_num(key, v)?,
            "myo_input_size" => self.myo_input_size = parse_num(key, v)?,
            "scar_crop_size" => self.scar_crop_size = parse_num(key, v)?,
            "slice_order" => self.slice_order = v.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
            "gt_myocardium" => self.gt_myocardium = parse_bool(key, v)?,
            "synth_out" => self.synth.out_dir = Some(PathBuf::from(v)),
            "synth_augmentations" => self.synth.augmentations_per_subject = parse_num(key, v)?,
            "synth_swaps" => self.synth.swaps = parse_bool(key, v)?,
            "blend_sigma" => self.synth.params.blend_sigma = parse_num(key, v)?,
            "synth_noise" => self.synth.params.noise_fraction = parse_num(key, v)?,
            _ => return Err(Error::Config(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_kv(&parse_kv(&text)?)
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("invalid value '{v}' for {key}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean '{v}' for {key}"))),
    }
}

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) =
            line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
        let k = k.trim().to_string();
        if out.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key '{k}'", i + 1)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_d_rejects_regressor() {
        let mut c = PipelineConfig::for_variant(Variant::D);
        assert!(c.validate().is_ok());
        c.regressor = RegressorChoice::Heuristic;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut a = PipelineConfig::for_variant(Variant::A);
        a.regressor = RegressorChoice::None;
        assert!(a.validate().is_err());
    }

    #[test]
    fn file_format() {
        let text = "# comment\nvariant = b\nscar_seg = 3sd\nrevote = off\nseed=42\n";
        let c = PipelineConfig::from_kv(&parse_kv(text).unwrap()).unwrap();
        assert_eq!(c.variant, Variant::B);
        assert_eq!(c.regressor, RegressorChoice::None);
        assert_eq!(c.scar, ScarChoice::Rule(ScarRule::Nsd { n: 3.0 }));
        assert!(!c.qc.revote);
        assert_eq!(c.seed, 42);
        assert!(PipelineConfig::from_kv(&parse_kv("bogus = 1").unwrap()).is_err());
        assert!(parse_kv("novalue").is_err());
        assert!(parse_kv("a=1\na=2").is_err());
    }

    #[test]
    fn choices_roundtrip() {
        for s in ["none", "heuristic", "oracle", "external:/tmp/x.csv"] {
            assert_eq!(s.parse::<RegressorChoice>().unwrap().to_string(), s);
        }
        for s in ["em", "oracle", "import:/d"] {
            assert_eq!(s.parse::<MyoChoice>().unwrap().to_string(), s);
        }
        for s in ["5sd", "fwhm", "otsu", "em", "oracle", "import:/d"] {
            assert_eq!(s.parse::<ScarChoice>().unwrap().to_string(), s);
        }
        assert!("external:".parse::<RegressorChoice>().is_err());
    }
}
