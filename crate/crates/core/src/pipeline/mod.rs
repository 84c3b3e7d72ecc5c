//! End-to-end quantification: configuration, execution, reporting.

pub mod ablation;
pub mod config;
pub mod dataset;
pub mod report;
pub mod run;

pub use ablation::{paired_p_value, run_ablation, AblationRow, AblationSummary, AblationTable, PairwiseTest};
pub use config::{parse_kv, MyoChoice, PipelineConfig, QcConfig, RegressorChoice, ScarChoice, SynthConfig, Variant};
pub use dataset::{
    load_dataset, load_subject, read_dataset_manifest, save_subject, scan_dataset_dir, subject_ids, train_test_split,
    write_dataset_manifest, DatasetEntry, SUBJECTS_FILE,
};
pub use report::{
    collect_rows, format_mean_sd, mean_sd, read_rows_csv, reports_json, sort_rows, subject_metrics, write_rows_csv,
    MetricRow, CLASS_MYOCARDIUM, CLASS_SCAR, SLICE_ALL, SLICE_MEAN,
};
pub use run::{
    replace_with_gt_myocardium, run_dataset, run_subject, run_subject_with, Components, DatasetRun, QcAction, QcEvent,
    QuantReport, StageFailure, SubjectFailure,
};
