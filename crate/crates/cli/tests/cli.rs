use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn scarquant(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scarquant")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn phantoms(dir: &Path, count: usize) {
    let o = scarquant(&[
        "phantom",
        "--out",
        s(dir),
        "--count",
        &count.to_string(),
        "--seed",
        "5",
        "--slices",
        "3",
        "--size",
        "72",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

fn csv_records(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(Result::unwrap).collect()
}

#[test]
fn phantom_and_ingest_write_manifest_and_split() {
    let t = TempDir::new().unwrap();
    let data = t.path().join("data");
    phantoms(&data, 5);
    assert!(data.join("phantom_000_image.nii").is_file());
    assert!(data.join("phantom_004_label.nii").is_file());
    assert_eq!(csv_records(&data.join("subjects.csv")).len(), 5);

    let o = scarquant(&["ingest", "--data", s(&data), "--test-fraction", "0.4", "--seed", "1"]);
    assert_eq!(code(&o), 0);
    let split = csv_records(&data.join("split.csv"));
    assert_eq!(split.len(), 5);
    assert_eq!(split.iter().filter(|r| &r[1] == "test").count(), 2);
}

#[test]
fn oracle_segmentation_is_perfect() {
    let t = TempDir::new().unwrap();
    let (data, out) = (t.path().join("data"), t.path().join("out"));
    phantoms(&data, 2);
    let o = scarquant(&[
        "segment",
        "--data",
        s(&data),
        "--out",
        s(&out),
        "--variant",
        "a",
        "--regressor",
        "oracle",
        "--myo-seg",
        "oracle",
        "--scar-seg",
        "oracle",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_metrics(&out.join("metrics.csv"));
    assert!(!rows.is_empty());
    for (slice, dsc) in rows {
        if let Some(d) = dsc {
            assert_eq!(d, 1.0, "slice {slice}");
        }
    }
    assert!(out.join("phantom_000_pred.nii").is_file());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.as_array().unwrap().len(), 2);
}

fn read_metrics(path: &Path) -> Vec<(String, Option<f64>)> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let headers = r.headers().unwrap().clone();
    let si = headers.iter().position(|h| h == "slice").unwrap();
    let di = headers.iter().position(|h| h == "dsc").unwrap();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            (rec[si].to_string(), rec[di].parse().ok())
        })
        .collect()
}

#[test]
fn config_file_with_flag_overrides() {
    let t = TempDir::new().unwrap();
    let (data, out) = (t.path().join("data"), t.path().join("out"));
    phantoms(&data, 1);
    let cfg = t.path().join("run.cfg");
    fs::write(&cfg, "# oracle run\nvariant = b\nregressor = none\nmyo_seg = oracle\nscar_seg = oracle\n").unwrap();
    let o = scarquant(&["segment", "--data", s(&data), "--out", s(&out), "--config", s(&cfg), "--seed", "9"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(out.join("report.json")).unwrap();
    assert!(report.contains("\"variant\": \"B\""));
    assert!(report.contains("\"seed\": 9"));
}

#[test]
fn config_errors_exit_with_two() {
    let t = TempDir::new().unwrap();
    let (data, out) = (t.path().join("data"), t.path().join("out"));
    phantoms(&data, 1);
    let bad_key = t.path().join("bad.cfg");
    fs::write(&bad_key, "colour = blue\n").unwrap();
    for args in [
        vec!["--variant", "d", "--regressor", "heuristic"],
        vec!["--variant", "z"],
        vec!["--config", s(&bad_key)],
        vec!["--set", "min_scar_ratio=2"],
        vec!["--scar-seg", "magic"],
    ] {
        let mut full = vec!["segment", "--data", s(&data), "--out", s(&out)];
        full.extend(args.iter().copied());
        let o = scarquant(&full);
        assert_eq!(code(&o), 2, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn input_errors_exit_with_one() {
    let t = TempDir::new().unwrap();
    let missing = t.path().join("missing");
    assert_eq!(code(&scarquant(&["segment", "--data", s(&missing), "--out", s(t.path())])), 1);
    assert_eq!(code(&scarquant(&["ingest", "--data", s(t.path())])), 1);
    assert_eq!(code(&scarquant(&["report", "--metrics", s(&missing), "--out", s(t.path())])), 1);
    let corrupt = t.path().join("x_image.nii");
    fs::write(&corrupt, b"not a nifti file").unwrap();
    assert_eq!(code(&scarquant(&["segment", "--data", s(t.path()), "--out", s(&t.path().join("o"))])), 1);
}

#[test]
fn metrics_and_report() {
    let t = TempDir::new().unwrap();
    let (data, out) = (t.path().join("data"), t.path().join("out"));
    phantoms(&data, 3);
    let o = scarquant(&["segment", "--data", s(&data), "--out", s(&out)]);
    assert!(matches!(code(&o), 0 | 3), "{}", String::from_utf8_lossy(&o.stderr));

    let m = t.path().join("m.csv");
    let o = scarquant(&["metrics", "--pred", s(&out), "--gt", s(&data), "--out", s(&m)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(&m).unwrap(), fs::read(out.join("metrics.csv")).unwrap());

    let rep = t.path().join("rep");
    let o = scarquant(&["report", "--metrics", s(&m), "--out", s(&rep)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["summary.json", "summary.csv", "scatter_myocardium.svg", "bland_altman_myocardium.svg"] {
        assert!(rep.join(f).is_file(), "{f}");
    }
    let svg = fs::read_to_string(rep.join("scatter_myocardium.svg")).unwrap();
    assert_eq!(svg.matches("<circle").count(), 3);

    fs::remove_file(out.join("phantom_001_pred.nii")).unwrap();
    let o = scarquant(&["metrics", "--pred", s(&out), "--gt", s(&data), "--out", s(&m)]);
    assert_eq!(code(&o), 3);
}

#[test]
fn qc_on_reference_labels() {
    let t = TempDir::new().unwrap();
    phantoms(t.path(), 2);
    let out = t.path().join("qc.csv");
    let o = scarquant(&["qc", "--labels", s(t.path()), "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    let rows = csv_records(&out);
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| &r[3] == "true"));
    assert_eq!(code(&scarquant(&["qc", "--labels", s(t.path()), "--min-scar-ratio", "3"])), 2);
}

#[test]
fn synth_is_deterministic() {
    let t = TempDir::new().unwrap();
    let data = t.path().join("data");
    phantoms(&data, 4);
    let dirs = [t.path().join("s1"), t.path().join("s2")];
    for d in &dirs {
        let o = scarquant(&["synth", "--data", s(&data), "--out", s(d), "--augmentations", "1", "--seed", "4"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let mut names: Vec<_> = fs::read_dir(&dirs[0]).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() > 4);
    for n in names {
        assert_eq!(fs::read(dirs[0].join(&n)).unwrap(), fs::read(dirs[1].join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn segment_is_deterministic() {
    let t = TempDir::new().unwrap();
    let data = t.path().join("data");
    phantoms(&data, 2);
    let outs = [t.path().join("r1"), t.path().join("r2")];
    for o in &outs {
        scarquant(&["segment", "--data", s(&data), "--out", s(o), "--seed", "3"]);
    }
    for f in ["metrics.csv", "report.json", "phantom_000_pred.nii"] {
        assert_eq!(fs::read(outs[0].join(f)).unwrap(), fs::read(outs[1].join(f)).unwrap(), "{f}");
    }
}

#[test]
fn ablate_writes_tables() {
    let t = TempDir::new().unwrap();
    let (data, out) = (t.path().join("data"), t.path().join("ab"));
    phantoms(&data, 2);
    let o = scarquant(&["ablate", "--data", s(&data), "--out", s(&out), "--variants", "a,d"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    // configs x subjects x slices
    assert_eq!(csv_records(&out.join("ablation_rows.csv")).len(), 2 * 2 * 3);
    assert_eq!(csv_records(&out.join("ablation_summary.csv")).len(), 4);
    assert!(out.join("ablation_tests.csv").is_file());
    assert_eq!(code(&scarquant(&["ablate", "--data", s(&data), "--out", s(&out), "--variants", "a"])), 2);
    assert_eq!(code(&scarquant(&["ablate", "--data", s(&data), "--out", s(&out), "--variants", "a,a"])), 2);
}
