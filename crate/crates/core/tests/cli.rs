use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use subscan::matrix::load_pvalue_matrix;
use subscan::scan::ScanResult;

fn subscan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subscan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

#[test]
fn pvalues_then_scan() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bg.csv"), "n0,n1\n1,1\n2,2\n3,3\n").unwrap();
    fs::write(d.join("test.csv"), "n0,n1\n2.5,0\n5,0\n").unwrap();

    let out = subscan(&[
        "pvalues",
        "--background",
        &path(d, "bg.csv"),
        "--test",
        &path(d, "test.csv"),
        "--out",
        &path(d, "p.csv"),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out.stdout.is_empty());
    let summary: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(summary["z"], 3);
    assert_eq!(summary["m"], 2);
    assert_eq!(summary["j"], 2);
    assert!(summary["ks_uniform"].is_number());

    let p = load_pvalue_matrix(d.join("p.csv")).unwrap();
    assert_eq!(p.z(), 3);
    assert_eq!(p.values(), vec![0.5, 1.0, 0.25, 1.0]);

    let out = subscan(&[
        "--format",
        "text",
        "scan",
        "--pvalues",
        &path(d, "p.csv"),
        "--out",
        &path(d, "s.json"),
    ]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("score:"));
    let r: ScanResult =
        serde_json::from_str(&fs::read_to_string(d.join("s.json")).unwrap()).unwrap();
    assert_eq!(r.subset.samples(), &[1]);
    assert_eq!(r.subset.nodes(), &[0]);
    assert!((r.score - 4f64.ln()).abs() < 1e-12);
}

#[test]
fn scan_matches_library_example() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("p.csv"),
        "# z=99\nn0,n1,n2\n0.01,0.9,0.9\n0.02,0.9,0.9\n0.9,0.9,0.9\n",
    )
    .unwrap();
    let out = subscan(&[
        "scan",
        "--pvalues",
        &path(d, "p.csv"),
        "--out",
        &path(d, "s.json"),
    ]);
    assert!(out.status.success());
    let r: ScanResult =
        serde_json::from_str(&fs::read_to_string(d.join("s.json")).unwrap()).unwrap();
    assert_eq!(r.subset.samples(), &[0, 1]);
    assert_eq!(r.subset.nodes(), &[0]);
    assert_eq!(r.alpha_star, 0.02);
    assert!((r.score - 2.0 * 50f64.ln()).abs() < 1e-12);
}

#[test]
fn individual_mode_emits_one_result_per_row() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("p.csv"), "# z=99\nn0,n1\n0.01,1\n1,1\n0.5,0.02\n").unwrap();
    let out = subscan(&[
        "scan",
        "--pvalues",
        &path(d, "p.csv"),
        "--individual",
        "--out",
        &path(d, "i.json"),
    ]);
    assert!(out.status.success());
    let rs: Vec<ScanResult> =
        serde_json::from_str(&fs::read_to_string(d.join("i.json")).unwrap()).unwrap();
    assert_eq!(rs.len(), 3);
    for (i, r) in rs.iter().enumerate() {
        assert_eq!(r.subset.samples(), &[i]);
    }
    assert!((rs[0].score - 100f64.ln()).abs() < 1e-12);
    assert_eq!(rs[1].score, 0.0);
}

#[test]
fn mismatched_nodes_fail() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bg.csv"), "a,b,c\n1,2,3\n").unwrap();
    fs::write(d.join("test.csv"), "a,x,c\n1,2,3\n").unwrap();
    let out = subscan(&[
        "pvalues",
        "--background",
        &path(d, "bg.csv"),
        "--test",
        &path(d, "test.csv"),
        "--out",
        &path(d, "p.csv"),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("column 1") && err.contains("`x`"), "{err}");
    assert!(!d.join("p.csv").exists());
}

#[test]
fn empty_and_bad_files_fail() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("empty.csv"), "").unwrap();
    let out = subscan(&[
        "scan",
        "--pvalues",
        &path(d, "empty.csv"),
        "--out",
        &path(d, "s.json"),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("header"));

    fs::write(d.join("nan.csv"), "n0,n1\n1.0,NaN\n").unwrap();
    let out = subscan(&[
        "scan",
        "--background",
        &path(d, "nan.csv"),
        "--test",
        &path(d, "nan.csv"),
        "--out",
        &path(d, "s.json"),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row 1") && err.contains("n1"), "{err}");

    let out = subscan(&[
        "scan",
        "--pvalues",
        &path(d, "missing.csv"),
        "--out",
        &path(d, "s.json"),
    ]);
    assert!(!out.status.success());
}

#[test]
fn invalid_fraction_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = subscan(&[
        "synth",
        "--sample-fraction",
        "1.5",
        "--out-dir",
        &path(dir.path(), "x"),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = subscan(&[
        "synth",
        "--node-fraction",
        "abc",
        "--out-dir",
        &path(dir.path(), "x"),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_and_eval_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = subscan(&[
        "synth",
        "--m",
        "120",
        "--j",
        "24",
        "--shift",
        "3",
        "--seed",
        "2",
        "--out-dir",
        &path(d, "data"),
    ]);
    assert!(out.status.success());
    for f in ["background.csv", "test.csv", "truth.json", "labels.csv"] {
        assert!(d.join("data").join(f).exists(), "{f}");
    }
    let truth: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("data/truth.json")).unwrap()).unwrap();
    assert_eq!(truth["sample_indices"].as_array().unwrap().len(), 60);
    assert_eq!(truth["node_indices"].as_array().unwrap().len(), 6);

    let out = subscan(&[
        "eval",
        "--pool",
        &path(d, "data/test.csv"),
        "--labels",
        &path(d, "data/labels.csv"),
        "--background",
        &path(d, "data/background.csv"),
        "--group-size",
        "20",
        "--proportions",
        "0.5,0.1",
        "--trials",
        "8",
        "--restarts",
        "3",
        "--pca-nodes",
        "best",
        "--out-dir",
        &path(d, "eval"),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    for col in ["50%", "10%", "Indv."] {
        assert!(summary[col].is_number(), "{col}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("eval/report.json")).unwrap()).unwrap();
    assert_eq!(report["groups"].as_array().unwrap().len(), 2);
    let pca = fs::read_to_string(d.join("eval/pca.csv")).unwrap();
    assert!(pca.starts_with("sample_id,label,pc1,pc2\n"));
    assert_eq!(pca.lines().count(), 121);
    let card = fs::read_to_string(d.join("eval/cardinality.csv")).unwrap();
    assert!(card.starts_with("proportion,condition,axis,size,count\n"));

    let out = subscan(&[
        "eval",
        "--pool",
        &path(d, "data/test.csv"),
        "--labels",
        &path(d, "data/labels.csv"),
        "--background",
        &path(d, "data/background.csv"),
        "--group-size",
        "200",
        "--out-dir",
        &path(d, "eval2"),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("pool has"));
}
