use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use costfuse::dataio::{load_manifest, load_pool, write_fused, LoadOptions};
use costfuse::{ClassSchema, FusionEngine};

const FIXTURE_A: &[u8] = include_bytes!("../../core/fixtures/cost_matrix_a.v1.csv");
const FIXTURE_B: &[u8] = include_bytes!("../../core/fixtures/cost_matrix_b.v1.csv");

fn costfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_costfuse"))
        .args(args)
        .output()
        .expect("spawn costfuse")
}

fn ok(args: &[&str]) -> Output {
    let out = costfuse(args);
    assert!(
        out.status.success(),
        "costfuse {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small synthetic pool on disk; returns the manifest path.
fn synth(dir: &Path, seed: &str, k: &str) -> PathBuf {
    ok(&[
        "synth",
        "--seed",
        seed,
        "--k",
        k,
        "--n-val",
        "200",
        "--n-test",
        "300",
        "--out-dir",
        s(dir),
    ]);
    dir.join("manifest.json")
}

#[test]
fn costmat_default_matches_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    ok(&["costmat", "build", "--out", s(&a)]);
    ok(&["costmat", "build", "--reverse", "--out", s(&b)]);
    assert_eq!(fs::read(&a).unwrap(), FIXTURE_A);
    assert_eq!(fs::read(&b).unwrap(), FIXTURE_B);
}

#[test]
fn costmat_rejects_incomplete_severity() {
    let dir = tempfile::tempdir().unwrap();
    let out = costfuse(&[
        "costmat",
        "build",
        "--severity",
        "MEL,SCC,BCC,NV,AK,DF,VASC",
        "--out",
        s(&dir.path().join("c.csv")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn costmat_custom_schema() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.csv");
    ok(&[
        "costmat",
        "build",
        "--classes",
        "x,y",
        "--severity",
        "y,x",
        "--out",
        s(&p),
    ]);
    assert_eq!(fs::read_to_string(&p).unwrap(), ",x,y\nx,2,16\ny,200,1\n");
}

#[test]
fn fuse_average_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(&dir.path().join("pool"), "5", "6");
    let out = dir.path().join("out");
    ok(&[
        "fuse",
        "--manifest",
        s(&manifest),
        "--method",
        "average",
        "--out",
        s(&out),
    ]);

    let pool = load_pool(&load_manifest(&manifest).unwrap(), LoadOptions::default()).unwrap();
    let engine = FusionEngine::average(pool.schema.clone());
    let decisions = engine.predict_batch(&pool.test).unwrap();
    let mut expected = Vec::new();
    write_fused(&mut expected, &pool.schema, pool.test.sample_ids(), &decisions).unwrap();
    assert_eq!(fs::read(out.join("predictions.csv")).unwrap(), expected);

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["method"], "average");
    assert_eq!(report["n_samples"], 300);
}

#[test]
fn cs_af_with_uniform_costs_equals_af() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(&dir.path().join("pool"), "9", "5");
    let uniform = dir.path().join("uniform.csv");
    let schema = ClassSchema::isic2019();
    let mut text = String::from(",");
    text.push_str(&schema.names().join(","));
    text.push('\n');
    for name in schema.names() {
        text.push_str(name);
        text.push_str(&",1".repeat(schema.m()));
        text.push('\n');
    }
    fs::write(&uniform, text).unwrap();

    let af = dir.path().join("af");
    let cs = dir.path().join("cs");
    ok(&["fuse", "--manifest", s(&manifest), "--method", "af", "--out", s(&af)]);
    ok(&[
        "fuse",
        "--manifest",
        s(&manifest),
        "--method",
        "cs-af",
        "--cost-matrix",
        s(&uniform),
        "--out",
        s(&cs),
    ]);
    assert_eq!(
        fs::read(af.join("predictions.csv")).unwrap(),
        fs::read(cs.join("predictions.csv")).unwrap()
    );
}

#[test]
fn fuse_checks_cost_matrix_flag() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(&dir.path().join("pool"), "1", "3");
    let out = dir.path().join("out");
    assert!(!costfuse(&[
        "fuse",
        "--manifest",
        s(&manifest),
        "--method",
        "cs-af",
        "--out",
        s(&out)
    ])
    .status
    .success());
    let a = dir.path().join("a.csv");
    fs::write(&a, FIXTURE_A).unwrap();
    let r = costfuse(&[
        "fuse",
        "--manifest",
        s(&manifest),
        "--method",
        "af",
        "--cost-matrix",
        s(&a),
        "--out",
        s(&out),
    ]);
    assert!(!r.status.success());
}

#[test]
fn fuse_csv_report() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(&dir.path().join("pool"), "2", "4");
    let a = dir.path().join("A.csv");
    fs::write(&a, FIXTURE_A).unwrap();
    let out = dir.path().join("out");
    ok(&[
        "fuse",
        "--manifest",
        s(&manifest),
        "--method",
        "cs-af",
        "--cost-matrix",
        s(&a),
        "--format",
        "csv",
        "--out",
        s(&out),
    ]);
    let text = fs::read_to_string(out.join("report.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "class,severity_rank,sensitivity,specificity");
    assert_eq!(lines.count(), 8);
}

fn experiment(manifest: &Path, out: &Path, extra: &[&str]) {
    let mut args = vec!["experiment", "--manifest", s(manifest), "--out-dir", s(out)];
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn experiment_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(&dir.path().join("pool"), "7", "10");
    let a = dir.path().join("A.csv");
    let b = dir.path().join("B.csv");
    fs::write(&a, FIXTURE_A).unwrap();
    fs::write(&b, FIXTURE_B).unwrap();
    let costs = format!("{},{}", s(&a), s(&b));
    let extra = [
        "--N",
        "2,5,8",
        "--reps",
        "3",
        "--seed",
        "7",
        "--cost-matrix",
        costs.as_str(),
    ];
    let run1 = dir.path().join("r1");
    let run2 = dir.path().join("r2");
    experiment(&manifest, &run1, &extra);
    ok(&[
        "--threads",
        "1",
        "experiment",
        "--manifest",
        s(&manifest),
        "--out-dir",
        s(&run2),
        "--N",
        "2,5,8",
        "--reps",
        "3",
        "--seed",
        "7",
        "--cost-matrix",
        &costs,
    ]);
    for f in ["experiment.json", "curves.csv"] {
        assert_eq!(fs::read(run1.join(f)).unwrap(), fs::read(run2.join(f)).unwrap(), "{f}");
    }

    // max-voting, average, af, cs-af(A), cs-af(B) at three sizes
    let curves = fs::read_to_string(run1.join("curves.csv")).unwrap();
    let mut lines = curves.lines();
    let header = lines.next().unwrap();
    assert_eq!(
        header,
        "method,n,accuracy_mean,accuracy_std,cost_A_mean,cost_A_std,cost_B_mean,cost_B_std"
    );
    assert_eq!(lines.count(), 5 * 3);
}

#[test]
fn experiment_full_pool_has_zero_spread() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(&dir.path().join("pool"), "8", "6");
    let out = dir.path().join("out");
    experiment(&manifest, &out, &["--methods", "average,af", "--N", "6", "--reps", "4"]);
    let curves = fs::read_to_string(out.join("curves.csv")).unwrap();
    let rows: Vec<&str> = curves.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[3].parse::<f64>().unwrap(), 0.0, "{row}");
    }
}

#[test]
fn experiment_cs_af_needs_costs() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(&dir.path().join("pool"), "8", "4");
    let r = costfuse(&[
        "experiment",
        "--manifest",
        s(&manifest),
        "--methods",
        "cs-af",
        "--N",
        "2",
        "--out-dir",
        s(&dir.path().join("o")),
    ]);
    assert!(!r.status.success());
}

#[test]
fn synth_is_deterministic_and_ingestible() {
    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("one");
    let two = dir.path().join("two");
    let args = |out: &Path| {
        vec![
            "synth".to_string(),
            "--seed".into(),
            "11".into(),
            "--k".into(),
            "4".into(),
            "--n-val".into(),
            "50".into(),
            "--n-test".into(),
            "60".into(),
            "--bias".into(),
            "0-1:MEL:BKL:0.4".into(),
            "--out-dir".into(),
            s(out).to_string(),
        ]
    };
    for out in [&one, &two] {
        let a = args(out);
        ok(&a.iter().map(String::as_str).collect::<Vec<_>>());
    }
    for rel in [
        "manifest.json",
        "labels_val.csv",
        "labels_test.csv",
        "predictions/clf_003_test.csv",
    ] {
        assert_eq!(
            fs::read(one.join(rel)).unwrap(),
            fs::read(two.join(rel)).unwrap(),
            "{rel}"
        );
    }
    let pool = load_pool(
        &load_manifest(&one.join("manifest.json")).unwrap(),
        LoadOptions::default(),
    )
    .unwrap();
    assert_eq!(pool.k(), 4);
    assert_eq!(pool.val.n_samples(), 50);
    assert_eq!(pool.test.labels().unwrap().len(), 60);
}

#[test]
fn synth_rejects_bad_bias() {
    let dir = tempfile::tempdir().unwrap();
    for bias in ["0:MEL:XYZ:0.2", "0:MEL:BKL", "3-1:MEL:BKL:0.2"] {
        let r = costfuse(&["synth", "--k", "4", "--bias", bias, "--out-dir", s(dir.path())]);
        assert!(!r.status.success(), "{bias}");
    }
}
