use std::fs;
use std::path::Path;

use costfuse::costmat::{build_cost_matrix, uniform_cost_matrix, CostMatrixSpec};
use costfuse::dataio::{
    load_manifest, load_pool, read_predictions, read_report, write_pool, write_predictions, write_report, LoadOptions,
    ReportFormat,
};
use costfuse::harness::{
    build_engine, draw_subset, per_class_report, run_subset_experiment, validation_confusions, EvaluationReport,
    ExperimentConfig, ExperimentReport, MethodSpec, NamedCost,
};
use costfuse::metrics::{sensitivity, specificity, total_cost};
use costfuse::synth::{generate_pool, SyntheticPool, SyntheticPoolSpec};
use costfuse::{ClassSchema, FusionEngine, FusionError, Pool};
use proptest::prelude::*;

fn small_pool(seed: u64, k: usize) -> SyntheticPool {
    let spec = SyntheticPoolSpec {
        accuracy_range: (0.3, 0.6),
        ..SyntheticPoolSpec::new(seed, k, ClassSchema::isic2019(), 150, 200)
    };
    generate_pool(&spec).unwrap()
}

fn as_pool(p: SyntheticPool) -> Pool {
    Pool::new(p.schema, p.val, p.test).unwrap()
}

fn costs(schema: &ClassSchema) -> Vec<NamedCost> {
    vec![
        NamedCost::new("A", build_cost_matrix(&CostMatrixSpec::new(schema.clone())).unwrap()),
        NamedCost::new("B", build_cost_matrix(&CostMatrixSpec::new(schema.reversed())).unwrap()),
    ]
}

fn all_methods() -> Vec<MethodSpec> {
    vec![
        MethodSpec::MaxVoting,
        MethodSpec::Average,
        MethodSpec::Af,
        MethodSpec::CsAf { cost: "A".into() },
        MethodSpec::CsAf { cost: "B".into() },
    ]
}

#[test]
fn batch_prediction_matches_per_sample_fusion() {
    let pool = as_pool(small_pool(1, 7));
    let costs = costs(&pool.schema);
    for spec in all_methods() {
        let engine = build_engine(&pool, &spec, &costs, 0.5).unwrap();
        let batch = engine.predict_batch(&pool.test).unwrap();
        for (j, d) in batch.iter().enumerate() {
            assert_eq!(
                d,
                &engine.fuse(&pool.test.decision_matrix(j)).unwrap(),
                "{spec} sample {j}"
            );
        }
    }
}

#[test]
fn cs_af_matches_straight_line_reference() {
    let pool = as_pool(small_pool(2, 5));
    let costs = costs(&pool.schema);
    let cost = &costs[0].matrix;
    let engine = build_engine(&pool, &MethodSpec::CsAf { cost: "A".into() }, &costs, 0.5).unwrap();
    let (k, m) = (pool.k(), pool.schema.m());

    // objective: weighted trace over weighted total
    let labels = pool.val.labels().unwrap();
    let o: Vec<f64> = (0..k)
        .map(|c| {
            let pred = pool.val.classifier_predictions(c);
            let (mut diag, mut all) = (0.0, 0.0);
            for (&p, &t) in pred.iter().zip(labels) {
                all += cost.get(t, p);
                if p == t {
                    diag += cost.get(t, p);
                }
            }
            (diag / all).max(1e-6)
        })
        .collect();

    for j in 0..pool.test.n_samples() {
        let ind: Vec<f64> = (0..k)
            .map(|c| {
                let v = pool.test.vector(c, j);
                let top = v.iter().copied().fold(f64::MIN, f64::max);
                v.iter().map(|x| top - x).sum::<f64>() / (m as f64 - 1.0)
            })
            .collect();
        let lo = ind.iter().copied().fold(f64::MAX, f64::min);
        let hi = ind.iter().copied().fold(f64::MIN, f64::max);
        let s: Vec<f64> = ind
            .iter()
            .map(|x| if hi - lo <= 1e-12 { 1.0 } else { (x - lo) / (hi - lo) })
            .collect();
        let mut scores = vec![0.0; m];
        for c in 0..k {
            let w = 0.5 * o[c] + 0.5 * s[c];
            for (l, p) in pool.test.vector(c, j).iter().enumerate() {
                scores[l] += w * p;
            }
        }
        let got = engine.fuse(&pool.test.decision_matrix(j)).unwrap();
        for (a, b) in got.fused_scores.iter().zip(&scores) {
            assert!((a - b).abs() < 1e-12, "sample {j}");
        }
        let best = (0..m).fold(0, |b, l| if scores[l] > scores[b] { l } else { b });
        assert_eq!(got.predicted_class, best);
    }
}

#[test]
fn uniform_cost_objective_equals_accuracy() {
    let pool = as_pool(small_pool(3, 4));
    let cms = validation_confusions(&pool.val).unwrap();
    let engine = FusionEngine::cs_af(pool.schema.clone(), &cms, &uniform_cost_matrix(8).unwrap(), 0.5).unwrap();
    for (w, cm) in engine.objective_weights().unwrap().as_slice().iter().zip(&cms) {
        assert!((w - cm.trace() / cm.total()).abs() < 1e-15);
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let pool = as_pool(small_pool(4, 10));
    let costs = costs(&pool.schema);
    let config = ExperimentConfig {
        n_list: vec![3, 7],
        repetitions: 4,
        seed: 17,
        ..ExperimentConfig::with_methods(all_methods())
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_subset_experiment(&pool, &config, &costs).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(
        serde_json::to_string(&one).unwrap(),
        serde_json::to_string(&run(3)).unwrap()
    );
}

#[test]
fn curves_summarize_the_log() {
    let pool = as_pool(small_pool(5, 9));
    let costs = costs(&pool.schema);
    let config = ExperimentConfig {
        n_list: vec![2, 5, 9],
        repetitions: 5,
        seed: 3,
        ..ExperimentConfig::with_methods(all_methods())
    };
    let report = run_subset_experiment(&pool, &config, &costs).unwrap();
    assert_eq!(report.curves.len(), 5 * 3);
    assert_eq!(report.log.len(), 3 * 5);
    for curve in &report.curves {
        let entries: Vec<_> = report
            .log
            .iter()
            .filter(|l| l.n == curve.n)
            .map(|l| l.results.iter().find(|r| r.method == curve.method).unwrap())
            .collect();
        assert_eq!(entries.len(), 5);
        let mean = entries.iter().map(|r| r.accuracy).sum::<f64>() / 5.0;
        assert!((mean - curve.accuracy.mean).abs() < 1e-12);
        let cost_mean = entries.iter().map(|r| r.total_costs[1]).sum::<f64>() / 5.0;
        assert!((cost_mean - curve.total_cost[1].mean).abs() < 1e-9);
        if curve.n == 9 {
            assert_eq!(curve.accuracy.std, 0.0);
        }
    }
    for l in &report.log {
        assert_eq!(l.subset, draw_subset(3, 9, l.n, l.repetition));
    }
}

#[test]
fn experiment_rejects_bad_configs() {
    let pool = as_pool(small_pool(6, 4));
    let costs = costs(&pool.schema);
    let base = ExperimentConfig {
        n_list: vec![2],
        repetitions: 1,
        ..ExperimentConfig::with_methods(vec![MethodSpec::Average])
    };
    let too_big = ExperimentConfig {
        n_list: vec![5],
        ..base.clone()
    };
    assert!(run_subset_experiment(&pool, &too_big, &costs).is_err());
    let missing = ExperimentConfig {
        methods: vec![MethodSpec::CsAf { cost: "Z".into() }],
        ..base.clone()
    };
    assert!(run_subset_experiment(&pool, &missing, &costs).is_err());
    let bad_alpha = ExperimentConfig { alpha: 1.5, ..base };
    assert!(run_subset_experiment(&pool, &bad_alpha, &costs).is_err());
}

#[test]
fn per_class_report_is_consistent() {
    let pool = as_pool(small_pool(7, 6));
    let costs = costs(&pool.schema);
    let engine = build_engine(&pool, &MethodSpec::CsAf { cost: "A".into() }, &costs, 0.5).unwrap();
    let report = per_class_report(&engine, &pool.test, &costs).unwrap();
    let cm = &report.confusion_matrix;
    assert_eq!(cm.total(), 200.0);
    assert_eq!(report.n_samples, 200);
    assert!((report.accuracy - cm.trace() / cm.total()).abs() < 1e-15);
    for (named, nc) in report.total_costs.iter().zip(&costs) {
        assert_eq!(named.name, nc.name);
        assert_eq!(named.value, total_cost(cm, &nc.matrix).unwrap());
    }
    for (c, row) in report.per_class.iter().enumerate() {
        assert_eq!(row.class, pool.schema.names()[c]);
        assert_eq!(row.sensitivity, sensitivity(cm, c));
        assert_eq!(row.specificity, specificity(cm, c));
    }
    assert_eq!(report.objective_weights.as_ref().unwrap().entries.len(), 6);
}

#[test]
fn reports_round_trip_through_json() {
    let dir = tempfile::tempdir().unwrap();
    let pool = as_pool(small_pool(8, 4));
    let costs = costs(&pool.schema);
    let engine = build_engine(&pool, &MethodSpec::Af, &costs, 0.25).unwrap();
    let eval = per_class_report(&engine, &pool.test, &costs).unwrap();
    let path = dir.path().join("eval.json");
    write_report(&eval, &path, ReportFormat::Json).unwrap();
    assert_eq!(read_report::<EvaluationReport>(&path).unwrap(), eval);

    let config = ExperimentConfig {
        n_list: vec![2, 4],
        repetitions: 2,
        ..ExperimentConfig::with_methods(all_methods())
    };
    let exp = run_subset_experiment(&pool, &config, &costs).unwrap();
    let path = dir.path().join("exp.json");
    write_report(&exp, &path, ReportFormat::Json).unwrap();
    assert_eq!(read_report::<ExperimentReport>(&path).unwrap(), exp);
    write_report(&exp, &dir.path().join("exp.csv"), ReportFormat::Csv).unwrap();
    let csv = fs::read_to_string(dir.path().join("exp.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 5 * 2);
}

#[test]
fn pool_survives_disk_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let pool = as_pool(small_pool(9, 3));
    let manifest = write_pool(dir.path(), &pool).unwrap();
    let back = load_pool(&load_manifest(&manifest).unwrap(), LoadOptions::default()).unwrap();
    assert_eq!(back, pool);
}

#[test]
fn synthetic_pools_are_reproducible() {
    let a = small_pool(10, 5);
    assert_eq!(a, small_pool(10, 5));
    assert_ne!(a.test, small_pool(11, 5).test);
    // every classifier sees the same labels
    assert_eq!(a.val.labels().unwrap().len(), 150);
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

const TWO: &str = r#"{"classes": ["a", "b"], "severity": ["b", "a"], "classifiers": [{"id": "x", "val": "xv.csv", "test": "xt.csv"}], "labels": {"val": "lv.csv", "test": "lt.csv"}}"#;

#[test]
fn ingestion_errors_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let manifest = write(d, "m.json", TWO);
    write(d, "xv.csv", "sample_id,a,b\ns1,0.4,0.6\ns2,0.5,0.5\n");
    write(d, "lv.csv", "sample_id,label\ns1,a\ns2,b\n");
    write(d, "lt.csv", "sample_id,label\nt1,a\n");
    let load = || load_pool(&load_manifest(&manifest).unwrap(), LoadOptions::default());

    write(d, "xt.csv", "sample_id,a,b\nt1,0.4,0.7\n");
    let e = load().unwrap_err().to_string();
    assert!(e.contains("xt.csv:2"), "{e}");

    write(d, "xt.csv", "sample_id,b,a\nt1,0.4,0.6\n");
    assert!(load().is_err());

    write(d, "xt.csv", "sample_id,a,b\nt1,0.4,0.6\nt1,0.5,0.5\n");
    assert!(load().unwrap_err().to_string().contains("t1"));

    write(d, "xt.csv", "sample_id,a,b\nt1,0.4,0.6\n");
    write(d, "lt.csv", "sample_id,label\nt1,A\n");
    let e = load().unwrap_err().to_string();
    assert!(e.contains('A'), "{e}");

    write(d, "lt.csv", "sample_id,label\nt1,a\n");
    let pool = load().unwrap();
    assert_eq!(pool.test.labels().unwrap(), &[0]);

    let bad = write(
        d,
        "bad.json",
        r#"{"classes": ["a", "b"], "severity": ["a"], "classifiers": []}"#,
    );
    assert!(load_manifest(&bad).is_err());
    let unknown = write(
        d,
        "unk.json",
        r#"{"classes": ["a"], "severity": ["a"], "classifiers": [], "extra": 1}"#,
    );
    assert!(load_manifest(&unknown).is_err());
}

#[test]
fn renormalize_rescues_drifting_rows() {
    let schema = ClassSchema::from_severity_order(&["a", "b"], &["a", "b"]).unwrap();
    let text = "sample_id,a,b\ns1,0.5,0.6\n";
    let strict = read_predictions(text.as_bytes(), Path::new("p.csv"), &schema, LoadOptions::default());
    assert!(matches!(strict, Err(FusionError::Line { line: 2, .. })));
    let opts = LoadOptions {
        renormalize: true,
        ..LoadOptions::default()
    };
    let p = read_predictions(text.as_bytes(), Path::new("p.csv"), &schema, opts).unwrap();
    let v = p.vectors[0].as_slice();
    assert!((v[0] - 0.5 / 1.1).abs() < 1e-15 && (v[0] + v[1] - 1.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prediction_csv_round_trip_is_exact(rows in prop::collection::vec(prop::collection::vec(1e-9_f64..1.0, 8), 1..30)) {
        let schema = ClassSchema::isic2019();
        let vectors: Vec<_> = rows.iter().map(|r| costfuse::types::renormalize(r).unwrap()).collect();
        let ids: Vec<String> = (0..vectors.len()).map(|i| format!("img_{i}")).collect();
        let mut buf = Vec::new();
        write_predictions(&mut buf, &schema, &ids, &vectors).unwrap();
        let back = read_predictions(buf.as_slice(), Path::new("mem.csv"), &schema, LoadOptions::default()).unwrap();
        prop_assert_eq!(back.sample_ids, ids);
        prop_assert_eq!(back.vectors, vectors);
    }

    #[test]
    fn synthetic_vectors_favor_their_target(seed in any::<u64>()) {
        let spec = SyntheticPoolSpec::new(seed, 3, ClassSchema::isic2019(), 20, 20);
        let pool = generate_pool(&spec).unwrap();
        for set in [&pool.val, &pool.test] {
            for c in 0..3 {
                for j in 0..set.n_samples() {
                    let v = set.vector(c, j);
                    prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    prop_assert!(costfuse::weights::individuality(v).unwrap() > 0.0);
                }
            }
        }
        for &a in &pool.accuracies {
            prop_assert!((0.55..=0.85).contains(&a));
        }
    }
}
