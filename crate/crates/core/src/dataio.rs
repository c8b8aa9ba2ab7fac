//! File formats: pool manifests, per-classifier prediction CSVs, label CSVs
//! and report output.
//!
//! Class order always comes from the manifest; CSV headers are checked
//! against it, never used to define it.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, io_err, FusionError, Result};
use crate::fusion::FusedDecision;
use crate::harness::{EvaluationReport, ExperimentReport};
use crate::types::{
    renormalize, validate_decision_vector, ClassSchema, DecisionVector, Pool, PredictionSet, INGEST_TOLERANCE,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierEntry {
    pub id: String,
    pub val: PathBuf,
    pub test: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelPaths {
    pub val: PathBuf,
    pub test: PathBuf,
}

/// On-disk manifest layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFile {
    pub classes: Vec<String>,
    /// Class names from most to least severe.
    pub severity: Vec<String>,
    pub classifiers: Vec<ClassifierEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<LabelPaths>,
}

/// A validated manifest with paths resolved against its directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub schema: ClassSchema,
    pub classifiers: Vec<ClassifierEntry>,
    pub labels: Option<LabelPaths>,
}

impl Manifest {
    pub fn k(&self) -> usize {
        self.classifiers.len()
    }
}

fn input_err(path: &Path, message: impl Into<String>) -> FusionError {
    FusionError::Input {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn line_err(path: &Path, line: u64, message: impl Into<String>) -> FusionError {
    FusionError::Line {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn parse_manifest(text: &str, base_dir: &Path, origin: &Path) -> Result<Manifest> {
    let raw: ManifestFile = serde_json::from_str(text).map_err(|e| input_err(origin, e.to_string()))?;
    let schema =
        ClassSchema::from_severity_order(&raw.classes, &raw.severity).map_err(|e| input_err(origin, e.to_string()))?;
    if raw.classifiers.is_empty() {
        return Err(input_err(origin, "manifest lists no classifiers"));
    }
    let mut seen = HashSet::new();
    for c in &raw.classifiers {
        if !seen.insert(c.id.as_str()) {
            return Err(input_err(origin, format!("duplicate classifier id {:?}", c.id)));
        }
    }
    let resolve = |p: &Path| {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base_dir.join(p)
        }
    };
    Ok(Manifest {
        schema,
        classifiers: raw
            .classifiers
            .iter()
            .map(|c| ClassifierEntry {
                id: c.id.clone(),
                val: resolve(&c.val),
                test: resolve(&c.test),
            })
            .collect(),
        labels: raw.labels.as_ref().map(|l| LabelPaths {
            val: resolve(&l.val),
            test: resolve(&l.test),
        }),
    })
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_manifest(&text, base, path)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadOptions {
    pub tolerance: f64,
    /// Rescale rows that fail validation but are non-negative with positive sum.
    pub renormalize: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            tolerance: INGEST_TOLERANCE,
            renormalize: false,
        }
    }
}

/// Decision vectors of one classifier on one split, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierPredictions {
    pub sample_ids: Vec<String>,
    pub vectors: Vec<DecisionVector>,
}

fn check_header(path: &Path, header: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        return Err(line_err(
            path,
            1,
            format!("header {:?} does not match expected {:?}", got, expected),
        ));
    }
    Ok(())
}

pub fn read_predictions<R: Read>(
    input: R,
    path: &Path,
    schema: &ClassSchema,
    opts: LoadOptions,
) -> Result<ClassifierPredictions> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let mut expected = vec!["sample_id"];
    expected.extend(schema.names().iter().map(String::as_str));
    check_header(path, rdr.headers()?, &expected)?;

    let mut seen = HashSet::new();
    let mut out = ClassifierPredictions {
        sample_ids: Vec::new(),
        vectors: Vec::new(),
    };
    let mut repaired = 0usize;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != expected.len() {
            return Err(line_err(
                path,
                line,
                format!("expected {} fields, got {}", expected.len(), rec.len()),
            ));
        }
        let id = rec[0].trim().to_string();
        if !seen.insert(id.clone()) {
            return Err(line_err(path, line, format!("duplicate sample_id {id:?}")));
        }
        let probs = rec
            .iter()
            .skip(1)
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| line_err(path, line, format!("bad probability {f:?}: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let v = match validate_decision_vector(&probs, opts.tolerance) {
            Ok(()) => DecisionVector::with_tolerance(probs, opts.tolerance)?,
            Err(violation) if opts.renormalize => {
                let fixed = renormalize(&probs).map_err(|_| line_err(path, line, violation.to_string()))?;
                repaired += 1;
                fixed
            }
            Err(violation) => return Err(line_err(path, line, violation.to_string())),
        };
        out.sample_ids.push(id);
        out.vectors.push(v);
    }
    if repaired > 0 {
        log::warn!("{}: renormalized {repaired} rows", path.display());
    }
    Ok(out)
}

pub fn load_predictions(path: &Path, schema: &ClassSchema, opts: LoadOptions) -> Result<ClassifierPredictions> {
    let f = File::open(path).map_err(io_err(path))?;
    read_predictions(f, path, schema, opts)
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

/// Writes `sample_id,<class...>` rows using shortest round-trip decimals.
pub fn write_predictions<W: Write>(
    out: W,
    schema: &ClassSchema,
    sample_ids: &[String],
    vectors: &[DecisionVector],
) -> Result<()> {
    check_dim(sample_ids.len(), vectors.len(), "sample ids vs vectors")?;
    let mut w = csv_writer(out);
    let mut header = vec!["sample_id".to_string()];
    header.extend(schema.names().iter().cloned());
    w.write_record(&header)?;
    for (id, v) in sample_ids.iter().zip(vectors) {
        check_dim(schema.m(), v.m(), "decision vector vs schema")?;
        let mut rec = vec![id.clone()];
        rec.extend(v.as_slice().iter().map(|p| format!("{p}")));
        w.write_record(&rec)?;
    }
    w.flush().map_err(io_err("predictions output"))?;
    Ok(())
}

pub fn save_predictions(
    path: &Path,
    schema: &ClassSchema,
    sample_ids: &[String],
    vectors: &[DecisionVector],
) -> Result<()> {
    let f = File::create(path).map_err(io_err(path))?;
    write_predictions(BufWriter::new(f), schema, sample_ids, vectors)
}

/// True labels in file order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Labels {
    pub sample_ids: Vec<String>,
    pub classes: Vec<usize>,
}

impl Labels {
    pub fn as_map(&self) -> HashMap<&str, usize> {
        self.sample_ids
            .iter()
            .map(String::as_str)
            .zip(self.classes.iter().copied())
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }
}

fn nearest_class<'a>(schema: &'a ClassSchema, name: &str) -> Option<&'a str> {
    schema
        .names()
        .iter()
        .map(|n| (strsim::levenshtein(n, name), n.as_str()))
        .min()
        .map(|(_, n)| n)
}

pub fn read_labels<R: Read>(input: R, path: &Path, schema: &ClassSchema) -> Result<Labels> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
    let mut records = rdr.records();
    let Some(header) = records.next() else {
        log::warn!("{}: label file is empty", path.display());
        return Ok(Labels::default());
    };
    check_header(path, &header?, &["sample_id", "label"])?;
    let mut labels = Labels::default();
    let mut seen = HashSet::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 2 {
            return Err(line_err(path, line, format!("expected 2 fields, got {}", rec.len())));
        }
        let id = rec[0].trim().to_string();
        let name = rec[1].trim();
        let class = schema.index_of(name).ok_or_else(|| {
            let hint = nearest_class(schema, name)
                .map(|n| format!(" (did you mean {n:?}?)"))
                .unwrap_or_default();
            line_err(path, line, format!("unknown label {name:?}{hint}"))
        })?;
        if !seen.insert(id.clone()) {
            return Err(line_err(path, line, format!("duplicate sample_id {id:?}")));
        }
        labels.sample_ids.push(id);
        labels.classes.push(class);
    }
    if labels.is_empty() {
        log::warn!("{}: label file has no rows", path.display());
    }
    Ok(labels)
}

pub fn load_labels(path: &Path, schema: &ClassSchema) -> Result<Labels> {
    let f = File::open(path).map_err(io_err(path))?;
    read_labels(f, path, schema)
}

pub fn write_labels<W: Write>(out: W, schema: &ClassSchema, sample_ids: &[String], classes: &[usize]) -> Result<()> {
    check_dim(sample_ids.len(), classes.len(), "sample ids vs labels")?;
    let mut w = csv_writer(out);
    w.write_record(["sample_id", "label"])?;
    for (id, &c) in sample_ids.iter().zip(classes) {
        let name = schema.names().get(c).ok_or(FusionError::ClassIndex {
            index: c,
            m: schema.m(),
        })?;
        w.write_record([id.as_str(), name.as_str()])?;
    }
    w.flush().map_err(io_err("labels output"))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Split {
    Val,
    Test,
}

fn load_split(manifest: &Manifest, split: Split, opts: LoadOptions) -> Result<PredictionSet> {
    let schema = &manifest.schema;
    let files: Vec<ClassifierPredictions> = manifest
        .classifiers
        .par_iter()
        .map(|c| {
            let path = match split {
                Split::Val => &c.val,
                Split::Test => &c.test,
            };
            load_predictions(path, schema, opts)
        })
        .collect::<Result<_>>()?;
    let sample_ids = files[0].sample_ids.clone();
    for (entry, f) in manifest.classifiers.iter().zip(&files) {
        if f.sample_ids != sample_ids {
            return Err(FusionError::Config(format!(
                "classifier {:?} does not cover the same samples, in the same order, as {:?}",
                entry.id, manifest.classifiers[0].id
            )));
        }
    }
    let labels = match &manifest.labels {
        None => None,
        Some(paths) => {
            let path = match split {
                Split::Val => &paths.val,
                Split::Test => &paths.test,
            };
            let l = load_labels(path, schema)?;
            let map = l.as_map();
            let joined = sample_ids
                .iter()
                .map(|id| {
                    map.get(id.as_str())
                        .copied()
                        .ok_or_else(|| input_err(path, format!("no label for sample {id:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            Some(joined)
        }
    };
    PredictionSet::new(
        schema.m(),
        manifest.classifiers.iter().map(|c| c.id.clone()).collect(),
        sample_ids,
        labels,
        files.into_iter().map(|f| f.vectors).collect(),
    )
}

/// Loads both splits of every classifier listed in the manifest.
pub fn load_pool(manifest: &Manifest, opts: LoadOptions) -> Result<Pool> {
    let val = load_split(manifest, Split::Val, opts)?;
    let test = load_split(manifest, Split::Test, opts)?;
    Pool::new(manifest.schema.clone(), val, test)
}

fn split_labels(ps: &PredictionSet) -> Result<&[usize]> {
    ps.labels().ok_or(FusionError::Config("split has no labels".into()))
}

/// Writes a pool as `manifest.json`, one predictions CSV per classifier per
/// split under `predictions/`, and one labels CSV per split. Returns the
/// manifest path.
pub fn write_pool(dir: &Path, pool: &Pool) -> Result<PathBuf> {
    let pred_dir = dir.join("predictions");
    std::fs::create_dir_all(&pred_dir).map_err(io_err(&pred_dir))?;
    let schema = &pool.schema;
    let mut classifiers = Vec::new();
    for (c, id) in pool.val.classifier_ids().iter().enumerate() {
        let val = PathBuf::from("predictions").join(format!("{id}_val.csv"));
        let test = PathBuf::from("predictions").join(format!("{id}_test.csv"));
        save_predictions(
            &dir.join(&val),
            schema,
            pool.val.sample_ids(),
            &pool.val.classifier_vectors(c),
        )?;
        save_predictions(
            &dir.join(&test),
            schema,
            pool.test.sample_ids(),
            &pool.test.classifier_vectors(c),
        )?;
        classifiers.push(ClassifierEntry {
            id: id.clone(),
            val,
            test,
        });
    }
    for (name, ps) in [("labels_val.csv", &pool.val), ("labels_test.csv", &pool.test)] {
        let path = dir.join(name);
        let f = File::create(&path).map_err(io_err(&path))?;
        write_labels(BufWriter::new(f), schema, ps.sample_ids(), split_labels(ps)?)?;
    }
    let manifest = ManifestFile {
        classes: schema.names().to_vec(),
        severity: schema
            .severity_order()
            .iter()
            .map(|&c| schema.names()[c].clone())
            .collect(),
        classifiers,
        labels: Some(LabelPaths {
            val: "labels_val.csv".into(),
            test: "labels_test.csv".into(),
        }),
    };
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(io_err(&path))?;
    Ok(path)
}

/// Fused outputs: `sample_id,predicted,<class scores...>`.
pub fn write_fused<W: Write>(
    out: W,
    schema: &ClassSchema,
    sample_ids: &[String],
    decisions: &[FusedDecision],
) -> Result<()> {
    check_dim(sample_ids.len(), decisions.len(), "sample ids vs decisions")?;
    let mut w = csv_writer(out);
    let mut header = vec!["sample_id".to_string(), "predicted".to_string()];
    header.extend(schema.names().iter().cloned());
    w.write_record(&header)?;
    for (id, d) in sample_ids.iter().zip(decisions) {
        let mut rec = vec![id.clone(), schema.names()[d.predicted_class].clone()];
        rec.extend(d.fused_scores.iter().map(|s| format!("{s}")));
        w.write_record(&rec)?;
    }
    w.flush().map_err(io_err("fused output"))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = FusionError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            other => Err(FusionError::Config(format!("unknown report format {other:?}"))),
        }
    }
}

/// A flat table for the CSV form of a report.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub trait Report: Serialize + DeserializeOwned {
    fn csv_table(&self) -> CsvTable;
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

impl Report for EvaluationReport {
    /// One row per class.
    fn csv_table(&self) -> CsvTable {
        CsvTable {
            header: ["class", "severity_rank", "sensitivity", "specificity"]
                .map(String::from)
                .to_vec(),
            rows: self
                .per_class
                .iter()
                .map(|r| {
                    vec![
                        r.class.clone(),
                        r.severity_rank.to_string(),
                        opt(r.sensitivity),
                        opt(r.specificity),
                    ]
                })
                .collect(),
        }
    }
}

impl Report for ExperimentReport {
    /// One row per (method, N).
    fn csv_table(&self) -> CsvTable {
        let mut header: Vec<String> = ["method", "n", "accuracy_mean", "accuracy_std"]
            .map(String::from)
            .to_vec();
        for c in &self.cost_matrices {
            header.push(format!("cost_{c}_mean"));
            header.push(format!("cost_{c}_std"));
        }
        let rows = self
            .curves
            .iter()
            .map(|p| {
                let mut row = vec![
                    p.method.clone(),
                    p.n.to_string(),
                    format!("{}", p.accuracy.mean),
                    format!("{}", p.accuracy.std),
                ];
                for s in &p.total_cost {
                    row.push(format!("{}", s.mean));
                    row.push(format!("{}", s.std));
                }
                row
            })
            .collect();
        CsvTable { header, rows }
    }
}

pub fn write_report<R: Report>(report: &R, path: &Path, format: ReportFormat) -> Result<()> {
    let f = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(f);
    match format {
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut out, report)?;
            out.write_all(b"\n").map_err(io_err(path))?;
        }
        ReportFormat::Csv => {
            let table = report.csv_table();
            let mut w = csv_writer(&mut out);
            w.write_record(&table.header)?;
            for row in &table.rows {
                w.write_record(row)?;
            }
            w.flush().map_err(io_err(path))?;
        }
    }
    out.flush().map_err(io_err(path))
}

pub fn read_report<R: Report>(path: &Path) -> Result<R> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&text)?)
}
