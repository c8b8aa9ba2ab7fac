//! Domain types shared by every stage of the fusion pipeline.
//!
//! All matrices are stored row-major in class order as given by
//! [`ClassSchema::names`]. Severity is a separate rank attribute and never
//! changes the storage order.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, FusionError, ProbabilityViolation, Result};

/// Tolerance applied to probability rows at ingestion.
pub const INGEST_TOLERANCE: f64 = 1e-6;
/// Tolerance a renormalized row is guaranteed to satisfy.
pub const RENORMALIZED_TOLERANCE: f64 = 1e-12;

/// Ordered class labels plus a severity ranking (rank 0 = most severe).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema", into = "RawSchema")]
pub struct ClassSchema {
    names: Vec<String>,
    severity_rank: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawSchema {
    class_names: Vec<String>,
    severity_rank: Vec<usize>,
}

impl TryFrom<RawSchema> for ClassSchema {
    type Error = FusionError;

    fn try_from(raw: RawSchema) -> Result<Self> {
        ClassSchema::new(raw.class_names, raw.severity_rank)
    }
}

impl From<ClassSchema> for RawSchema {
    fn from(s: ClassSchema) -> Self {
        RawSchema {
            class_names: s.names,
            severity_rank: s.severity_rank,
        }
    }
}

/// ISIC 2019 class order.
pub const ISIC2019_CLASSES: [&str; 8] = ["MEL", "NV", "BCC", "AK", "BKL", "DF", "VASC", "SCC"];
/// Clinical severity order of the ISIC 2019 classes, most severe first.
pub const ISIC2019_SEVERITY: [&str; 8] = ["MEL", "SCC", "BCC", "NV", "AK", "DF", "VASC", "BKL"];

impl ClassSchema {
    pub fn new(names: Vec<String>, severity_rank: Vec<usize>) -> Result<Self> {
        if names.len() < 2 {
            return Err(FusionError::Schema(format!(
                "need at least 2 classes, got {}",
                names.len()
            )));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if n.is_empty() {
                return Err(FusionError::Schema("empty class name".into()));
            }
            if !seen.insert(n.as_str()) {
                return Err(FusionError::Schema(format!("duplicate class name {n:?}")));
            }
        }
        check_dim(names.len(), severity_rank.len(), "severity rank length")?;
        let mut hit = vec![false; names.len()];
        for &r in &severity_rank {
            if r >= names.len() || hit[r] {
                return Err(FusionError::Schema(format!(
                    "severity ranks {severity_rank:?} are not a permutation of 0..{}",
                    names.len()
                )));
            }
            hit[r] = true;
        }
        Ok(Self { names, severity_rank })
    }

    /// Builds a schema from class names and the same names listed from most
    /// to least severe.
    pub fn from_severity_order<S: AsRef<str>>(names: &[S], severity: &[S]) -> Result<Self> {
        let names: Vec<String> = names.iter().map(|s| s.as_ref().to_string()).collect();
        if severity.len() != names.len() {
            return Err(FusionError::Schema(format!(
                "severity list has {} entries, expected {}",
                severity.len(),
                names.len()
            )));
        }
        let mut rank = vec![usize::MAX; names.len()];
        for (r, s) in severity.iter().enumerate() {
            let s = s.as_ref();
            let idx = names
                .iter()
                .position(|n| n == s)
                .ok_or_else(|| FusionError::Schema(format!("unknown class {s:?} in severity list")))?;
            if rank[idx] != usize::MAX {
                return Err(FusionError::Schema(format!(
                    "class {s:?} appears twice in severity list"
                )));
            }
            rank[idx] = r;
        }
        Self::new(names, rank)
    }

    /// The eight ISIC 2019 lesion classes with their clinical severity order.
    pub fn isic2019() -> Self {
        Self::from_severity_order(&ISIC2019_CLASSES, &ISIC2019_SEVERITY).expect("built-in schema is valid")
    }

    pub fn m(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn severity_rank(&self) -> &[usize] {
        &self.severity_rank
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Class indices ordered from most to least severe.
    pub fn severity_order(&self) -> Vec<usize> {
        let mut order = vec![0; self.m()];
        for (class, &rank) in self.severity_rank.iter().enumerate() {
            order[rank] = class;
        }
        order
    }

    /// Same classes with the severity order reversed.
    pub fn reversed(&self) -> Self {
        let m = self.m();
        Self {
            names: self.names.clone(),
            severity_rank: self.severity_rank.iter().map(|r| m - 1 - r).collect(),
        }
    }
}

/// Checks that `v` is a probability vector: entries in [0,1] summing to one
/// within `tolerance`.
pub fn validate_decision_vector(v: &[f64], tolerance: f64) -> Result<(), ProbabilityViolation> {
    if v.is_empty() {
        return Err(ProbabilityViolation::Empty);
    }
    let mut sum = 0.0;
    for (index, &p) in v.iter().enumerate() {
        if !p.is_finite() {
            return Err(ProbabilityViolation::NonFinite { index });
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(ProbabilityViolation::OutOfRange { index, value: p });
        }
        sum += p;
    }
    if (sum - 1.0).abs() > tolerance {
        return Err(ProbabilityViolation::SumMismatch { sum, tolerance });
    }
    Ok(())
}

/// Divides every entry by the sum. Entries must be finite and non-negative.
pub fn renormalize(v: &[f64]) -> Result<DecisionVector> {
    if v.is_empty() {
        return Err(ProbabilityViolation::Empty.into());
    }
    for (index, &p) in v.iter().enumerate() {
        if !p.is_finite() {
            return Err(ProbabilityViolation::NonFinite { index }.into());
        }
        if p < 0.0 {
            return Err(ProbabilityViolation::OutOfRange { index, value: p }.into());
        }
    }
    let sum: f64 = v.iter().sum();
    if sum <= 0.0 {
        return Err(FusionError::ZeroMass);
    }
    let probs: Vec<f64> = v.iter().map(|p| p / sum).collect();
    validate_decision_vector(&probs, RENORMALIZED_TOLERANCE)?;
    Ok(DecisionVector(probs))
}

/// Posterior probabilities emitted by one classifier for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DecisionVector(Vec<f64>);

impl DecisionVector {
    /// Validates at [`INGEST_TOLERANCE`].
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(probs, INGEST_TOLERANCE)
    }

    pub fn with_tolerance(probs: Vec<f64>, tolerance: f64) -> Result<Self> {
        validate_decision_vector(&probs, tolerance)?;
        Ok(Self(probs))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn m(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

impl AsRef<[f64]> for DecisionVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Lowest index holding the maximum value.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// The k x m matrix of decision vectors for one sample, one row per classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionMatrix {
    m: usize,
    data: Vec<f64>,
}

impl DecisionMatrix {
    pub fn from_rows(rows: Vec<DecisionVector>) -> Result<Self> {
        let first = rows.first().ok_or(FusionError::Empty("decision matrix rows"))?;
        let m = first.m();
        let mut data = Vec::with_capacity(rows.len() * m);
        for r in &rows {
            check_dim(m, r.m(), "decision matrix row length")?;
            data.extend_from_slice(r.as_slice());
        }
        Ok(Self { m, data })
    }

    /// Builds from raw rows, validating each at [`INGEST_TOLERANCE`].
    pub fn from_vecs(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(rows.into_iter().map(DecisionVector::new).collect::<Result<_>>()?)
    }

    pub fn k(&self) -> usize {
        self.data.len() / self.m
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.m..(i + 1) * self.m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.m)
    }

    pub(crate) fn row_slices(&self) -> Vec<&[f64]> {
        self.rows().collect()
    }
}

/// Positive m x m cost table; cell (p, q) prices predicting true class p as q.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct CostMatrix {
    m: usize,
    cells: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.len();
        if m < 2 {
            return Err(FusionError::CostMatrix(format!("need at least 2 classes, got {m}")));
        }
        let mut cells = Vec::with_capacity(m * m);
        for r in &rows {
            check_dim(m, r.len(), "cost matrix row length")?;
            cells.extend_from_slice(r);
        }
        let cm = Self { m, cells };
        cm.check_invariants()?;
        Ok(cm)
    }

    fn check_invariants(&self) -> Result<()> {
        for p in 0..self.m {
            for q in 0..self.m {
                let c = self.get(p, q);
                if !(c.is_finite() && c > 0.0) {
                    return Err(FusionError::CostMatrix(format!(
                        "cell ({p}, {q}) = {c} is not strictly positive"
                    )));
                }
                if p != q && self.get(p, p) > c {
                    return Err(FusionError::CostMatrix(format!(
                        "correct-prediction cost {} at ({p}, {p}) exceeds error cost {c} at ({p}, {q})",
                        self.get(p, p)
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn get(&self, p: usize, q: usize) -> f64 {
        self.cells[p * self.m + q]
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.cells.chunks_exact(self.m).map(<[f64]>::to_vec).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.m).map(|i| self.get(i, i)).collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for CostMatrix {
    type Error = FusionError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        CostMatrix::new(rows)
    }
}

impl From<CostMatrix> for Vec<Vec<f64>> {
    fn from(c: CostMatrix) -> Self {
        c.to_rows()
    }
}

/// m x m table, row = true class, column = predicted class. Cells are counts
/// or, after cost adjustment, cost-weighted counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct ConfusionMatrix {
    m: usize,
    cells: Vec<f64>,
}

impl ConfusionMatrix {
    pub fn zeros(m: usize) -> Self {
        Self {
            m,
            cells: vec![0.0; m * m],
        }
    }

    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(FusionError::Empty("confusion matrix"));
        }
        let mut cells = Vec::with_capacity(m * m);
        for r in &rows {
            check_dim(m, r.len(), "confusion matrix row length")?;
            for &c in r {
                if !(c.is_finite() && c >= 0.0) {
                    return Err(FusionError::Config(format!(
                        "confusion matrix cell {c} is negative or not finite"
                    )));
                }
            }
            cells.extend_from_slice(r);
        }
        Ok(Self { m, cells })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn get(&self, p: usize, q: usize) -> f64 {
        self.cells[p * self.m + q]
    }

    pub(crate) fn bump(&mut self, p: usize, q: usize) {
        self.cells[p * self.m + q] += 1.0;
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.cells.chunks_exact(self.m).map(<[f64]>::to_vec).collect()
    }

    pub fn total(&self) -> f64 {
        self.cells.iter().sum()
    }

    pub fn trace(&self) -> f64 {
        (0..self.m).map(|i| self.get(i, i)).sum()
    }

    pub fn row_sum(&self, p: usize) -> f64 {
        (0..self.m).map(|q| self.get(p, q)).sum()
    }

    pub fn col_sum(&self, q: usize) -> f64 {
        (0..self.m).map(|p| self.get(p, q)).sum()
    }

    pub fn is_count_valued(&self) -> bool {
        self.cells.iter().all(|c| c.fract() == 0.0)
    }

    /// Cell-wise sum of two matrices of the same size.
    pub fn add(&self, other: &Self) -> Result<Self> {
        check_dim(self.m, other.m, "confusion matrix size")?;
        Ok(Self {
            m: self.m,
            cells: self.cells.iter().zip(&other.cells).map(|(a, b)| a + b).collect(),
        })
    }
}

impl TryFrom<Vec<Vec<f64>>> for ConfusionMatrix {
    type Error = FusionError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        ConfusionMatrix::new(rows)
    }
}

impl From<ConfusionMatrix> for Vec<Vec<f64>> {
    fn from(c: ConfusionMatrix) -> Self {
        c.to_rows()
    }
}

/// One weight per classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Self {
        Self(weights)
    }

    pub fn uniform(k: usize, value: f64) -> Self {
        Self(vec![value; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Restricts to the given classifier indices, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self(indices.iter().map(|&i| self.0[i]).collect())
    }
}

impl From<Vec<f64>> for WeightVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Decision vectors of a classifier pool over one data split.
///
/// Every classifier covers the same samples in the same order. Storage is
/// flat: classifier-major, then sample, then class.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    m: usize,
    classifier_ids: Vec<String>,
    sample_ids: Vec<String>,
    labels: Option<Vec<usize>>,
    probs: Vec<f64>,
}

impl PredictionSet {
    /// `per_classifier[i][j]` is classifier i's decision vector for sample j.
    pub fn new(
        m: usize,
        classifier_ids: Vec<String>,
        sample_ids: Vec<String>,
        labels: Option<Vec<usize>>,
        per_classifier: Vec<Vec<DecisionVector>>,
    ) -> Result<Self> {
        check_dim(classifier_ids.len(), per_classifier.len(), "classifier count")?;
        let n = sample_ids.len();
        let mut probs = Vec::with_capacity(per_classifier.len() * n * m);
        for vecs in &per_classifier {
            check_dim(n, vecs.len(), "samples per classifier")?;
            for v in vecs {
                check_dim(m, v.m(), "decision vector length")?;
                probs.extend_from_slice(v.as_slice());
            }
        }
        Self::from_flat(m, classifier_ids, sample_ids, labels, probs)
    }

    /// Flat constructor; rows must already be valid decision vectors.
    pub(crate) fn from_flat(
        m: usize,
        classifier_ids: Vec<String>,
        sample_ids: Vec<String>,
        labels: Option<Vec<usize>>,
        probs: Vec<f64>,
    ) -> Result<Self> {
        if m < 2 {
            return Err(FusionError::Schema(format!("need at least 2 classes, got {m}")));
        }
        check_dim(
            classifier_ids.len() * sample_ids.len() * m,
            probs.len(),
            "probability buffer",
        )?;
        if let Some(l) = &labels {
            check_dim(sample_ids.len(), l.len(), "label count")?;
            if let Some(&bad) = l.iter().find(|&&c| c >= m) {
                return Err(FusionError::ClassIndex { index: bad, m });
            }
        }
        let mut seen = HashSet::new();
        for id in &classifier_ids {
            if !seen.insert(id) {
                return Err(FusionError::Config(format!("duplicate classifier id {id:?}")));
            }
        }
        Ok(Self {
            m,
            classifier_ids,
            sample_ids,
            labels,
            probs,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n_classifiers(&self) -> usize {
        self.classifier_ids.len()
    }

    pub fn n_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn classifier_ids(&self) -> &[String] {
        &self.classifier_ids
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Decision vector of `classifier` for `sample`.
    pub fn vector(&self, classifier: usize, sample: usize) -> &[f64] {
        let start = (classifier * self.n_samples() + sample) * self.m;
        &self.probs[start..start + self.m]
    }

    /// Rows of the decision matrix for `sample`, restricted to `subset`.
    pub fn rows_for<'a>(&'a self, sample: usize, subset: &[usize]) -> Vec<&'a [f64]> {
        subset.iter().map(|&c| self.vector(c, sample)).collect()
    }

    pub fn decision_matrix(&self, sample: usize) -> DecisionMatrix {
        let mut data = Vec::with_capacity(self.n_classifiers() * self.m);
        for c in 0..self.n_classifiers() {
            data.extend_from_slice(self.vector(c, sample));
        }
        DecisionMatrix { m: self.m, data }
    }

    /// Argmax prediction of one classifier on every sample.
    pub fn classifier_predictions(&self, classifier: usize) -> Vec<usize> {
        (0..self.n_samples())
            .map(|j| argmax(self.vector(classifier, j)))
            .collect()
    }

    /// Decision vectors of one classifier in sample order.
    pub fn classifier_vectors(&self, classifier: usize) -> Vec<DecisionVector> {
        (0..self.n_samples())
            .map(|j| DecisionVector(self.vector(classifier, j).to_vec()))
            .collect()
    }
}

/// A classifier pool with a validation split (for objective weights) and a
/// test split, sharing one schema and one classifier order.
#[derive(Debug, Clone, PartialEq)]
pub struct Pool {
    pub schema: ClassSchema,
    pub val: PredictionSet,
    pub test: PredictionSet,
}

impl Pool {
    pub fn new(schema: ClassSchema, val: PredictionSet, test: PredictionSet) -> Result<Self> {
        check_dim(schema.m(), val.m(), "validation split vs schema")?;
        check_dim(schema.m(), test.m(), "test split vs schema")?;
        if val.classifier_ids() != test.classifier_ids() {
            return Err(FusionError::Config(
                "validation and test splits list different classifiers".into(),
            ));
        }
        Ok(Self { schema, val, test })
    }

    pub fn k(&self) -> usize {
        self.val.n_classifiers()
    }
}
