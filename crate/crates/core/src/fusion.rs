//! Fusion of a decision matrix into a single class decision.
//!
//! Weighted methods sum `w_i * p_i` per class and take the argmax, lowest
//! class index on ties. Fused scores are left unnormalized.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costmat::uniform_cost_matrix;
use crate::error::{check_dim, FusionError, Result};
use crate::types::{argmax, ClassSchema, ConfusionMatrix, CostMatrix, DecisionMatrix, PredictionSet, WeightVector};
use crate::weights::{check_alpha, combine_weights, objective_weights, subjective_from_rows, ObjectiveWeightReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedDecision {
    pub predicted_class: usize,
    pub fused_scores: Vec<f64>,
    pub weights_used: WeightVector,
}

impl FusedDecision {
    /// Fused scores rescaled to sum to one, for display.
    pub fn normalized_scores(&self) -> Vec<f64> {
        let total: f64 = self.fused_scores.iter().sum();
        if total > 0.0 {
            self.fused_scores.iter().map(|s| s / total).collect()
        } else {
            self.fused_scores.clone()
        }
    }
}

fn check_rows(rows: &[&[f64]]) -> Result<usize> {
    let m = rows.first().ok_or(FusionError::Empty("decision matrix rows"))?.len();
    for r in rows {
        check_dim(m, r.len(), "decision matrix row length")?;
    }
    Ok(m)
}

pub(crate) fn fuse_weighted_rows(rows: &[&[f64]], w: WeightVector) -> Result<FusedDecision> {
    let m = check_rows(rows)?;
    check_dim(rows.len(), w.len(), "weights vs classifiers")?;
    if w.as_slice().iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(FusionError::Weights("weights must be finite and non-negative".into()));
    }
    if w.as_slice().iter().all(|&x| x == 0.0) {
        return Err(FusionError::Weights("all weights are zero".into()));
    }
    let mut scores = vec![0.0; m];
    for (row, &wi) in rows.iter().zip(w.as_slice()) {
        for (s, p) in scores.iter_mut().zip(row.iter()) {
            *s += wi * p;
        }
    }
    Ok(FusedDecision {
        predicted_class: argmax(&scores),
        fused_scores: scores,
        weights_used: w,
    })
}

pub(crate) fn fuse_average_rows(rows: &[&[f64]]) -> Result<FusedDecision> {
    let k = rows.len();
    if k == 0 {
        return Err(FusionError::Empty("decision matrix rows"));
    }
    fuse_weighted_rows(rows, WeightVector::uniform(k, 1.0 / k as f64))
}

pub(crate) fn fuse_max_voting_rows(rows: &[&[f64]]) -> Result<FusedDecision> {
    let m = check_rows(rows)?;
    let mut votes = vec![0.0; m];
    let mut mass = vec![0.0; m];
    for r in rows {
        votes[argmax(r)] += 1.0;
        for (acc, p) in mass.iter_mut().zip(r.iter()) {
            *acc += p;
        }
    }
    let top = votes.iter().copied().fold(0.0, f64::max);
    let mut winner = None;
    for c in (0..m).filter(|&c| votes[c] == top) {
        match winner {
            Some(w) if mass[c] <= mass[w] => {}
            _ => winner = Some(c),
        }
    }
    Ok(FusedDecision {
        predicted_class: winner.expect("at least one class holds the top vote"),
        fused_scores: votes,
        weights_used: WeightVector::uniform(rows.len(), 1.0),
    })
}

pub(crate) fn fuse_active_rows(rows: &[&[f64]], objective: &WeightVector, alpha: f64) -> Result<FusedDecision> {
    check_dim(rows.len(), objective.len(), "objective weights vs classifiers")?;
    let s = subjective_from_rows(rows)?;
    let w = combine_weights(objective, &s, alpha)?;
    fuse_weighted_rows(rows, w)
}

pub fn fuse_weighted(matrix: &DecisionMatrix, w: &WeightVector) -> Result<FusedDecision> {
    fuse_weighted_rows(&matrix.row_slices(), w.clone())
}

pub fn fuse_average(matrix: &DecisionMatrix) -> Result<FusedDecision> {
    fuse_average_rows(&matrix.row_slices())
}

/// One vote per classifier for its own argmax. Class ties go to the larger
/// summed posterior, then to the lower index. Scores are vote counts.
pub fn fuse_max_voting(matrix: &DecisionMatrix) -> Result<FusedDecision> {
    fuse_max_voting_rows(&matrix.row_slices())
}

/// Weighted fusion with `w = alpha * O + (1 - alpha) * S`, where `S` is the
/// per-sample subjective weight vector of `matrix`.
pub fn fuse_active(matrix: &DecisionMatrix, objective: &WeightVector, alpha: f64) -> Result<FusedDecision> {
    fuse_active_rows(&matrix.row_slices(), objective, alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMethod {
    MaxVoting,
    Average,
    Af,
    CsAf,
}

impl FusionMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::MaxVoting => "max-voting",
            Self::Average => "average",
            Self::Af => "af",
            Self::CsAf => "cs-af",
        }
    }
}

impl fmt::Display for FusionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FusionMethod {
    type Err = FusionError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "max-voting" => Ok(Self::MaxVoting),
            "average" => Ok(Self::Average),
            "af" => Ok(Self::Af),
            "cs-af" => Ok(Self::CsAf),
            other => Err(FusionError::Config(format!(
                "unknown fusion method {other:?} (expected max-voting, average, af or cs-af)"
            ))),
        }
    }
}

/// A configured fusion method. Active engines carry frozen objective weights;
/// AF is CS-AF whose objective weights were built with the all-ones cost
/// matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionEngine {
    method: FusionMethod,
    schema: ClassSchema,
    objective: Option<ObjectiveWeightReport>,
    alpha: f64,
}

impl FusionEngine {
    pub fn max_voting(schema: ClassSchema) -> Self {
        Self {
            method: FusionMethod::MaxVoting,
            schema,
            objective: None,
            alpha: 0.0,
        }
    }

    pub fn average(schema: ClassSchema) -> Self {
        Self {
            method: FusionMethod::Average,
            schema,
            objective: None,
            alpha: 0.0,
        }
    }

    pub fn af(schema: ClassSchema, val_cms: &[ConfusionMatrix], alpha: f64) -> Result<Self> {
        let uniform = uniform_cost_matrix(schema.m())?;
        Self::active(FusionMethod::Af, schema, val_cms, &uniform, alpha)
    }

    pub fn cs_af(schema: ClassSchema, val_cms: &[ConfusionMatrix], cost: &CostMatrix, alpha: f64) -> Result<Self> {
        Self::active(FusionMethod::CsAf, schema, val_cms, cost, alpha)
    }

    fn active(
        method: FusionMethod,
        schema: ClassSchema,
        val_cms: &[ConfusionMatrix],
        cost: &CostMatrix,
        alpha: f64,
    ) -> Result<Self> {
        check_alpha(alpha)?;
        check_dim(schema.m(), cost.m(), "cost matrix vs schema")?;
        let report = objective_weights(val_cms, cost)?;
        Ok(Self {
            method,
            schema,
            objective: Some(report),
            alpha,
        })
    }

    /// Active engine with caller-supplied objective weights.
    pub fn with_objective(
        method: FusionMethod,
        schema: ClassSchema,
        objective: WeightVector,
        alpha: f64,
    ) -> Result<Self> {
        check_alpha(alpha)?;
        if !matches!(method, FusionMethod::Af | FusionMethod::CsAf) {
            return Err(FusionError::Config(format!("{method} does not use objective weights")));
        }
        if objective.as_slice().iter().any(|w| !(*w > 0.0 && *w <= 1.0)) {
            return Err(FusionError::Weights("objective weights must lie in (0, 1]".into()));
        }
        let entries = objective
            .as_slice()
            .iter()
            .map(|&w| {
                let empty = ConfusionMatrix::zeros(schema.m());
                crate::weights::ObjectiveWeightEntry {
                    validation: empty.clone(),
                    adjusted: empty,
                    micro_f1: w,
                    weight: w,
                }
            })
            .collect();
        Ok(Self {
            method,
            schema,
            objective: Some(ObjectiveWeightReport { entries }),
            alpha,
        })
    }

    pub fn method(&self) -> FusionMethod {
        self.method
    }

    pub fn schema(&self) -> &ClassSchema {
        &self.schema
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn objective_report(&self) -> Option<&ObjectiveWeightReport> {
        self.objective.as_ref()
    }

    pub fn objective_weights(&self) -> Option<WeightVector> {
        self.objective.as_ref().map(ObjectiveWeightReport::weights)
    }

    /// Number of classifiers the engine was trained for, if it is active.
    pub fn pool_size(&self) -> Option<usize> {
        self.objective.as_ref().map(|r| r.entries.len())
    }

    /// Fuses raw rows; `objective` must line up with `rows` for active methods.
    pub fn fuse_rows(&self, rows: &[&[f64]], objective: Option<&WeightVector>) -> Result<FusedDecision> {
        match self.method {
            FusionMethod::MaxVoting => fuse_max_voting_rows(rows),
            FusionMethod::Average => fuse_average_rows(rows),
            FusionMethod::Af | FusionMethod::CsAf => {
                let o = objective.ok_or(FusionError::Config("active fusion without objective weights".into()))?;
                fuse_active_rows(rows, o, self.alpha)
            }
        }
    }

    pub fn fuse(&self, matrix: &DecisionMatrix) -> Result<FusedDecision> {
        check_dim(self.schema.m(), matrix.m(), "decision matrix vs schema")?;
        self.fuse_rows(&matrix.row_slices(), self.objective_weights().as_ref())
    }

    /// Fuses every sample of `preds`, preserving sample order.
    pub fn predict_batch(&self, preds: &PredictionSet) -> Result<Vec<FusedDecision>> {
        let all: Vec<usize> = (0..preds.n_classifiers()).collect();
        self.predict_subset(preds, &all)
    }

    /// Like [`predict_batch`](Self::predict_batch) but fusing only the pool
    /// classifiers at `subset`.
    pub fn predict_subset(&self, preds: &PredictionSet, subset: &[usize]) -> Result<Vec<FusedDecision>> {
        check_dim(self.schema.m(), preds.m(), "prediction set vs schema")?;
        if let Some(k) = self.pool_size() {
            check_dim(k, preds.n_classifiers(), "engine pool vs prediction set")?;
        }
        if let Some(&bad) = subset.iter().find(|&&c| c >= preds.n_classifiers()) {
            return Err(FusionError::Config(format!("classifier index {bad} outside the pool")));
        }
        let objective = self.objective_weights().map(|o| o.select(subset));
        (0..preds.n_samples())
            .into_par_iter()
            .map(|j| self.fuse_rows(&preds.rows_for(j, subset), objective.as_ref()))
            .collect()
    }
}
