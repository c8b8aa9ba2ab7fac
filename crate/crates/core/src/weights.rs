//! Objective (per classifier) and subjective (per classifier, per sample)
//! fusion weights.
//!
//! Objective weights are fixed once from validation confusion matrices after
//! cost adjustment. Subjective weights measure how concentrated each
//! classifier's decision vector is on the current sample, min-max normalized
//! across the pool.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, FusionError, Result};
use crate::metrics::{cost_adjust, micro_f1};
use crate::types::{ConfusionMatrix, CostMatrix, DecisionMatrix, WeightVector};

/// Objective weights never drop below this, keeping them in (0, 1].
pub const OBJECTIVE_FLOOR: f64 = 1e-6;
/// Individuality spread below which min-max normalization is degenerate.
pub const DEGENERATE_SPREAD: f64 = 1e-12;
pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveWeightEntry {
    pub validation: ConfusionMatrix,
    pub adjusted: ConfusionMatrix,
    pub micro_f1: f64,
    pub weight: f64,
}

/// Audit trail of the objective-weight computation, one entry per classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveWeightReport {
    pub entries: Vec<ObjectiveWeightEntry>,
}

impl ObjectiveWeightReport {
    pub fn weights(&self) -> WeightVector {
        self.entries.iter().map(|e| e.weight).collect::<Vec<_>>().into()
    }
}

pub fn objective_weights(val_cms: &[ConfusionMatrix], cost: &CostMatrix) -> Result<ObjectiveWeightReport> {
    if val_cms.is_empty() {
        return Err(FusionError::Empty("validation confusion matrices"));
    }
    let entries = val_cms
        .iter()
        .map(|cm| {
            let adjusted = cost_adjust(cm, cost)?;
            let f1 = micro_f1(&adjusted)?;
            Ok(ObjectiveWeightEntry {
                validation: cm.clone(),
                adjusted,
                micro_f1: f1,
                weight: f1.max(OBJECTIVE_FLOOR),
            })
        })
        .collect::<Result<_>>()?;
    Ok(ObjectiveWeightReport { entries })
}

/// Mean gap between the largest posterior and every entry of `v`, scaled by
/// `1 / (m - 1)`: 0 for a uniform vector, 1 for a one-hot vector.
pub fn individuality(v: &[f64]) -> Result<f64> {
    let m = v.len();
    if m < 2 {
        return Err(FusionError::Dimension {
            expected: 2,
            actual: m,
            context: "individuality needs at least 2 classes",
        });
    }
    let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let gap: f64 = v.iter().map(|p| top - p).sum();
    Ok(gap / (m - 1) as f64)
}

pub(crate) fn subjective_from_rows(rows: &[&[f64]]) -> Result<WeightVector> {
    if rows.is_empty() {
        return Err(FusionError::Empty("decision matrix rows"));
    }
    let ind = rows.iter().map(|r| individuality(r)).collect::<Result<Vec<_>>>()?;
    let lo = ind.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ind.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let spread = hi - lo;
    let s = if spread <= DEGENERATE_SPREAD {
        vec![1.0; ind.len()]
    } else {
        ind.iter().map(|i| (i - lo) / spread).collect()
    };
    Ok(s.into())
}

/// Per-sample min-max normalization of each classifier's individuality.
/// When every classifier is equally concentrated all weights are 1.
pub fn subjective_weights(matrix: &DecisionMatrix) -> Result<WeightVector> {
    subjective_from_rows(&matrix.row_slices())
}

/// `alpha * O + (1 - alpha) * S`.
pub fn combine_weights(objective: &WeightVector, subjective: &WeightVector, alpha: f64) -> Result<WeightVector> {
    check_dim(objective.len(), subjective.len(), "objective vs subjective weights")?;
    check_alpha(alpha)?;
    Ok(objective
        .as_slice()
        .iter()
        .zip(subjective.as_slice())
        .map(|(o, s)| alpha * o + (1.0 - alpha) * s)
        .collect::<Vec<_>>()
        .into())
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(FusionError::Config(format!("alpha {alpha} outside [0, 1]")))
    }
}
