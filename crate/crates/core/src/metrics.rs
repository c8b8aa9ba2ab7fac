//! Confusion matrices and the scalar metrics derived from them.

use crate::error::{check_dim, FusionError, Result};
use crate::types::{ConfusionMatrix, CostMatrix};

/// Counts `(truth, predicted)` pairs; row = true class, column = predicted.
pub fn confusion_matrix(predicted: &[usize], truth: &[usize], m: usize) -> Result<ConfusionMatrix> {
    check_dim(truth.len(), predicted.len(), "predictions vs labels")?;
    let mut cm = ConfusionMatrix::zeros(m);
    for (&p, &t) in predicted.iter().zip(truth) {
        for index in [p, t] {
            if index >= m {
                return Err(FusionError::ClassIndex { index, m });
            }
        }
        cm.bump(t, p);
    }
    Ok(cm)
}

/// Cell-wise product of a confusion matrix with a cost matrix.
pub fn cost_adjust(cm: &ConfusionMatrix, cost: &CostMatrix) -> Result<ConfusionMatrix> {
    check_dim(cm.m(), cost.m(), "cost matrix vs confusion matrix")?;
    let rows = (0..cm.m())
        .map(|p| (0..cm.m()).map(|q| cm.get(p, q) * cost.get(p, q)).collect())
        .collect();
    ConfusionMatrix::new(rows)
}

fn nonzero_total(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total > 0.0 {
        Ok(total)
    } else {
        Err(FusionError::Empty("confusion matrix has zero total"))
    }
}

/// Micro-averaged F1, treating (possibly weighted) cells as fractional counts
/// in the usual TP/FP/FN aggregation over one-vs-rest problems.
pub fn micro_f1(cm: &ConfusionMatrix) -> Result<f64> {
    nonzero_total(cm)?;
    let m = cm.m();
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for c in 0..m {
        let hit = cm.get(c, c);
        tp += hit;
        fp += (0..m).filter(|&p| p != c).map(|p| cm.get(p, c)).sum::<f64>();
        fn_ += (0..m).filter(|&q| q != c).map(|q| cm.get(c, q)).sum::<f64>();
    }
    Ok(2.0 * tp / (2.0 * tp + fp + fn_))
}

/// Closed form of [`micro_f1`]: trace over total.
pub fn micro_f1_closed_form(cm: &ConfusionMatrix) -> Result<f64> {
    let total = nonzero_total(cm)?;
    Ok(cm.trace() / total)
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = nonzero_total(cm)?;
    Ok(cm.trace() / total)
}

/// Sum of the item-wise product of `cm` and `cost`.
pub fn total_cost(cm: &ConfusionMatrix, cost: &CostMatrix) -> Result<f64> {
    check_dim(cm.m(), cost.m(), "cost matrix vs confusion matrix")?;
    Ok(cm.cells().iter().zip(cost.cells()).map(|(a, b)| a * b).sum())
}

/// TP / (TP + FN) for class `c`; `None` when the class has no true samples.
pub fn sensitivity(cm: &ConfusionMatrix, c: usize) -> Option<f64> {
    if c >= cm.m() {
        return None;
    }
    let row = cm.row_sum(c);
    (row > 0.0).then(|| cm.get(c, c) / row)
}

/// TN / (TN + FP) for class `c`; `None` when every sample belongs to `c`.
pub fn specificity(cm: &ConfusionMatrix, c: usize) -> Option<f64> {
    if c >= cm.m() {
        return None;
    }
    let hit = cm.get(c, c);
    let fp = cm.col_sum(c) - hit;
    let tn = cm.total() - cm.row_sum(c) - cm.col_sum(c) + hit;
    let negatives = tn + fp;
    (negatives > 0.0).then(|| tn / negatives)
}
