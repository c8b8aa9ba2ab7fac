//! Seeded generator for synthetic classifier pools.
//!
//! Each classifier gets a target accuracy drawn once from the configured
//! range. For every sample it picks a target class (the true class with that
//! probability, otherwise a wrong one) and emits `p_l ∝ g_l + β·[l = target]`
//! with `g_l ~ U(0, 1)`. Using a larger `β` for correct targets than for wrong
//! ones makes confidence track correctness.
//!
//! Every random draw comes from a substream keyed by
//! `(seed, tag, classifier, split, sample)`, so output is independent of
//! generation order and thread count.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{FusionError, Result};
use crate::stream::substream;
use crate::types::{validate_decision_vector, ClassSchema, PredictionSet, RENORMALIZED_TOLERANCE};

const TAG_ACCURACY: u64 = 1;
const TAG_LABEL: u64 = 2;
const TAG_VECTOR: u64 = 3;

const SPLIT_VAL: u64 = 0;
const SPLIT_TEST: u64 = 1;

/// Extra probability that `classifier` predicts `to` for samples of class `from`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfusionBias {
    pub classifier: usize,
    pub from: usize,
    pub to: usize,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPoolSpec {
    pub seed: u64,
    pub k: usize,
    pub schema: ClassSchema,
    pub n_val: usize,
    pub n_test: usize,
    pub accuracy_range: (f64, f64),
    pub sharpness_correct: f64,
    pub sharpness_wrong: f64,
    pub confusion_bias: Vec<ConfusionBias>,
}

impl SyntheticPoolSpec {
    pub fn new(seed: u64, k: usize, schema: ClassSchema, n_val: usize, n_test: usize) -> Self {
        Self {
            seed,
            k,
            schema,
            n_val,
            n_test,
            accuracy_range: (0.55, 0.85),
            sharpness_correct: 4.0,
            sharpness_wrong: 1.5,
            confusion_bias: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(FusionError::Config(msg));
        if self.k == 0 {
            return bad("classifier count must be at least 1".into());
        }
        let (lo, hi) = self.accuracy_range;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return bad(format!("accuracy range [{lo}, {hi}] must satisfy 0 < lo <= hi <= 1"));
        }
        for (name, s) in [("correct", self.sharpness_correct), ("wrong", self.sharpness_wrong)] {
            if !(s.is_finite() && s > 0.0) {
                return bad(format!("sharpness for {name} targets must be positive, got {s}"));
            }
        }
        let m = self.schema.m();
        for b in &self.confusion_bias {
            if b.classifier >= self.k || b.from >= m || b.to >= m || b.from == b.to {
                return bad(format!(
                    "confusion bias {b:?} does not fit a pool of {} classifiers and {m} classes",
                    self.k
                ));
            }
            if !(0.0..=1.0).contains(&b.probability) {
                return bad(format!("confusion bias probability {} outside [0, 1]", b.probability));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPool {
    pub schema: ClassSchema,
    pub val: PredictionSet,
    pub test: PredictionSet,
    /// Target accuracy drawn for each classifier.
    pub accuracies: Vec<f64>,
}

fn classifier_accuracy(spec: &SyntheticPoolSpec, classifier: usize) -> f64 {
    let (lo, hi) = spec.accuracy_range;
    let u: f64 = substream(spec.seed, &[TAG_ACCURACY, classifier as u64]).random();
    lo + (hi - lo) * u
}

fn draw_labels(spec: &SyntheticPoolSpec, split: u64, n: usize) -> Vec<usize> {
    let m = spec.schema.m();
    (0..n)
        .map(|j| substream(spec.seed, &[TAG_LABEL, split, j as u64]).random_range(0..m))
        .collect()
}

fn draw_vector(
    spec: &SyntheticPoolSpec,
    classifier: usize,
    accuracy: f64,
    split: u64,
    sample: usize,
    truth: usize,
    out: &mut [f64],
) {
    let m = out.len();
    let mut rng = substream(spec.seed, &[TAG_VECTOR, classifier as u64, split, sample as u64]);
    let mut target = None;
    for b in spec
        .confusion_bias
        .iter()
        .filter(|b| b.classifier == classifier && b.from == truth)
    {
        let u: f64 = rng.random();
        if target.is_none() && u < b.probability {
            target = Some(b.to);
        }
    }
    let u: f64 = rng.random();
    let wrong = rng.random_range(0..m - 1);
    let target = target.unwrap_or(if u < accuracy {
        truth
    } else if wrong >= truth {
        wrong + 1
    } else {
        wrong
    });
    let beta = if target == truth {
        spec.sharpness_correct
    } else {
        spec.sharpness_wrong
    };
    for (l, slot) in out.iter_mut().enumerate() {
        let g: f64 = rng.random();
        *slot = g + if l == target { beta } else { 0.0 };
    }
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
}

fn build_split(
    spec: &SyntheticPoolSpec,
    accuracies: &[f64],
    split: u64,
    prefix: &str,
    n: usize,
) -> Result<PredictionSet> {
    let m = spec.schema.m();
    let labels = draw_labels(spec, split, n);
    let blocks: Vec<Vec<f64>> = (0..spec.k)
        .into_par_iter()
        .map(|c| {
            let mut block = vec![0.0; n * m];
            for (j, chunk) in block.chunks_exact_mut(m).enumerate() {
                draw_vector(spec, c, accuracies[c], split, j, labels[j], chunk);
            }
            block
        })
        .collect();
    let probs: Vec<f64> = blocks.concat();
    for row in probs.chunks_exact(m) {
        validate_decision_vector(row, RENORMALIZED_TOLERANCE)?;
    }
    PredictionSet::from_flat(
        m,
        classifier_ids(spec.k),
        (0..n).map(|j| format!("{prefix}_{j:05}")).collect(),
        Some(labels),
        probs,
    )
}

pub fn classifier_ids(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("clf_{i:03}")).collect()
}

pub fn generate_pool(spec: &SyntheticPoolSpec) -> Result<SyntheticPool> {
    spec.validate()?;
    let accuracies: Vec<f64> = (0..spec.k).map(|c| classifier_accuracy(spec, c)).collect();
    let val = build_split(spec, &accuracies, SPLIT_VAL, "val", spec.n_val)?;
    let test = build_split(spec, &accuracies, SPLIT_TEST, "test", spec.n_test)?;
    Ok(SyntheticPool {
        schema: spec.schema.clone(),
        val,
        test,
        accuracies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{accuracy, confusion_matrix};

    fn empirical_accuracy(ps: &PredictionSet, c: usize) -> f64 {
        let cm = confusion_matrix(&ps.classifier_predictions(c), ps.labels().unwrap(), ps.m()).unwrap();
        accuracy(&cm).unwrap()
    }

    #[test]
    fn forced_correct_limit() {
        let mut spec = SyntheticPoolSpec::new(3, 4, ClassSchema::isic2019(), 50, 200);
        spec.accuracy_range = (1.0, 1.0);
        spec.sharpness_correct = 1e6;
        let pool = generate_pool(&spec).unwrap();
        for c in 0..4 {
            assert_eq!(empirical_accuracy(&pool.test, c), 1.0);
        }
    }

    #[test]
    fn accuracy_matches_target() {
        let mut spec = SyntheticPoolSpec::new(11, 3, ClassSchema::isic2019(), 10, 10_000);
        spec.accuracy_range = (0.7, 0.7);
        spec.sharpness_correct = 3.0;
        let pool = generate_pool(&spec).unwrap();
        for c in 0..3 {
            let acc = empirical_accuracy(&pool.test, c);
            assert!((acc - 0.7).abs() <= 0.02, "classifier {c}: {acc}");
        }
    }

    #[test]
    fn same_seed_same_pool() {
        let spec = SyntheticPoolSpec::new(5, 6, ClassSchema::isic2019(), 40, 60);
        let a = generate_pool(&spec).unwrap();
        let b = generate_pool(&spec).unwrap();
        assert_eq!(a, b);
        let mut other = spec.clone();
        other.seed = 6;
        assert_ne!(generate_pool(&other).unwrap().test, a.test);
    }

    #[test]
    fn bias_shifts_errors() {
        let schema = ClassSchema::isic2019();
        let mel = schema.index_of("MEL").unwrap();
        let bkl = schema.index_of("BKL").unwrap();
        let mut spec = SyntheticPoolSpec::new(9, 2, schema, 10, 4000);
        spec.accuracy_range = (0.8, 0.8);
        spec.confusion_bias = vec![ConfusionBias {
            classifier: 1,
            from: mel,
            to: bkl,
            probability: 0.5,
        }];
        let pool = generate_pool(&spec).unwrap();
        let labels = pool.test.labels().unwrap();
        let cm0 = confusion_matrix(&pool.test.classifier_predictions(0), labels, 8).unwrap();
        let cm1 = confusion_matrix(&pool.test.classifier_predictions(1), labels, 8).unwrap();
        assert!(cm1.get(mel, bkl) > 3.0 * cm0.get(mel, bkl));
    }

    #[test]
    fn invalid_specs_rejected() {
        let base = SyntheticPoolSpec::new(1, 2, ClassSchema::isic2019(), 1, 1);
        let mut s = base.clone();
        s.accuracy_range = (0.0, 0.5);
        assert!(generate_pool(&s).is_err());
        s = base.clone();
        s.sharpness_wrong = 0.0;
        assert!(generate_pool(&s).is_err());
        s = base.clone();
        s.confusion_bias = vec![ConfusionBias {
            classifier: 2,
            from: 0,
            to: 1,
            probability: 0.1,
        }];
        assert!(generate_pool(&s).is_err());
        s = base;
        s.confusion_bias = vec![ConfusionBias {
            classifier: 0,
            from: 1,
            to: 1,
            probability: 0.1,
        }];
        assert!(generate_pool(&s).is_err());
    }
}
