//! Random-subset experiments over a classifier pool.
//!
//! For every subset size `N` and repetition `r` a subset of `N` classifiers
//! is drawn without replacement from substream `(seed, N, r)`, and every
//! method is evaluated on that same subset. Results are folded in
//! `(N, r)` order, so reports do not depend on thread scheduling.

use std::fmt;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, FusionError, Result};
use crate::fusion::{FusionEngine, FusionMethod};
use crate::metrics::{accuracy, confusion_matrix, sensitivity, specificity, total_cost};
use crate::stream::substream;
use crate::types::{ConfusionMatrix, CostMatrix, Pool, PredictionSet};
use crate::weights::{ObjectiveWeightReport, DEFAULT_ALPHA};

/// Subset sizes used when none are given.
pub const DEFAULT_N_LIST: [usize; 12] = [8, 16, 24, 32, 40, 48, 56, 64, 72, 80, 88, 96];
pub const DEFAULT_REPETITIONS: usize = 100;

const TAG_SUBSET: u64 = 11;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedCost {
    pub name: String,
    pub matrix: CostMatrix,
}

impl NamedCost {
    pub fn new(name: impl Into<String>, matrix: CostMatrix) -> Self {
        Self {
            name: name.into(),
            matrix,
        }
    }
}

/// A fusion method as run by the harness. CS-AF names the cost matrix its
/// objective weights are built from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodSpec {
    MaxVoting,
    Average,
    Af,
    CsAf { cost: String },
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::MaxVoting => f.write_str("max-voting"),
            Self::Average => f.write_str("average"),
            Self::Af => f.write_str("af"),
            Self::CsAf { cost } => write!(f, "cs-af({cost})"),
        }
    }
}

impl MethodSpec {
    pub fn method(&self) -> FusionMethod {
        match self {
            Self::MaxVoting => FusionMethod::MaxVoting,
            Self::Average => FusionMethod::Average,
            Self::Af => FusionMethod::Af,
            Self::CsAf { .. } => FusionMethod::CsAf,
        }
    }
}

/// Validation confusion matrix of every pool classifier.
pub fn validation_confusions(val: &PredictionSet) -> Result<Vec<ConfusionMatrix>> {
    let labels = val
        .labels()
        .ok_or(FusionError::Config("validation split has no labels".into()))?;
    (0..val.n_classifiers())
        .map(|c| confusion_matrix(&val.classifier_predictions(c), labels, val.m()))
        .collect()
}

/// Builds the engine for `spec` over the full pool.
pub fn build_engine(pool: &Pool, spec: &MethodSpec, costs: &[NamedCost], alpha: f64) -> Result<FusionEngine> {
    let schema = pool.schema.clone();
    match spec {
        MethodSpec::MaxVoting => Ok(FusionEngine::max_voting(schema)),
        MethodSpec::Average => Ok(FusionEngine::average(schema)),
        MethodSpec::Af => FusionEngine::af(schema, &validation_confusions(&pool.val)?, alpha),
        MethodSpec::CsAf { cost } => {
            let c = find_cost(costs, cost)?;
            FusionEngine::cs_af(schema, &validation_confusions(&pool.val)?, &c.matrix, alpha)
        }
    }
}

fn find_cost<'a>(costs: &'a [NamedCost], name: &str) -> Result<&'a NamedCost> {
    costs
        .iter()
        .find(|c| c.name == name)
        .ok_or_else(|| FusionError::Config(format!("no cost matrix named {name:?}")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub methods: Vec<MethodSpec>,
    pub n_list: Vec<usize>,
    pub repetitions: usize,
    pub seed: u64,
    pub alpha: f64,
}

impl ExperimentConfig {
    /// Default subset sizes, 100 repetitions, alpha 0.5.
    pub fn with_methods(methods: Vec<MethodSpec>) -> Self {
        Self {
            methods,
            n_list: DEFAULT_N_LIST.to_vec(),
            repetitions: DEFAULT_REPETITIONS,
            seed: 0,
            alpha: DEFAULT_ALPHA,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    /// Mean and sample standard deviation (zero for a single value).
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.windows(2).all(|w| w[0] == w[1]) {
            return Self {
                mean: values.first().copied().unwrap_or(f64::NAN),
                std: 0.0,
            };
        }
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: String,
    pub accuracy: f64,
    /// Aligned with [`ExperimentReport::cost_matrices`].
    pub total_costs: Vec<f64>,
    pub sensitivity: Vec<Option<f64>>,
    pub specificity: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionLog {
    pub n: usize,
    pub repetition: usize,
    pub subset: Vec<usize>,
    pub results: Vec<MethodResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub method: String,
    pub n: usize,
    pub accuracy: Stat,
    /// Aligned with [`ExperimentReport::cost_matrices`].
    pub total_cost: Vec<Stat>,
    /// Per-class mean over repetitions where the rate is defined.
    pub sensitivity_mean: Vec<Option<f64>>,
    pub specificity_mean: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub classes: Vec<String>,
    pub methods: Vec<String>,
    pub cost_matrices: Vec<String>,
    pub n_list: Vec<usize>,
    pub repetitions: usize,
    pub seed: u64,
    pub alpha: f64,
    pub curves: Vec<CurvePoint>,
    pub log: Vec<RepetitionLog>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrendViolation {
    pub method: String,
    pub from_n: usize,
    pub to_n: usize,
    pub drop: f64,
}

impl ExperimentReport {
    pub fn curve(&self, method: &str, n: usize) -> Option<&CurvePoint> {
        self.curves.iter().find(|c| c.method == method && c.n == n)
    }

    pub fn cost_index(&self, name: &str) -> Option<usize> {
        self.cost_matrices.iter().position(|c| c == name)
    }

    /// Places where a method's mean accuracy falls by more than `slack`
    /// between consecutive subset sizes.
    pub fn accuracy_trend_violations(&self, slack: f64) -> Vec<TrendViolation> {
        let mut sizes = self.n_list.clone();
        sizes.sort_unstable();
        let mut out = Vec::new();
        for method in &self.methods {
            for pair in sizes.windows(2) {
                let (Some(a), Some(b)) = (self.curve(method, pair[0]), self.curve(method, pair[1])) else {
                    continue;
                };
                let drop = a.accuracy.mean - b.accuracy.mean;
                if drop > slack {
                    out.push(TrendViolation {
                        method: method.clone(),
                        from_n: pair[0],
                        to_n: pair[1],
                        drop,
                    });
                }
            }
        }
        out
    }
}

/// Classifier subset for `(n, repetition)`, sorted ascending.
pub fn draw_subset(seed: u64, k: usize, n: usize, repetition: usize) -> Vec<usize> {
    let mut rng = substream(seed, &[TAG_SUBSET, n as u64, repetition as u64]);
    let mut idx = sample(&mut rng, k, n).into_vec();
    idx.sort_unstable();
    idx
}

fn evaluate(
    engine: &FusionEngine,
    label: String,
    test: &PredictionSet,
    labels: &[usize],
    subset: &[usize],
    costs: &[NamedCost],
) -> Result<MethodResult> {
    let decisions = engine.predict_subset(test, subset)?;
    let predicted: Vec<usize> = decisions.iter().map(|d| d.predicted_class).collect();
    let cm = confusion_matrix(&predicted, labels, test.m())?;
    let m = test.m();
    Ok(MethodResult {
        method: label,
        accuracy: accuracy(&cm)?,
        total_costs: costs
            .iter()
            .map(|c| total_cost(&cm, &c.matrix))
            .collect::<Result<_>>()?,
        sensitivity: (0..m).map(|c| sensitivity(&cm, c)).collect(),
        specificity: (0..m).map(|c| specificity(&cm, c)).collect(),
    })
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = values.flatten().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

pub fn run_subset_experiment(pool: &Pool, config: &ExperimentConfig, costs: &[NamedCost]) -> Result<ExperimentReport> {
    if config.methods.is_empty() {
        return Err(FusionError::Config("no fusion methods requested".into()));
    }
    if config.repetitions == 0 {
        return Err(FusionError::Config("repetitions must be at least 1".into()));
    }
    if config.n_list.is_empty() {
        return Err(FusionError::Config("no subset sizes requested".into()));
    }
    crate::weights::check_alpha(config.alpha)?;
    let k = pool.k();
    if let Some(&n) = config.n_list.iter().find(|&&n| n == 0 || n > k) {
        return Err(FusionError::Config(format!("subset size {n} outside 1..={k}")));
    }
    for c in costs {
        check_dim(pool.schema.m(), c.matrix.m(), "cost matrix vs schema")?;
    }
    let labels = pool
        .test
        .labels()
        .ok_or(FusionError::Config("test split has no labels".into()))?;

    let engines: Vec<(String, FusionEngine)> = config
        .methods
        .iter()
        .map(|spec| Ok((spec.to_string(), build_engine(pool, spec, costs, config.alpha)?)))
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> = config
        .n_list
        .iter()
        .flat_map(|&n| (0..config.repetitions).map(move |r| (n, r)))
        .collect();
    let log: Vec<RepetitionLog> = jobs
        .par_iter()
        .map(|&(n, repetition)| {
            let subset = draw_subset(config.seed, k, n, repetition);
            let results = engines
                .iter()
                .map(|(label, engine)| evaluate(engine, label.clone(), &pool.test, labels, &subset, costs))
                .collect::<Result<_>>()?;
            Ok(RepetitionLog {
                n,
                repetition,
                subset,
                results,
            })
        })
        .collect::<Result<_>>()?;

    let m = pool.schema.m();
    let mut curves = Vec::new();
    for (mi, (label, _)) in engines.iter().enumerate() {
        for &n in &config.n_list {
            let runs: Vec<&MethodResult> = log.iter().filter(|l| l.n == n).map(|l| &l.results[mi]).collect();
            let acc: Vec<f64> = runs.iter().map(|r| r.accuracy).collect();
            let total_cost = (0..costs.len())
                .map(|ci| Stat::of(&runs.iter().map(|r| r.total_costs[ci]).collect::<Vec<_>>()))
                .collect();
            curves.push(CurvePoint {
                method: label.clone(),
                n,
                accuracy: Stat::of(&acc),
                total_cost,
                sensitivity_mean: (0..m)
                    .map(|c| mean_defined(runs.iter().map(|r| r.sensitivity[c])))
                    .collect(),
                specificity_mean: (0..m)
                    .map(|c| mean_defined(runs.iter().map(|r| r.specificity[c])))
                    .collect(),
            });
        }
    }

    Ok(ExperimentReport {
        classes: pool.schema.names().to_vec(),
        methods: engines.into_iter().map(|(l, _)| l).collect(),
        cost_matrices: costs.iter().map(|c| c.name.clone()).collect(),
        n_list: config.n_list.clone(),
        repetitions: config.repetitions,
        seed: config.seed,
        alpha: config.alpha,
        curves,
        log,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedValue {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub class: String,
    pub severity_rank: usize,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

/// Evaluation of one engine on a labeled split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub method: String,
    pub alpha: Option<f64>,
    pub n_samples: usize,
    pub accuracy: f64,
    pub total_costs: Vec<NamedValue>,
    pub confusion_matrix: ConfusionMatrix,
    pub per_class: Vec<ClassRow>,
    pub classifier_ids: Vec<String>,
    pub objective_weights: Option<ObjectiveWeightReport>,
}

/// Per-class sensitivity and specificity of `engine` on `preds`, with total
/// cost under each supplied matrix.
pub fn per_class_report(engine: &FusionEngine, preds: &PredictionSet, costs: &[NamedCost]) -> Result<EvaluationReport> {
    let labels = preds
        .labels()
        .ok_or(FusionError::Config("prediction set has no labels".into()))?;
    let decisions = engine.predict_batch(preds)?;
    let predicted: Vec<usize> = decisions.iter().map(|d| d.predicted_class).collect();
    let cm = confusion_matrix(&predicted, labels, preds.m())?;
    let schema = engine.schema();
    let per_class = schema
        .names()
        .iter()
        .enumerate()
        .map(|(c, name)| ClassRow {
            class: name.clone(),
            severity_rank: schema.severity_rank()[c],
            sensitivity: sensitivity(&cm, c),
            specificity: specificity(&cm, c),
        })
        .collect();
    let active = engine.objective_report().is_some();
    Ok(EvaluationReport {
        method: engine.method().to_string(),
        alpha: active.then_some(engine.alpha()),
        n_samples: preds.n_samples(),
        accuracy: accuracy(&cm)?,
        total_costs: costs
            .iter()
            .map(|c| {
                Ok(NamedValue {
                    name: c.name.clone(),
                    value: total_cost(&cm, &c.matrix)?,
                })
            })
            .collect::<Result<_>>()?,
        confusion_matrix: cm,
        per_class,
        classifier_ids: preds.classifier_ids().to_vec(),
        objective_weights: engine.objective_report().cloned(),
    })
}
