//! Cost-sensitive active fusion of multi-classifier posterior outputs.
//!
//! A pool of base classifiers each emits a posterior vector per sample. This
//! crate fuses them with static rules (max voting, averaging) or with active
//! weights that mix a per-classifier objective weight, taken from a
//! cost-adjusted validation confusion matrix, with a per-sample subjective
//! weight reflecting how decisive each classifier is on that sample.
//!
//! Modules:
//! - [`types`]: schema, decision vectors/matrices, cost and confusion matrices
//! - [`costmat`]: cost matrices from a severity ordering
//! - [`metrics`]: accuracy, micro-F1, total cost, sensitivity, specificity
//! - [`weights`]: objective and subjective weights
//! - [`fusion`]: the fusion rules and [`FusionEngine`]
//! - [`synth`]: seeded synthetic classifier pools
//! - [`dataio`]: manifests, CSV formats and reports
//! - [`harness`]: random-subset experiments

pub mod costmat;
pub mod dataio;
pub mod error;
pub mod fusion;
pub mod harness;
pub mod metrics;
pub mod stream;
pub mod synth;
pub mod types;
pub mod weights;

pub use error::{FusionError, ProbabilityViolation, Result};
pub use fusion::{FusedDecision, FusionEngine, FusionMethod};
pub use types::{
    renormalize, validate_decision_vector, ClassSchema, ConfusionMatrix, CostMatrix, DecisionMatrix, DecisionVector,
    Pool, PredictionSet, WeightVector,
};
