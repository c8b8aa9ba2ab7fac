//! Python bindings. Matrices cross the boundary as lists of lists.

use costfuse::costmat::{self, CostMatrixSpec};
use costfuse::fusion::{self, FusedDecision};
use costfuse::{metrics, weights};
use costfuse::{ClassSchema, ConfusionMatrix, CostMatrix, DecisionMatrix, FusionError, WeightVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: FusionError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn cost(rows: Vec<Vec<f64>>) -> PyResult<CostMatrix> {
    CostMatrix::new(rows).map_err(err)
}

fn confusion(rows: Vec<Vec<f64>>) -> PyResult<ConfusionMatrix> {
    ConfusionMatrix::new(rows).map_err(err)
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<DecisionMatrix> {
    DecisionMatrix::from_vecs(rows).map_err(err)
}

fn decision(d: FusedDecision) -> (usize, Vec<f64>) {
    (d.predicted_class, d.fused_scores)
}

#[pyclass(name = "ClassSchema", module = "pycostfuse", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySchema {
    inner: ClassSchema,
}

#[pymethods]
impl PySchema {
    /// `severity` lists the class names from most to least severe.
    #[new]
    fn new(classes: Vec<String>, severity: Vec<String>) -> PyResult<Self> {
        let inner = ClassSchema::from_severity_order(&classes, &severity).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn isic2019() -> Self {
        Self {
            inner: ClassSchema::isic2019(),
        }
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.names().to_vec()
    }

    #[getter]
    fn severity_rank(&self) -> Vec<usize> {
        self.inner.severity_rank().to_vec()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    fn index_of(&self, name: &str) -> Option<usize> {
        self.inner.index_of(name)
    }

    fn reversed(&self) -> Self {
        Self {
            inner: self.inner.reversed(),
        }
    }

    fn __len__(&self) -> usize {
        self.inner.m()
    }

    fn __repr__(&self) -> String {
        format!("ClassSchema({:?})", self.inner.names())
    }
}

#[pyfunction]
#[pyo3(signature = (schema, reverse=false, lo=costmat::DEFAULT_SCALE_MIN, hi=costmat::DEFAULT_SCALE_MAX, round=true))]
fn build_cost_matrix(schema: &PySchema, reverse: bool, lo: f64, hi: f64, round: bool) -> PyResult<Vec<Vec<f64>>> {
    let schema = if reverse {
        schema.inner.reversed()
    } else {
        schema.inner.clone()
    };
    let spec = CostMatrixSpec {
        offdiag_scale_min: lo,
        offdiag_scale_max: hi,
        round_offdiag: round,
        ..CostMatrixSpec::new(schema)
    };
    Ok(costmat::build_cost_matrix(&spec).map_err(err)?.to_rows())
}

#[pyfunction]
fn uniform_cost_matrix(m: usize) -> PyResult<Vec<Vec<f64>>> {
    Ok(costmat::uniform_cost_matrix(m).map_err(err)?.to_rows())
}

#[pyfunction]
fn confusion_matrix(predicted: Vec<usize>, truth: Vec<usize>, m: usize) -> PyResult<Vec<Vec<f64>>> {
    Ok(metrics::confusion_matrix(&predicted, &truth, m).map_err(err)?.to_rows())
}

/// Micro-F1, optionally of the cost-adjusted confusion matrix.
#[pyfunction]
#[pyo3(signature = (cm, cost_matrix=None))]
fn micro_f1(cm: Vec<Vec<f64>>, cost_matrix: Option<Vec<Vec<f64>>>) -> PyResult<f64> {
    let mut cm = confusion(cm)?;
    if let Some(c) = cost_matrix {
        cm = metrics::cost_adjust(&cm, &cost(c)?).map_err(err)?;
    }
    metrics::micro_f1(&cm).map_err(err)
}

#[pyfunction]
fn total_cost(cm: Vec<Vec<f64>>, cost_matrix: Vec<Vec<f64>>) -> PyResult<f64> {
    metrics::total_cost(&confusion(cm)?, &cost(cost_matrix)?).map_err(err)
}

#[pyfunction]
fn sensitivity(cm: Vec<Vec<f64>>, class_index: usize) -> PyResult<Option<f64>> {
    Ok(metrics::sensitivity(&confusion(cm)?, class_index))
}

#[pyfunction]
fn specificity(cm: Vec<Vec<f64>>, class_index: usize) -> PyResult<Option<f64>> {
    Ok(metrics::specificity(&confusion(cm)?, class_index))
}

#[pyfunction]
fn individuality(p: Vec<f64>) -> PyResult<f64> {
    weights::individuality(&p).map_err(err)
}

#[pyfunction]
fn subjective_weights(rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    Ok(weights::subjective_weights(&matrix(rows)?).map_err(err)?.into_inner())
}

/// Objective weights from validation confusion matrices. Without a cost
/// matrix, uniform costs are used.
#[pyfunction]
#[pyo3(signature = (val_cms, cost_matrix=None))]
fn objective_weights(val_cms: Vec<Vec<Vec<f64>>>, cost_matrix: Option<Vec<Vec<f64>>>) -> PyResult<Vec<f64>> {
    let cms = val_cms.into_iter().map(confusion).collect::<PyResult<Vec<_>>>()?;
    let m = cms.first().map_or(0, |c| c.m());
    let cost = match cost_matrix {
        Some(c) => cost(c)?,
        None => costmat::uniform_cost_matrix(m).map_err(err)?,
    };
    Ok(weights::objective_weights(&cms, &cost)
        .map_err(err)?
        .weights()
        .into_inner())
}

#[pyfunction]
#[pyo3(signature = (objective, subjective, alpha=weights::DEFAULT_ALPHA))]
fn combine_weights(objective: Vec<f64>, subjective: Vec<f64>, alpha: f64) -> PyResult<Vec<f64>> {
    let w = weights::combine_weights(&WeightVector::new(objective), &WeightVector::new(subjective), alpha);
    Ok(w.map_err(err)?.into_inner())
}

/// Returns `(predicted_class, fused_scores)`.
#[pyfunction]
fn fuse_weighted(rows: Vec<Vec<f64>>, weights: Vec<f64>) -> PyResult<(usize, Vec<f64>)> {
    Ok(decision(
        fusion::fuse_weighted(&matrix(rows)?, &WeightVector::new(weights)).map_err(err)?,
    ))
}

#[pyfunction]
fn fuse_average(rows: Vec<Vec<f64>>) -> PyResult<(usize, Vec<f64>)> {
    Ok(decision(fusion::fuse_average(&matrix(rows)?).map_err(err)?))
}

#[pyfunction]
fn fuse_max_voting(rows: Vec<Vec<f64>>) -> PyResult<(usize, Vec<f64>)> {
    Ok(decision(fusion::fuse_max_voting(&matrix(rows)?).map_err(err)?))
}

#[pyfunction]
#[pyo3(signature = (rows, objective, alpha=weights::DEFAULT_ALPHA))]
fn fuse_active(rows: Vec<Vec<f64>>, objective: Vec<f64>, alpha: f64) -> PyResult<(usize, Vec<f64>)> {
    Ok(decision(
        fusion::fuse_active(&matrix(rows)?, &WeightVector::new(objective), alpha).map_err(err)?,
    ))
}

#[pyclass(name = "FusionEngine", module = "pycostfuse", frozen)]
struct PyFusionEngine {
    inner: fusion::FusionEngine,
}

#[pymethods]
impl PyFusionEngine {
    #[staticmethod]
    fn max_voting(schema: &PySchema) -> Self {
        Self {
            inner: fusion::FusionEngine::max_voting(schema.inner.clone()),
        }
    }

    #[staticmethod]
    fn average(schema: &PySchema) -> Self {
        Self {
            inner: fusion::FusionEngine::average(schema.inner.clone()),
        }
    }

    #[staticmethod]
    #[pyo3(signature = (schema, val_cms, alpha=weights::DEFAULT_ALPHA))]
    fn af(schema: &PySchema, val_cms: Vec<Vec<Vec<f64>>>, alpha: f64) -> PyResult<Self> {
        let cms = val_cms.into_iter().map(confusion).collect::<PyResult<Vec<_>>>()?;
        let inner = fusion::FusionEngine::af(schema.inner.clone(), &cms, alpha).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (schema, val_cms, cost_matrix, alpha=weights::DEFAULT_ALPHA))]
    fn cs_af(schema: &PySchema, val_cms: Vec<Vec<Vec<f64>>>, cost_matrix: Vec<Vec<f64>>, alpha: f64) -> PyResult<Self> {
        let cms = val_cms.into_iter().map(confusion).collect::<PyResult<Vec<_>>>()?;
        let inner = fusion::FusionEngine::cs_af(schema.inner.clone(), &cms, &cost(cost_matrix)?, alpha).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn method(&self) -> &'static str {
        self.inner.method().as_str()
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha()
    }

    #[getter]
    fn objective_weights(&self) -> Option<Vec<f64>> {
        self.inner.objective_weights().map(WeightVector::into_inner)
    }

    /// Fuses one k×m decision matrix into `(predicted_class, fused_scores)`.
    fn fuse(&self, rows: Vec<Vec<f64>>) -> PyResult<(usize, Vec<f64>)> {
        Ok(decision(self.inner.fuse(&matrix(rows)?).map_err(err)?))
    }

    /// Fuses many samples; releases the GIL while working.
    fn fuse_many(&self, py: Python<'_>, samples: Vec<Vec<Vec<f64>>>) -> PyResult<Vec<usize>> {
        let matrices = samples.into_iter().map(matrix).collect::<PyResult<Vec<_>>>()?;
        py.detach(|| {
            matrices
                .iter()
                .map(|d| self.inner.fuse(d).map(|f| f.predicted_class))
                .collect::<Result<Vec<_>, _>>()
        })
        .map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "FusionEngine(method={:?}, alpha={})",
            self.inner.method().as_str(),
            self.inner.alpha()
        )
    }
}

#[pymodule]
fn pycostfuse(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySchema>()?;
    m.add_class::<PyFusionEngine>()?;
    m.add_function(wrap_pyfunction!(build_cost_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(uniform_cost_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(confusion_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(micro_f1, m)?)?;
    m.add_function(wrap_pyfunction!(total_cost, m)?)?;
    m.add_function(wrap_pyfunction!(sensitivity, m)?)?;
    m.add_function(wrap_pyfunction!(specificity, m)?)?;
    m.add_function(wrap_pyfunction!(individuality, m)?)?;
    m.add_function(wrap_pyfunction!(subjective_weights, m)?)?;
    m.add_function(wrap_pyfunction!(objective_weights, m)?)?;
    m.add_function(wrap_pyfunction!(combine_weights, m)?)?;
    m.add_function(wrap_pyfunction!(fuse_weighted, m)?)?;
    m.add_function(wrap_pyfunction!(fuse_average, m)?)?;
    m.add_function(wrap_pyfunction!(fuse_max_voting, m)?)?;
    m.add_function(wrap_pyfunction!(fuse_active, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
