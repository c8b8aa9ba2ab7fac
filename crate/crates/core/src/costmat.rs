//! Cost matrices derived from a class severity ordering.
//!
//! Construction runs in three steps: correct-prediction costs come from
//! severity (most severe is cheapest to get right), each misclassification
//! cost is the squared ratio of the two diagonal costs, and the
//! misclassification costs are then min-max scaled into `[lo, hi]` and
//! optionally rounded to integers.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{check_dim, io_err, FusionError, Result};
use crate::types::{ClassSchema, CostMatrix};

pub const DEFAULT_SCALE_MIN: f64 = 16.0;
pub const DEFAULT_SCALE_MAX: f64 = 200.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrixSpec {
    pub schema: ClassSchema,
    /// Correct-prediction cost indexed by severity rank. `None` means rank + 1.
    pub diagonal_base: Option<Vec<f64>>,
    pub offdiag_scale_min: f64,
    pub offdiag_scale_max: f64,
    pub round_offdiag: bool,
}

impl CostMatrixSpec {
    pub fn new(schema: ClassSchema) -> Self {
        Self {
            schema,
            diagonal_base: None,
            offdiag_scale_min: DEFAULT_SCALE_MIN,
            offdiag_scale_max: DEFAULT_SCALE_MAX,
            round_offdiag: true,
        }
    }

    fn base(&self) -> Vec<f64> {
        match &self.diagonal_base {
            Some(b) => b.clone(),
            None => (1..=self.schema.m()).map(|r| r as f64).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let base = self.base();
        check_dim(self.schema.m(), base.len(), "diagonal base length")?;
        if let Some(b) = base.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
            return Err(FusionError::CostMatrix(format!(
                "diagonal base {b} is not strictly positive"
            )));
        }
        let (lo, hi) = (self.offdiag_scale_min, self.offdiag_scale_max);
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(FusionError::CostMatrix(format!("scale range [{lo}, {hi}] is empty")));
        }
        let max_base = base.iter().copied().fold(f64::MIN, f64::max);
        if lo < max_base {
            return Err(FusionError::CostMatrix(format!(
                "scale minimum {lo} is below the largest correct-prediction cost {max_base}"
            )));
        }
        Ok(())
    }
}

/// Correct-prediction cost per class, in class order.
pub fn diagonal_costs(spec: &CostMatrixSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let base = spec.base();
    Ok(spec.schema.severity_rank().iter().map(|&r| base[r]).collect())
}

/// Unscaled cost of predicting class i as class j: `(c_jj / c_ii)^2`.
pub fn raw_offdiagonal(c_ii: f64, c_jj: f64) -> Result<f64> {
    if !(c_ii > 0.0 && c_jj > 0.0) {
        return Err(FusionError::CostMatrix(format!(
            "diagonal costs must be positive, got {c_ii} and {c_jj}"
        )));
    }
    let ratio = c_jj / c_ii;
    Ok(ratio * ratio)
}

/// Min-max scales every off-diagonal cell into `[lo, hi]`; the diagonal is
/// copied through. When all off-diagonals are equal they map to `lo`.
pub fn scale_offdiagonals(raw: &[Vec<f64>], lo: f64, hi: f64, round: bool) -> Result<Vec<Vec<f64>>> {
    let m = raw.len();
    for r in raw {
        check_dim(m, r.len(), "raw cost row length")?;
    }
    if lo.is_nan() || hi.is_nan() || lo >= hi {
        return Err(FusionError::CostMatrix(format!("scale range [{lo}, {hi}] is empty")));
    }
    let offdiag = || {
        raw.iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().enumerate().filter(move |(j, _)| *j != i).map(|(_, v)| *v))
    };
    let vmin = offdiag().fold(f64::INFINITY, f64::min);
    let vmax = offdiag().fold(f64::NEG_INFINITY, f64::max);
    let degenerate = vmax <= vmin || vmax.is_nan();
    if degenerate {
        log::warn!("all off-diagonal costs are equal; mapping them to {lo}");
    }
    let scale = |v: f64| {
        let s = if degenerate {
            lo
        } else {
            lo + (v - vmin) / (vmax - vmin) * (hi - lo)
        };
        if round {
            s.round()
        } else {
            s
        }
    };
    Ok(raw
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.iter()
                .enumerate()
                .map(|(j, &v)| if i == j { v } else { scale(v) })
                .collect()
        })
        .collect())
}

pub fn build_cost_matrix(spec: &CostMatrixSpec) -> Result<CostMatrix> {
    let diag = diagonal_costs(spec)?;
    let m = diag.len();
    let mut raw = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            raw[i][j] = if i == j {
                diag[i]
            } else {
                raw_offdiagonal(diag[i], diag[j])?
            };
        }
    }
    let scaled = scale_offdiagonals(&raw, spec.offdiag_scale_min, spec.offdiag_scale_max, spec.round_offdiag)?;
    CostMatrix::new(scaled)
}

/// All-ones matrix; cost adjustment with it is the identity.
pub fn uniform_cost_matrix(m: usize) -> Result<CostMatrix> {
    CostMatrix::new(vec![vec![1.0; m]; m])
}

/// Writes the matrix as CSV with class names on the first row and column.
/// Values use the shortest decimal form that parses back to the same `f64`.
pub fn write_cost_matrix_csv<W: Write>(out: W, schema: &ClassSchema, cost: &CostMatrix) -> Result<()> {
    check_dim(schema.m(), cost.m(), "cost matrix size vs schema")?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let mut header = vec![String::new()];
    header.extend(schema.names().iter().cloned());
    w.write_record(&header)?;
    for (p, name) in schema.names().iter().enumerate() {
        let mut rec = vec![name.clone()];
        rec.extend((0..cost.m()).map(|q| format!("{}", cost.get(p, q))));
        w.write_record(&rec)?;
    }
    w.flush().map_err(io_err("cost matrix output"))?;
    Ok(())
}

/// Reads a cost matrix CSV and reorders it into `schema` class order. Row and
/// column labels must name exactly the schema's classes.
pub fn read_cost_matrix_csv<R: Read>(input: R, schema: &ClassSchema) -> Result<CostMatrix> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
    let mut records = r.records();
    let header = records.next().ok_or(FusionError::Empty("cost matrix file"))??;
    let m = schema.m();
    let resolve = |name: &str| {
        schema
            .index_of(name.trim())
            .ok_or_else(|| FusionError::CostMatrix(format!("unknown class {name:?}")))
    };
    let cols: Vec<usize> = header.iter().skip(1).map(resolve).collect::<Result<_>>()?;
    check_dim(m, cols.len(), "cost matrix columns")?;
    let mut rows = vec![None; m];
    for rec in records {
        let rec = rec?;
        let p = resolve(rec.get(0).unwrap_or(""))?;
        check_dim(m + 1, rec.len(), "cost matrix record length")?;
        let mut row = vec![0.0; m];
        for (slot, field) in cols.iter().zip(rec.iter().skip(1)) {
            row[*slot] = field
                .trim()
                .parse::<f64>()
                .map_err(|e| FusionError::CostMatrix(format!("bad cost {field:?}: {e}")))?;
        }
        if rows[p].replace(row).is_some() {
            return Err(FusionError::CostMatrix(format!(
                "class {:?} listed twice",
                schema.names()[p]
            )));
        }
    }
    let rows = rows
        .into_iter()
        .enumerate()
        .map(|(p, r)| r.ok_or_else(|| FusionError::CostMatrix(format!("missing row for {:?}", schema.names()[p]))))
        .collect::<Result<Vec<_>>>()?;
    CostMatrix::new(rows)
}

pub fn save_cost_matrix(path: &Path, schema: &ClassSchema, cost: &CostMatrix) -> Result<()> {
    let f = std::fs::File::create(path).map_err(io_err(path))?;
    write_cost_matrix_csv(std::io::BufWriter::new(f), schema, cost)
}

pub fn load_cost_matrix(path: &Path, schema: &ClassSchema) -> Result<CostMatrix> {
    let f = std::fs::File::open(path).map_err(io_err(path))?;
    read_cost_matrix_csv(f, schema).map_err(|e| match e {
        FusionError::Io { .. } => e,
        other => FusionError::Input {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })
}
