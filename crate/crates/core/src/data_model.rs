//! Datasets, budgets, estimand specifications, and CSV ingestion.
//!
//! The CSV schema is a header row with configurable column names. Defaults:
//! feature columns start with `x`, predictions live in `f`, labels in `y`,
//! optional model confidence in `conf`, an optional externally supplied
//! squared-error column in `ehat2`. Missing labels are empty cells; the
//! `observed` mask is the single source of truth for label availability.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::mix;

/// Dense row-major matrix of covariates.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { data: vec![0.0; rows * cols], rows, cols }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(n * d);
        for r in rows {
            if r.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "ragged rows: expected {d} columns, found {}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { data, rows: n, cols: d })
    }

    pub fn from_vec(data: Vec<f64>, rows: usize, cols: usize) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "matrix data length {} != {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { data, rows, cols })
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    /// New matrix containing the given rows, in order (repeats allowed).
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix { data, rows: idx.len(), cols: self.cols }
    }

    /// Prepend a constant-1 column (column 0 becomes the intercept).
    pub fn with_intercept(&self) -> Matrix {
        let mut data = Vec::with_capacity(self.rows * (self.cols + 1));
        for i in 0..self.rows {
            data.push(1.0);
            data.extend_from_slice(self.row(i));
        }
        Matrix { data, rows: self.rows, cols: self.cols + 1 }
    }
}

/// Label budget: at most `n_b` labels may be collected (in expectation) out
/// of `n` units.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    n_b: usize,
    n: usize,
}

impl Budget {
    pub fn new(n_b: usize, n: usize) -> Result<Self> {
        if n_b == 0 || n_b > n {
            return Err(Error::InvalidInput(format!(
                "budget must satisfy 1 <= n_b <= n, got n_b={n_b}, n={n}"
            )));
        }
        Ok(Self { n_b, n })
    }

    #[inline]
    pub fn n_b(&self) -> usize {
        self.n_b
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Uniform labeling rate `n_b / n`.
    #[inline]
    pub fn rate(&self) -> f64 {
        self.n_b as f64 / self.n as f64
    }
}

/// Which population parameter is being estimated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimandKind {
    Mean,
    LinearRegression,
    LogisticRegression,
}

/// Estimand specification. `coordinate_j` indexes the regression coefficient
/// of interest in the design matrix; when `include_intercept` is set the
/// intercept is column 0 and feature j maps to column j+1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimandSpec {
    pub kind: EstimandKind,
    #[serde(default)]
    pub coordinate_j: usize,
    #[serde(default = "default_true")]
    pub include_intercept: bool,
}

fn default_true() -> bool {
    true
}

impl EstimandSpec {
    pub fn mean() -> Self {
        Self { kind: EstimandKind::Mean, coordinate_j: 0, include_intercept: false }
    }

    pub fn linear(coordinate_j: usize, include_intercept: bool) -> Self {
        Self { kind: EstimandKind::LinearRegression, coordinate_j, include_intercept }
    }

    pub fn logistic(coordinate_j: usize, include_intercept: bool) -> Self {
        Self { kind: EstimandKind::LogisticRegression, coordinate_j, include_intercept }
    }

    /// Number of regression columns for a dataset with `d` features.
    pub fn n_params(&self, d: usize) -> usize {
        match self.kind {
            EstimandKind::Mean => 1,
            _ => d + usize::from(self.include_intercept),
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.coordinate_j >= self.n_params(d) {
            return Err(Error::InvalidInput(format!(
                "coordinate_j={} out of range for {} regression columns",
                self.coordinate_j,
                self.n_params(d)
            )));
        }
        Ok(())
    }
}

/// Initial uniformly-sampled labeled subset used to fit the error model.
/// Counts toward the overall budget.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BurnInPlan {
    pub size: usize,
    pub seed: u64,
}

/// A dataset of covariates, black-box predictions, optional confidence
/// scores, and (possibly partially observed) labels.
///
/// Immutable after construction; safe to share across parallel workers.
#[derive(Clone, Debug)]
pub struct Dataset {
    features: Matrix,
    predictions: Vec<f64>,
    confidence: Option<Vec<f64>>,
    labels: Vec<f64>,
    observed: Vec<bool>,
    ehat2: Option<Vec<f64>>,
    e2_true: Option<Vec<f64>>,
    region: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(
        features: Matrix,
        predictions: Vec<f64>,
        labels: Vec<f64>,
        observed: Vec<bool>,
    ) -> Result<Self> {
        let ds = Self {
            features,
            predictions,
            confidence: None,
            labels,
            observed,
            ehat2: None,
            e2_true: None,
            region: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn with_confidence(mut self, confidence: Vec<f64>) -> Result<Self> {
        self.confidence = Some(confidence);
        self.validate()?;
        Ok(self)
    }

    pub fn with_ehat2(mut self, ehat2: Vec<f64>) -> Result<Self> {
        self.ehat2 = Some(ehat2);
        self.validate()?;
        Ok(self)
    }

    pub fn with_e2_true(mut self, e2: Vec<f64>) -> Result<Self> {
        self.e2_true = Some(e2);
        self.validate()?;
        Ok(self)
    }

    pub fn with_region(mut self, region: Vec<usize>) -> Result<Self> {
        self.region = Some(region);
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let n = self.features.nrows();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let check = |len: usize, name: &str| {
            if len != n {
                Err(Error::DimensionMismatch(format!(
                    "column `{name}` has length {len}, expected {n}"
                )))
            } else {
                Ok(())
            }
        };
        check(self.predictions.len(), "predictions")?;
        check(self.labels.len(), "labels")?;
        check(self.observed.len(), "observed")?;
        if let Some(c) = &self.confidence {
            check(c.len(), "confidence")?;
            for (i, &v) in c.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidInput(format!(
                        "confidence value {v} at row {i} is outside [0, 1]"
                    )));
                }
            }
        }
        if let Some(e) = &self.ehat2 {
            check(e.len(), "ehat2")?;
        }
        if let Some(e) = &self.e2_true {
            check(e.len(), "e2")?;
        }
        if let Some(r) = &self.region {
            check(r.len(), "region")?;
        }
        Ok(())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn predictions(&self) -> &[f64] {
        &self.predictions
    }

    pub fn confidence(&self) -> Option<&[f64]> {
        self.confidence.as_deref()
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn ehat2(&self) -> Option<&[f64]> {
        self.ehat2.as_deref()
    }

    pub fn e2_true(&self) -> Option<&[f64]> {
        self.e2_true.as_deref()
    }

    pub fn region(&self) -> Option<&[usize]> {
        self.region.as_deref()
    }

    pub fn fully_labeled(&self) -> bool {
        self.observed.iter().all(|&o| o)
    }

    /// Squared residual `(y_i - f_i)^2`. Caller must ensure the label is
    /// observed.
    #[inline]
    pub fn residual2(&self, i: usize) -> f64 {
        let r = self.labels[i] - self.predictions[i];
        r * r
    }

    /// New dataset from the given row indices (repeats allowed, e.g. for
    /// bootstrap resampling).
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(idx),
            predictions: idx.iter().map(|&i| self.predictions[i]).collect(),
            confidence: self
                .confidence
                .as_ref()
                .map(|c| idx.iter().map(|&i| c[i]).collect()),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            observed: idx.iter().map(|&i| self.observed[i]).collect(),
            ehat2: self.ehat2.as_ref().map(|e| idx.iter().map(|&i| e[i]).collect()),
            e2_true: self.e2_true.as_ref().map(|e| idx.iter().map(|&i| e[i]).collect()),
            region: self.region.as_ref().map(|r| idx.iter().map(|&i| r[i]).collect()),
        }
    }
}

/// Column-name mapping for CSV ingestion.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CsvSchema {
    /// Explicit feature column names; when `None`, every column whose name
    /// starts with `feature_prefix` is a feature (in header order).
    pub features: Option<Vec<String>>,
    pub feature_prefix: String,
    pub prediction: String,
    pub label: String,
    pub confidence: String,
    pub ehat2: String,
    pub e2: String,
    pub region: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            features: None,
            feature_prefix: "x".into(),
            prediction: "f".into(),
            label: "y".into(),
            confidence: "conf".into(),
            ehat2: "ehat2".into(),
            e2: "e2".into(),
            region: "region".into(),
        }
    }
}

fn parse_cell(raw: &str, row: usize, column: &str) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|_| Error::ParseError {
        row,
        column: column.to_string(),
        value: raw.to_string(),
    })
}

/// Load a dataset from a headered CSV file. Unmapped columns are ignored;
/// empty label cells mark the row as unobserved.
pub fn load_csv<P: AsRef<Path>>(path: P, schema: &CsvSchema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path.as_ref())?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let col = |name: &str| headers.iter().position(|h| h == name);

    let feature_names: Vec<String> = match &schema.features {
        Some(explicit) => explicit.clone(),
        None => headers
            .iter()
            .filter(|h| h.starts_with(&schema.feature_prefix))
            .cloned()
            .collect(),
    };
    let mut feature_cols = Vec::with_capacity(feature_names.len());
    for name in &feature_names {
        feature_cols.push(col(name).ok_or_else(|| Error::MissingColumn(name.clone()))?);
    }
    let pred_col = col(&schema.prediction)
        .ok_or_else(|| Error::MissingColumn(schema.prediction.clone()))?;
    let label_col = col(&schema.label).ok_or_else(|| Error::MissingColumn(schema.label.clone()))?;
    let conf_col = col(&schema.confidence);
    let ehat2_col = col(&schema.ehat2);
    let e2_col = col(&schema.e2);
    let region_col = col(&schema.region);

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut predictions = Vec::new();
    let mut labels = Vec::new();
    let mut observed = Vec::new();
    let mut confidence = Vec::new();
    let mut ehat2 = Vec::new();
    let mut e2 = Vec::new();
    let mut region = Vec::new();

    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let cell = |c: usize| record.get(c).unwrap_or("");

        let mut feats = Vec::with_capacity(feature_cols.len());
        for (&c, name) in feature_cols.iter().zip(&feature_names) {
            feats.push(parse_cell(cell(c), row_idx, name)?);
        }
        rows.push(feats);
        predictions.push(parse_cell(cell(pred_col), row_idx, &schema.prediction)?);

        let label_raw = cell(label_col).trim();
        if label_raw.is_empty() {
            labels.push(f64::NAN);
            observed.push(false);
        } else {
            labels.push(parse_cell(label_raw, row_idx, &schema.label)?);
            observed.push(true);
        }

        if let Some(c) = conf_col {
            confidence.push(parse_cell(cell(c), row_idx, &schema.confidence)?);
        }
        if let Some(c) = ehat2_col {
            // External error estimates are taken verbatim, clamped below at 0.
            ehat2.push(parse_cell(cell(c), row_idx, &schema.ehat2)?.max(0.0));
        }
        if let Some(c) = e2_col {
            e2.push(parse_cell(cell(c), row_idx, &schema.e2)?);
        }
        if let Some(c) = region_col {
            region.push(parse_cell(cell(c), row_idx, &schema.region)? as usize);
        }
    }

    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let mut ds = Dataset::new(Matrix::from_rows(&rows)?, predictions, labels, observed)?;
    if conf_col.is_some() {
        ds = ds.with_confidence(confidence)?;
    }
    if ehat2_col.is_some() {
        ds = ds.with_ehat2(ehat2)?;
    }
    if e2_col.is_some() {
        ds = ds.with_e2_true(e2)?;
    }
    if region_col.is_some() {
        ds = ds.with_region(region)?;
    }
    Ok(ds)
}

/// Write a dataset back to CSV using the default column names
/// (`x1..xd, f, y[, conf, ehat2, e2, region]`). Floats use the shortest
/// representation that round-trips exactly; unobserved labels are empty cells.
pub fn write_csv<P: AsRef<Path>>(ds: &Dataset, path: P) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    let mut header: Vec<String> = (1..=ds.d()).map(|j| format!("x{j}")).collect();
    header.push("f".into());
    header.push("y".into());
    if ds.confidence().is_some() {
        header.push("conf".into());
    }
    if ds.ehat2().is_some() {
        header.push("ehat2".into());
    }
    if ds.e2_true().is_some() {
        header.push("e2".into());
    }
    if ds.region().is_some() {
        header.push("region".into());
    }
    writer.write_record(&header)?;

    for i in 0..ds.n() {
        let mut row: Vec<String> = ds.features().row(i).iter().map(|v| format!("{v}")).collect();
        row.push(format!("{}", ds.predictions()[i]));
        row.push(if ds.observed()[i] { format!("{}", ds.labels()[i]) } else { String::new() });
        if let Some(c) = ds.confidence() {
            row.push(format!("{}", c[i]));
        }
        if let Some(e) = ds.ehat2() {
            row.push(format!("{}", e[i]));
        }
        if let Some(e) = ds.e2_true() {
            row.push(format!("{}", e[i]));
        }
        if let Some(r) = ds.region() {
            row.push(format!("{}", r[i]));
        }
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Draw `plan.size` burn-in indices uniformly without replacement.
///
/// Each unit gets a pseudorandom key from `(seed, index)`; the burn-in set is
/// the `size` smallest keys. Both halves come back sorted, their disjoint
/// union is `0..n`, and the split is a pure function of `(n, plan)`.
pub fn split_burn_in(n: usize, plan: &BurnInPlan) -> Result<(Vec<usize>, Vec<usize>)> {
    if plan.size > n {
        return Err(Error::BurnInTooLarge { size: plan.size, limit: n });
    }
    let mut keyed: Vec<(u64, usize)> = (0..n).map(|i| (mix(plan.seed, i as u64), i)).collect();
    keyed.sort_unstable();
    let mut burn: Vec<usize> = keyed[..plan.size].iter().map(|&(_, i)| i).collect();
    let mut rest: Vec<usize> = keyed[plan.size..].iter().map(|&(_, i)| i).collect();
    burn.sort_unstable();
    rest.sort_unstable();
    Ok((burn, rest))
}

/// Region label counts, used for report diagnostics.
pub fn region_counts(labels: &[usize]) -> BTreeMap<usize, usize> {
    let mut counts = BTreeMap::new();
    for &r in labels {
        *counts.entry(r).or_insert(0) += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn load_small_csv() {
        let f = write_temp("x1,f,y\n0.1,0.5,1\n0.2,0.4,0\n0.3,0.6,1\n");
        let ds = load_csv(f.path(), &CsvSchema::default()).unwrap();
        assert_eq!(ds.n(), 3);
        assert_eq!(ds.d(), 1);
        assert_eq!(ds.labels(), &[1.0, 0.0, 1.0]);
        assert!(ds.fully_labeled());
    }

    #[test]
    fn blank_label_cell_is_unobserved() {
        let f = write_temp("x1,f,y\n0.1,0.5,1\n0.2,0.4,\n");
        let ds = load_csv(f.path(), &CsvSchema::default()).unwrap();
        assert_eq!(ds.observed(), &[true, false]);
        assert!(ds.labels()[1].is_nan());
    }

    #[test]
    fn confidence_column_is_stored_and_range_checked() {
        let f = write_temp("x1,f,y,conf\n0.1,0.5,1,0.97\n0.2,0.4,0,0.50\n");
        let ds = load_csv(f.path(), &CsvSchema::default()).unwrap();
        assert_eq!(ds.confidence().unwrap(), &[0.97, 0.50]);

        let bad = write_temp("x1,f,y,conf\n0.1,0.5,1,1.5\n");
        assert!(load_csv(bad.path(), &CsvSchema::default()).is_err());
    }

    #[test]
    fn missing_column_and_parse_errors() {
        let f = write_temp("x1,y\n0.1,1\n");
        match load_csv(f.path(), &CsvSchema::default()) {
            Err(Error::MissingColumn(c)) => assert_eq!(c, "f"),
            other => panic!("expected MissingColumn, got {other:?}"),
        }
        let f = write_temp("x1,f,y\nabc,0.5,1\n");
        match load_csv(f.path(), &CsvSchema::default()) {
            Err(Error::ParseError { row, column, .. }) => {
                assert_eq!(row, 0);
                assert_eq!(column, "x1");
            }
            other => panic!("expected ParseError, got {other:?}"),
        }
    }

    #[test]
    fn empty_csv_is_an_error() {
        let f = write_temp("x1,f,y\n");
        assert!(matches!(load_csv(f.path(), &CsvSchema::default()), Err(Error::EmptyDataset)));
    }

    #[test]
    fn csv_round_trip_preserves_numerics() {
        let f = write_temp(
            "x1,x2,f,y,conf\n0.123456789012345,-3.5,0.5,1,0.97\n1e-300,2.5,0.25,,0.5\n",
        );
        let ds = load_csv(f.path(), &CsvSchema::default()).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_csv(&ds, out.path()).unwrap();
        let ds2 = load_csv(out.path(), &CsvSchema::default()).unwrap();
        assert_eq!(ds.n(), ds2.n());
        for i in 0..ds.n() {
            assert_eq!(ds.features().row(i), ds2.features().row(i));
            assert_eq!(ds.predictions()[i], ds2.predictions()[i]);
            assert_eq!(ds.observed()[i], ds2.observed()[i]);
            if ds.observed()[i] {
                assert_eq!(ds.labels()[i], ds2.labels()[i]);
            }
        }
    }

    #[test]
    fn burn_in_split_partitions_and_is_deterministic() {
        let plan = BurnInPlan { size: 5, seed: 99 };
        let (a1, b1) = split_burn_in(10, &plan).unwrap();
        let (a2, b2) = split_burn_in(10, &plan).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
        let mut all: Vec<usize> = a1.iter().chain(b1.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn burn_in_edge_sizes() {
        let (a, b) = split_burn_in(4, &BurnInPlan { size: 0, seed: 1 }).unwrap();
        assert!(a.is_empty());
        assert_eq!(b, vec![0, 1, 2, 3]);
        let (a, b) = split_burn_in(4, &BurnInPlan { size: 4, seed: 1 }).unwrap();
        assert_eq!(a, vec![0, 1, 2, 3]);
        assert!(b.is_empty());
        assert!(split_burn_in(4, &BurnInPlan { size: 5, seed: 1 }).is_err());
    }

    #[test]
    fn budget_validation() {
        assert!(Budget::new(0, 10).is_err());
        assert!(Budget::new(11, 10).is_err());
        let b = Budget::new(5, 10).unwrap();
        assert_eq!(b.rate(), 0.5);
    }
}
