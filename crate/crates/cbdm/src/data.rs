//! Dataset loading, standardization, and the weight-solution record.
//!
//! A dataset is a treatment matrix, a covariate matrix, and an optional
//! outcome vector, loaded from CSV through a schema that assigns each column
//! a role. Kernels are scale-sensitive, so the weighting pipeline runs on a
//! standardized copy (per-column mean zero, population standard deviation
//! one); regression and effect estimates use the original scale.

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

/// Role a CSV column plays.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnRole {
    Treatment,
    Covariate,
    Outcome,
    Ignore,
}

/// Ordered list of (pattern, role) rules. A pattern is an exact column name
/// or a prefix ending in `*`. A column matching rules with two different
/// roles is an error; columns matching nothing are ignored.
#[derive(Debug, Clone)]
pub struct Schema {
    rules: Vec<(String, ColumnRole)>,
}

impl Schema {
    pub fn new<I, S>(rules: I) -> Self
    where
        I: IntoIterator<Item = (S, ColumnRole)>,
        S: Into<String>,
    {
        Schema {
            rules: rules.into_iter().map(|(p, r)| (p.into(), r)).collect(),
        }
    }

    /// `t* -> treatment, x* -> covariate, y -> outcome`.
    pub fn default_columns() -> Self {
        Schema::new([
            ("t*", ColumnRole::Treatment),
            ("x*", ColumnRole::Covariate),
            ("y", ColumnRole::Outcome),
        ])
    }

    fn matches(pattern: &str, name: &str) -> bool {
        match pattern.strip_suffix('*') {
            Some(prefix) => name.starts_with(prefix),
            None => name == pattern,
        }
    }

    fn role_of(&self, name: &str) -> Result<ColumnRole> {
        let mut role = None;
        for (pattern, r) in &self.rules {
            if Self::matches(pattern, name) {
                match role {
                    None => role = Some(*r),
                    Some(prev) if prev == *r => {}
                    Some(_) => {
                        return Err(Error::DuplicateRole {
                            column: name.to_string(),
                        })
                    }
                }
            }
        }
        Ok(role.unwrap_or(ColumnRole::Ignore))
    }
}

/// Observational sample: treatments `T` (n x d_T), covariates `X` (n x d_X),
/// optional outcomes `y`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub treatments: Array2<f64>,
    pub covariates: Array2<f64>,
    pub outcomes: Option<Array1<f64>>,
    pub treatment_names: Vec<String>,
    pub covariate_names: Vec<String>,
    pub outcome_name: Option<String>,
}

impl Dataset {
    pub fn new(
        treatments: Array2<f64>,
        covariates: Array2<f64>,
        outcomes: Option<Array1<f64>>,
        treatment_names: Vec<String>,
        covariate_names: Vec<String>,
        outcome_name: Option<String>,
    ) -> Result<Self> {
        let n = treatments.nrows();
        if covariates.nrows() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: covariates.nrows(),
            });
        }
        if let Some(y) = &outcomes {
            if y.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    got: y.len(),
                });
            }
        }
        if n < 2 {
            return Err(Error::TooFewRows(n));
        }
        if treatments.ncols() == 0 {
            return Err(Error::MissingRole { role: "treatment" });
        }
        if covariates.ncols() == 0 {
            return Err(Error::MissingRole { role: "covariate" });
        }
        if treatment_names.len() != treatments.ncols() || covariate_names.len() != covariates.ncols()
        {
            return Err(Error::LengthMismatch {
                expected: treatments.ncols() + covariates.ncols(),
                got: treatment_names.len() + covariate_names.len(),
            });
        }
        let ds = Dataset {
            treatments,
            covariates,
            outcomes,
            treatment_names,
            covariate_names,
            outcome_name,
        };
        ds.check_finite()?;
        Ok(ds)
    }

    /// Synthetic-data constructor with generated column names.
    pub fn from_parts(
        treatments: Array2<f64>,
        covariates: Array2<f64>,
        outcomes: Option<Array1<f64>>,
    ) -> Result<Self> {
        let tn = (1..=treatments.ncols()).map(|i| format!("t{i}")).collect();
        let xn = (1..=covariates.ncols()).map(|i| format!("x{i}")).collect();
        let has_y = outcomes.is_some();
        Dataset::new(
            treatments,
            covariates,
            outcomes,
            tn,
            xn,
            has_y.then(|| "y".to_string()),
        )
    }

    fn check_finite(&self) -> Result<()> {
        for (j, col) in self.treatments.axis_iter(Axis(1)).enumerate() {
            for (i, v) in col.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFiniteValue {
                        row: i + 1,
                        column: self.treatment_names[j].clone(),
                    });
                }
            }
        }
        for (j, col) in self.covariates.axis_iter(Axis(1)).enumerate() {
            for (i, v) in col.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFiniteValue {
                        row: i + 1,
                        column: self.covariate_names[j].clone(),
                    });
                }
            }
        }
        if let Some(y) = &self.outcomes {
            for (i, v) in y.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFiniteValue {
                        row: i + 1,
                        column: self
                            .outcome_name
                            .clone()
                            .unwrap_or_else(|| "y".to_string()),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.treatments.nrows()
    }

    pub fn d_treatment(&self) -> usize {
        self.treatments.ncols()
    }

    pub fn d_covariate(&self) -> usize {
        self.covariates.ncols()
    }

    /// Joint points z_i = (t_i, x_i) as an n x (d_T + d_X) matrix, treatment
    /// coordinates first.
    pub fn z_matrix(&self) -> Array2<f64> {
        let n = self.n();
        let d = self.d_treatment() + self.d_covariate();
        let mut z = Array2::<f64>::zeros((n, d));
        z.slice_mut(ndarray::s![.., ..self.d_treatment()])
            .assign(&self.treatments);
        z.slice_mut(ndarray::s![.., self.d_treatment()..])
            .assign(&self.covariates);
        z
    }
}

/// Per-column location/scale recorded by [`standardize`], sufficient to
/// undo the transform.
#[derive(Debug, Clone)]
pub struct StandardizationInfo {
    pub treatment_means: Vec<f64>,
    pub treatment_scales: Vec<f64>,
    pub covariate_means: Vec<f64>,
    pub covariate_scales: Vec<f64>,
}

impl StandardizationInfo {
    /// Maps a standardized dataset back to the original scale.
    pub fn unstandardize(&self, data: &Dataset) -> Dataset {
        let mut out = data.clone();
        for (j, mut col) in out.treatments.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (self.treatment_means[j], self.treatment_scales[j]);
            col.mapv_inplace(|v| v * s + m);
        }
        for (j, mut col) in out.covariates.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (self.covariate_means[j], self.covariate_scales[j]);
            col.mapv_inplace(|v| v * s + m);
        }
        out
    }
}

/// Standardizes every treatment and covariate column to mean zero and
/// population standard deviation one (the 1/n variance convention).
/// Outcomes are left untouched.
pub fn standardize(data: &Dataset) -> Result<(Dataset, StandardizationInfo)> {
    let n = data.n();
    if n < 2 {
        return Err(Error::TooFewRows(n));
    }
    let mut out = data.clone();
    let mut info = StandardizationInfo {
        treatment_means: Vec::new(),
        treatment_scales: Vec::new(),
        covariate_means: Vec::new(),
        covariate_scales: Vec::new(),
    };
    for (j, mut col) in out.treatments.axis_iter_mut(Axis(1)).enumerate() {
        let (m, s) = column_moments(col.view());
        if s <= 0.0 {
            return Err(Error::ZeroVariance {
                column: data.treatment_names[j].clone(),
            });
        }
        col.mapv_inplace(|v| (v - m) / s);
        info.treatment_means.push(m);
        info.treatment_scales.push(s);
    }
    for (j, mut col) in out.covariates.axis_iter_mut(Axis(1)).enumerate() {
        let (m, s) = column_moments(col.view());
        if s <= 0.0 {
            return Err(Error::ZeroVariance {
                column: data.covariate_names[j].clone(),
            });
        }
        col.mapv_inplace(|v| (v - m) / s);
        info.covariate_means.push(m);
        info.covariate_scales.push(s);
    }
    Ok((out, info))
}

fn column_moments(col: ArrayView1<f64>) -> (f64, f64) {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Loads a CSV with a header row, assigning roles through the schema.
/// Row numbers in errors are 1-based data rows (the header is row 0).
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path.as_ref())?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();

    let mut t_cols = Vec::new();
    let mut x_cols = Vec::new();
    let mut y_cols = Vec::new();
    for (idx, name) in headers.iter().enumerate() {
        match schema.role_of(name)? {
            ColumnRole::Treatment => t_cols.push(idx),
            ColumnRole::Covariate => x_cols.push(idx),
            ColumnRole::Outcome => y_cols.push(idx),
            ColumnRole::Ignore => {}
        }
    }
    if t_cols.is_empty() {
        return Err(Error::MissingRole { role: "treatment" });
    }
    if x_cols.is_empty() {
        return Err(Error::MissingRole { role: "covariate" });
    }
    if y_cols.len() > 1 {
        return Err(Error::InvalidArgument(format!(
            "{} outcome columns matched; at most one is supported",
            y_cols.len()
        )));
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let mut row = Vec::with_capacity(headers.len());
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::NonNumericCell {
                row: i + 1,
                column: headers[j].clone(),
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue {
                    row: i + 1,
                    column: headers[j].clone(),
                });
            }
            row.push(v);
        }
        rows.push(row);
    }
    let n = rows.len();
    if n < 2 {
        return Err(Error::TooFewRows(n));
    }

    let gather = |cols: &[usize]| -> Array2<f64> {
        let mut m = Array2::<f64>::zeros((n, cols.len()));
        for (cj, &c) in cols.iter().enumerate() {
            for (i, row) in rows.iter().enumerate() {
                m[(i, cj)] = row[c];
            }
        }
        m
    };
    let treatments = gather(&t_cols);
    let covariates = gather(&x_cols);
    let outcomes = y_cols
        .first()
        .map(|&c| Array1::from_iter(rows.iter().map(|row| row[c])));

    Dataset::new(
        treatments,
        covariates,
        outcomes,
        t_cols.iter().map(|&c| headers[c].clone()).collect(),
        x_cols.iter().map(|&c| headers[c].clone()).collect(),
        y_cols.first().map(|&c| headers[c].clone()),
    )
}

/// Writes the dataset back to CSV: treatment columns, covariate columns,
/// then the outcome if present. Floats use the shortest round-trip form.
pub fn write_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    let mut header: Vec<String> = Vec::new();
    header.extend(data.treatment_names.iter().cloned());
    header.extend(data.covariate_names.iter().cloned());
    if data.outcomes.is_some() {
        header.push(data.outcome_name.clone().unwrap_or_else(|| "y".to_string()));
    }
    writer.write_record(&header)?;
    for i in 0..data.n() {
        let mut record: Vec<String> = Vec::with_capacity(header.len());
        for j in 0..data.d_treatment() {
            record.push(format!("{}", data.treatments[(i, j)]));
        }
        for j in 0..data.d_covariate() {
            record.push(format!("{}", data.covariates[(i, j)]));
        }
        if let Some(y) = &data.outcomes {
            record.push(format!("{}", y[i]));
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Output of a weight solver: the weight vector plus the diagnostics every
/// downstream consumer needs.
#[derive(Debug, Clone)]
pub struct WeightSolution {
    /// Nonnegative weights summing to one.
    pub weights: Array1<f64>,
    /// Clipping level W; individual weights stay at or below W/n.
    pub cap: f64,
    /// Discrepancy achieved at the solution, on the unsquared scale.
    pub ipm_value: f64,
    /// Effective sample size, 1 / sum of squared weights.
    pub ess: f64,
    /// Final value of the solver's objective.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective recorded per iteration when tracing was requested.
    pub trace: Option<Vec<f64>>,
    /// Sum of the raw (pre-normalization) weights when the solution came
    /// from a dual recovery; 1 means the dual converged cleanly.
    pub raw_weight_sum: Option<f64>,
}

impl WeightSolution {
    pub fn new(
        weights: Array1<f64>,
        cap: f64,
        ipm_value: f64,
        objective: f64,
        iterations: usize,
        converged: bool,
    ) -> Self {
        let ess = 1.0 / weights.dot(&weights);
        WeightSolution {
            weights,
            cap,
            ipm_value,
            ess,
            objective,
            iterations,
            converged,
            trace: None,
            raw_weight_sum: None,
        }
    }

    /// Checks the record's internal contract: nonnegative weights summing to
    /// one within 1e-9, none above W/n + 1e-12, and ESS within [1, n].
    pub fn validate(&self) -> Result<()> {
        let n = self.weights.len();
        if n == 0 {
            return Err(Error::TooFewRows(0));
        }
        let sum: f64 = self.weights.sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "weights sum to {sum}, not 1"
            )));
        }
        let bound = self.cap / n as f64 + 1e-12;
        for (i, &w) in self.weights.iter().enumerate() {
            if w < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "weight {i} is negative: {w}"
                )));
            }
            if w > bound {
                return Err(Error::InvalidArgument(format!(
                    "weight {i} = {w} exceeds cap/n = {bound}"
                )));
            }
        }
        let ess = 1.0 / self.weights.dot(&self.weights);
        if (ess - self.ess).abs() > 1e-6 * ess.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "stored ess {} disagrees with recomputed {}",
                self.ess, ess
            )));
        }
        if !(1.0 - 1e-6..=n as f64 + 1e-6).contains(&ess) {
            return Err(Error::InvalidArgument(format!(
                "ess {ess} outside [1, {n}]"
            )));
        }
        Ok(())
    }

    /// Indices carrying numerically nonzero weight (>= 1e-15).
    pub fn support(&self) -> Vec<usize> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w >= 1e-15)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Distinct column names across roles, for schema sanity checks in the CLI.
pub fn distinct_names(data: &Dataset) -> BTreeSet<String> {
    let mut s: BTreeSet<String> = data.treatment_names.iter().cloned().collect();
    s.extend(data.covariate_names.iter().cloned());
    if let Some(n) = &data.outcome_name {
        s.insert(n.clone());
    }
    s
}
