//! Regularization frontier and balance diagnostics.
//!
//! There is no single right choice of the regularization strength or the
//! weight cap: raising either trades balance (a lower discrepancy) for
//! stability (a higher effective sample size). This module sweeps a grid of
//! both, reports the trade-off curve, flags a default knee point, and
//! summarizes how well a given weight vector balances the first-order
//! moments a practitioner usually inspects.

use ndarray::ArrayView1;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::discrepancy::mmd_form;
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::linalg::weighted_correlation;
use crate::solver::{solve_mmd, SolverConfig};
use crate::target::TargetSample;

/// Effective sample size `1 / sum w_i^2` of a weight vector on the simplex.
pub fn ess(w: ArrayView1<f64>) -> f64 {
    1.0 / w.iter().map(|v| v * v).sum::<f64>()
}

/// One grid cell of the regularization sweep.
#[derive(Debug, Clone)]
pub struct FrontierPoint {
    pub lambda: f64,
    pub cap: f64,
    pub ipm_value: f64,
    pub ess: f64,
    pub converged: bool,
    /// Present when the cell's solve failed; the numeric fields are NaN then.
    pub error: Option<String>,
}

/// Sweeps the (lambda, cap) grid, one weight solve per cell, in parallel.
/// Output is sorted by (lambda, cap); failed cells are kept and marked
/// rather than aborting the sweep.
pub fn frontier(
    data: &Dataset,
    target: &TargetSample,
    spec: &KernelSpec,
    lambdas: &[f64],
    caps: &[f64],
) -> Result<Vec<FrontierPoint>> {
    frontier_with_config(data, target, spec, lambdas, caps, &SolverConfig::default())
}

/// [`frontier`] with explicit solver settings; the grid overrides the
/// config's own lambda and cap cell by cell.
pub fn frontier_with_config(
    data: &Dataset,
    target: &TargetSample,
    spec: &KernelSpec,
    lambdas: &[f64],
    caps: &[f64],
    base: &SolverConfig,
) -> Result<Vec<FrontierPoint>> {
    if lambdas.is_empty() || caps.is_empty() {
        return Err(Error::InvalidArgument(
            "frontier needs at least one lambda and one cap".to_string(),
        ));
    }
    for &lambda in lambdas {
        if lambda < 0.0 || !lambda.is_finite() {
            return Err(Error::NegativeLambda(lambda));
        }
    }
    for &cap in caps {
        if !(cap >= 1.0) {
            return Err(Error::CapBelowOne(cap));
        }
    }

    let mut cells: Vec<(f64, f64)> = Vec::with_capacity(lambdas.len() * caps.len());
    for &lambda in lambdas {
        for &cap in caps {
            cells.push((lambda, cap));
        }
    }
    cells.sort_by(|a, b| a.partial_cmp(b).expect("finite grid values"));

    let form = mmd_form(spec, data, target)?;
    let points: Vec<FrontierPoint> = cells
        .par_iter()
        .map(|&(lambda, cap)| {
            let config = SolverConfig {
                lambda,
                cap,
                ..base.clone()
            };
            match solve_mmd(&form, &config) {
                Ok(solution) => FrontierPoint {
                    lambda,
                    cap,
                    ipm_value: solution.ipm_value,
                    ess: solution.ess,
                    converged: solution.converged,
                    error: None,
                },
                Err(err) => FrontierPoint {
                    lambda,
                    cap,
                    ipm_value: f64::NAN,
                    ess: f64::NAN,
                    converged: false,
                    error: Some(err.to_string()),
                },
            }
        })
        .collect();
    Ok(points)
}

/// Default pick from a frontier: the cell with the highest effective sample
/// size among those whose discrepancy is within 20% of the best achieved.
/// This is a flagged suggestion, not a rule from the method itself. Returns
/// an index into the slice; `None` when every cell failed.
pub fn knee_point(points: &[FrontierPoint]) -> Option<usize> {
    let best_ipm = points
        .iter()
        .filter(|p| p.error.is_none())
        .map(|p| p.ipm_value)
        .fold(f64::INFINITY, f64::min);
    if !best_ipm.is_finite() {
        return None;
    }
    let limit = 1.2 * best_ipm;
    let mut pick: Option<usize> = None;
    for (idx, point) in points.iter().enumerate() {
        if point.error.is_some() || point.ipm_value > limit {
            continue;
        }
        match pick {
            Some(best) if points[best].ess >= point.ess => {}
            _ => pick = Some(idx),
        }
    }
    pick
}

/// Weighted-versus-target gap of one moment function.
#[derive(Debug, Clone)]
pub struct MomentGap {
    pub name: String,
    pub weighted: f64,
    pub target: f64,
}

impl MomentGap {
    pub fn gap(&self) -> f64 {
        self.weighted - self.target
    }
}

/// Balance summary: the moment set {t, x_k, t*x_k} under the weighted sample
/// versus the target, plus the weighted treatment-covariate correlations.
/// Multivariate treatments use their first coordinate as t.
#[derive(Debug, Clone)]
pub struct BalanceReport {
    pub moments: Vec<MomentGap>,
    pub correlations: Vec<(String, f64)>,
}

/// Compares weighted sample moments against the target sample's.
pub fn balance_report(
    data: &Dataset,
    target: &TargetSample,
    w: ArrayView1<f64>,
) -> Result<BalanceReport> {
    let n = data.n();
    if w.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: w.len(),
        });
    }
    let d_t = data.d_treatment();
    let d_x = data.d_covariate();
    if target.atoms.ncols() != d_t + d_x {
        return Err(Error::DimensionMismatch {
            expected: d_t + d_x,
            got: target.atoms.ncols(),
        });
    }

    let t_data = data.treatments.column(0);
    let t_atoms = target.atoms.column(0);
    let weighted_mean =
        |values: ArrayView1<f64>| -> f64 { values.iter().zip(w.iter()).map(|(v, wi)| v * wi).sum() };
    let target_mean = |values: ArrayView1<f64>| -> f64 {
        values
            .iter()
            .zip(target.masses.iter())
            .map(|(v, m)| v * m)
            .sum()
    };

    let mut moments = Vec::with_capacity(1 + 2 * d_x);
    moments.push(MomentGap {
        name: "t".to_string(),
        weighted: weighted_mean(t_data),
        target: target_mean(t_atoms),
    });
    for k in 0..d_x {
        let x_data = data.covariates.column(k);
        let x_atoms = target.atoms.column(d_t + k);
        moments.push(MomentGap {
            name: data.covariate_names[k].clone(),
            weighted: weighted_mean(x_data),
            target: target_mean(x_atoms),
        });
    }
    for k in 0..d_x {
        let x_data = data.covariates.column(k);
        let x_atoms = target.atoms.column(d_t + k);
        let weighted = t_data
            .iter()
            .zip(x_data.iter())
            .zip(w.iter())
            .map(|((t, x), wi)| t * x * wi)
            .sum();
        let target_value = t_atoms
            .iter()
            .zip(x_atoms.iter())
            .zip(target.masses.iter())
            .map(|((t, x), m)| t * x * m)
            .sum();
        moments.push(MomentGap {
            name: format!("t*{}", data.covariate_names[k]),
            weighted,
            target: target_value,
        });
    }

    let correlations = (0..d_x)
        .map(|k| {
            let x_data = data.covariates.column(k);
            (
                data.covariate_names[k].clone(),
                weighted_correlation(t_data, x_data, w),
            )
        })
        .collect();

    Ok(BalanceReport {
        moments,
        correlations,
    })
}
