//! Weighted dose-response regression.
//!
//! Given balancing weights, the second pipeline step fits the outcome on the
//! treatment alone by minimizing the weighted empirical risk
//! `sum_i w_i (y_i - g(t_i))^2` over a function class: affine in t, or a
//! kernel expansion with a small ridge. Everything runs on the original data
//! scale; the weights are the only place standardization enters.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::linalg::{cholesky_solve, symmetric_eigenvalues};

/// Weights at or below this are treated as exact zeros in the fit.
const SUPPORT_FLOOR: f64 = 1e-15;
/// Largest acceptable condition number of the weighted design Gram.
const CONDITION_LIMIT: f64 = 1e10;

/// Function class the weighted risk is minimized over.
#[derive(Debug, Clone)]
pub enum ModelClass {
    /// `g(t) = beta_0 + beta' t`, intercept always included.
    Linear,
    /// `g(t) = sum_i c_i K_g(t, t_i)` with ridge `zeta`; `None` defaults to
    /// `1e-6 * trace(K_g) / n`.
    KernelRidge {
        spec: KernelSpec,
        zeta: Option<f64>,
    },
}

/// Coefficients of a fitted model, by class.
#[derive(Debug, Clone)]
pub enum FittedClass {
    Linear {
        intercept: f64,
        slopes: Array1<f64>,
    },
    KernelRidge {
        spec: KernelSpec,
        coefficients: Array1<f64>,
        /// Treatment rows the expansion is anchored at (support points only).
        training_t: Array2<f64>,
        zeta: f64,
    },
}

/// A fitted dose-response model plus fit diagnostics.
#[derive(Debug, Clone)]
pub struct DoseResponseModel {
    pub class: FittedClass,
    /// Weighted squared-error risk at the optimum, ridge penalty excluded.
    pub weighted_risk: f64,
    pub ess: f64,
    /// Raised when the effective sample size fell below 2; the fit is still
    /// returned but rests on fewer than two effective observations.
    pub low_ess: bool,
}

impl DoseResponseModel {
    /// Evaluates the model at each row of `t`.
    pub fn predict(&self, t: ArrayView2<f64>) -> Result<Array1<f64>> {
        match &self.class {
            FittedClass::Linear { intercept, slopes } => {
                if t.ncols() != slopes.len() {
                    return Err(Error::DimensionMismatch {
                        expected: slopes.len(),
                        got: t.ncols(),
                    });
                }
                Ok(t.dot(slopes) + *intercept)
            }
            FittedClass::KernelRidge {
                spec,
                coefficients,
                training_t,
                ..
            } => {
                if t.ncols() != training_t.ncols() {
                    return Err(Error::DimensionMismatch {
                        expected: training_t.ncols(),
                        got: t.ncols(),
                    });
                }
                let cross = spec.gram(t, training_t.view(), t.ncols())?;
                Ok(cross.dot(coefficients))
            }
        }
    }

    /// Slope vector of a linear fit; `None` for kernel models.
    pub fn slopes(&self) -> Option<&Array1<f64>> {
        match &self.class {
            FittedClass::Linear { slopes, .. } => Some(slopes),
            FittedClass::KernelRidge { .. } => None,
        }
    }

    /// Intercept of a linear fit; `None` for kernel models.
    pub fn intercept(&self) -> Option<f64> {
        match &self.class {
            FittedClass::Linear { intercept, .. } => Some(*intercept),
            FittedClass::KernelRidge { .. } => None,
        }
    }
}

fn normalized_weights(w: ArrayView1<f64>, n: usize) -> Result<Array1<f64>> {
    if w.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: w.len(),
        });
    }
    let mut sum = 0.0;
    for &v in w.iter() {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "weights must be finite and nonnegative, got {v}"
            )));
        }
        sum += v;
    }
    if sum <= 0.0 {
        return Err(Error::InvalidArgument(
            "weights sum to zero; nothing to fit on".to_string(),
        ));
    }
    Ok(w.mapv(|v| v / sum))
}

/// Minimizes `sum_i w_i (y_i - g(t_i))^2` over the class. Weights are
/// normalized to sum one first, so any positive rescaling of `w` leaves the
/// fit unchanged.
pub fn fit_weighted(
    data: &Dataset,
    w: ArrayView1<f64>,
    class: &ModelClass,
) -> Result<DoseResponseModel> {
    let y = data.outcomes.as_ref().ok_or(Error::MissingOutcomes)?;
    let n = data.n();
    let weights = normalized_weights(w, n)?;
    let ess = 1.0 / weights.iter().map(|v| v * v).sum::<f64>();
    let low_ess = ess < 2.0;
    let support: Vec<usize> = (0..n).filter(|&i| weights[i] >= SUPPORT_FLOOR).collect();
    let d_t = data.d_treatment();

    let fitted = match class {
        ModelClass::Linear => {
            let p = d_t + 1;
            let mut gram = Array2::<f64>::zeros((p, p));
            let mut rhs = Array1::<f64>::zeros(p);
            let mut row = vec![0.0; p];
            for &i in &support {
                row[0] = 1.0;
                for j in 0..d_t {
                    row[j + 1] = data.treatments[(i, j)];
                }
                let wi = weights[i];
                for a in 0..p {
                    rhs[a] += wi * row[a] * y[i];
                    for b in a..p {
                        gram[(a, b)] += wi * row[a] * row[b];
                    }
                }
            }
            for a in 0..p {
                for b in 0..a {
                    gram[(a, b)] = gram[(b, a)];
                }
            }
            let eigs = symmetric_eigenvalues(&gram)?;
            let lambda_min = eigs[0];
            let lambda_max = eigs[eigs.len() - 1];
            let cond = if lambda_min > 0.0 {
                lambda_max / lambda_min
            } else {
                f64::INFINITY
            };
            if !(cond <= CONDITION_LIMIT) {
                return Err(Error::RankDeficient { cond });
            }
            let coef = cholesky_solve(&gram, &rhs)?;
            FittedClass::Linear {
                intercept: coef[0],
                slopes: coef.slice(ndarray::s![1..]).to_owned(),
            }
        }
        ModelClass::KernelRidge { spec, zeta } => {
            let s = support.len();
            let mut training_t = Array2::<f64>::zeros((s, d_t));
            let mut y_s = Array1::<f64>::zeros(s);
            let mut w_s = Array1::<f64>::zeros(s);
            for (r, &i) in support.iter().enumerate() {
                training_t.row_mut(r).assign(&data.treatments.row(i));
                y_s[r] = y[i];
                w_s[r] = weights[i];
            }
            let k = spec.gram_self(training_t.view(), d_t)?;
            let zeta = zeta.unwrap_or(1e-6 * k.diag().sum() / n as f64);
            // (K + n zeta D^-1) c = y, solved in the symmetrized variable
            // u = D^-1/2 c so the system stays well conditioned even when
            // some weights are tiny
            let sqrt_w = w_s.mapv(f64::sqrt);
            let mut system = Array2::<f64>::zeros((s, s));
            for a in 0..s {
                for b in 0..s {
                    system[(a, b)] = sqrt_w[a] * k[(a, b)] * sqrt_w[b];
                }
                system[(a, a)] += n as f64 * zeta;
            }
            let rhs = Array1::from_iter(sqrt_w.iter().zip(y_s.iter()).map(|(sw, yi)| sw * yi));
            let u = cholesky_solve(&system, &rhs)?;
            let coefficients =
                Array1::from_iter(sqrt_w.iter().zip(u.iter()).map(|(sw, ui)| sw * ui));
            FittedClass::KernelRidge {
                spec: spec.clone(),
                coefficients,
                training_t,
                zeta,
            }
        }
    };

    let model = DoseResponseModel {
        class: fitted,
        weighted_risk: 0.0,
        ess,
        low_ess,
    };
    let predictions = model.predict(data.treatments.view())?;
    let weighted_risk = weights
        .iter()
        .zip(y.iter().zip(predictions.iter()))
        .map(|(wi, (yi, pi))| wi * (yi - pi) * (yi - pi))
        .sum();
    Ok(DoseResponseModel {
        weighted_risk,
        ..model
    })
}

/// Slope of the weighted linear fit of the outcome on a univariate
/// treatment — the benchmark's scalar estimand.
pub fn estimate_effect(data: &Dataset, w: ArrayView1<f64>) -> Result<f64> {
    if data.d_treatment() != 1 {
        return Err(Error::InvalidArgument(format!(
            "effect estimation needs a univariate treatment, got {} treatment columns",
            data.d_treatment()
        )));
    }
    let model = fit_weighted(data, w, &ModelClass::Linear)?;
    Ok(model.slopes().expect("linear fit")[0])
}

/// Evenly spaced grid across the observed range of a univariate treatment.
pub fn treatment_grid(data: &Dataset, points: usize) -> Array1<f64> {
    let t = data.treatments.index_axis(Axis(1), 0);
    let lo = t.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if points <= 1 {
        return Array1::from_elem(points.max(1), lo);
    }
    let step = (hi - lo) / (points - 1) as f64;
    Array1::from_shape_fn(points, |i| lo + step * i as f64)
}
