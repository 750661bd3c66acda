//! Wasserstein-1 weight construction.
//!
//! Two routes to the same discrepancy. The nearest-assignment path handles
//! the unregularized, uncapped case exactly: every target atom sends its
//! mass to the closest source point, so the weights fall out of a single
//! pass over the atoms. The transport path keeps an explicit plan with
//! fixed column marginals and runs projected gradient descent on the
//! squared plan cost plus the ridge on the induced row sums; an exact line
//! search along each projected direction keeps every step a descent step
//! while the working Lipschitz estimate adapts in both directions.
//!
//! Distances are Euclidean on the joint (t, x) representation exactly as
//! stored in the dataset, so standardize upstream when columns are on
//! different scales. Neither path enforces a per-entry weight cap; the
//! reported solutions carry `cap = n` (vacuous) to reflect that.

use ndarray::{Array1, Array2, Axis, Zip};

use super::projection::project_scaled_simplex;
use super::SolverConfig;
use crate::data::{Dataset, WeightSolution};
use crate::error::{Error, Result};
use crate::target::{kahan_sum, TargetSample};

/// Largest dense transport plan (entries) solve_w1_transport will build.
pub const TRANSPORT_PLAN_ENTRY_LIMIT: usize = 4_000_000;

const TIE_TOLERANCE: f64 = 1e-12;

fn check_dims(data: &Dataset, target: &TargetSample) -> Result<(Array2<f64>, usize, usize)> {
    if target.masses.is_empty() {
        return Err(Error::EmptyTarget);
    }
    let z = data.z_matrix();
    if target.atoms.ncols() != z.ncols() {
        return Err(Error::DimensionMismatch {
            expected: z.ncols(),
            got: target.atoms.ncols(),
        });
    }
    let n = z.nrows();
    let m = target.atoms.nrows();
    Ok((z, n, m))
}

fn distance(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    let mut sq = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let d = x - y;
        sq += d * d;
    }
    sq.sqrt()
}

/// Assigns each target atom's mass to its nearest source point, splitting
/// ties (distance gap <= 1e-12) uniformly. Exact minimizer of the linear
/// transport cost when no cap or ridge is wanted.
pub fn solve_w1_nearest(data: &Dataset, target: &TargetSample) -> Result<WeightSolution> {
    let (z, n, m) = check_dims(data, target)?;
    let mut weights = Array1::<f64>::zeros(n);
    let mut atom_costs = Vec::with_capacity(m);
    let mut minimizers = Vec::new();
    for j in 0..m {
        let atom = target.atoms.row(j);
        let mut d_min = f64::INFINITY;
        for i in 0..n {
            let d = distance(z.row(i), atom);
            if d < d_min {
                d_min = d;
            }
        }
        minimizers.clear();
        for i in 0..n {
            if distance(z.row(i), atom) - d_min <= TIE_TOLERANCE {
                minimizers.push(i);
            }
        }
        let q = target.masses[j];
        let share = q / minimizers.len() as f64;
        for &i in &minimizers {
            weights[i] += share;
        }
        atom_costs.push(q * d_min);
    }
    let cost = kahan_sum(atom_costs);
    let solution = WeightSolution::new(weights, n as f64, cost, cost * cost, 0, true);
    solution.validate()?;
    Ok(solution)
}

struct PlanState {
    /// Plan transposed: row j holds target atom j's split over sources.
    plan: Array2<f64>,
    /// Linear cost sum M o C at the current plan.
    cost: f64,
    /// Row sums of the untransposed plan, i.e. the induced weights.
    row_sums: Array1<f64>,
}

impl PlanState {
    fn objective(&self, lambda: f64) -> f64 {
        self.cost * self.cost + lambda * self.row_sums.dot(&self.row_sums)
    }

    fn refresh(&mut self, costs_t: &Array2<f64>) {
        self.cost = Zip::from(&self.plan)
            .and(costs_t)
            .fold(0.0, |acc, &m, &c| acc + m * c);
        self.row_sums = self.plan.sum_axis(Axis(0));
    }
}

/// Projected gradient on the squared plan cost plus `lambda * ||M 1||^2`
/// over plans with fixed column marginals. Minimizes exactly along each
/// projected direction, growing or shrinking the step base depending on
/// how much of the direction the line search accepted.
pub fn solve_w1_transport(
    data: &Dataset,
    target: &TargetSample,
    cfg: &SolverConfig,
) -> Result<WeightSolution> {
    cfg.validate()?;
    let (z, n, m) = check_dims(data, target)?;
    if n.saturating_mul(m) > TRANSPORT_PLAN_ENTRY_LIMIT {
        return Err(Error::PlanTooLarge {
            n,
            m,
            limit: TRANSPORT_PLAN_ENTRY_LIMIT,
        });
    }
    let lambda = cfg.lambda;

    // costs transposed to match the plan layout: entry (j, i) = ||z_i - atom_j||
    let mut costs_t = Array2::<f64>::zeros((m, n));
    for j in 0..m {
        let atom = target.atoms.row(j);
        for i in 0..n {
            costs_t[(j, i)] = distance(z.row(i), atom);
        }
    }

    let mut state = PlanState {
        plan: Array2::from_shape_fn((m, n), |(j, _)| target.masses[j] / n as f64),
        cost: 0.0,
        row_sums: Array1::zeros(n),
    };
    state.refresh(&costs_t);
    let mut objective = state.objective(lambda);
    let mut trace = cfg.record_trace.then(|| vec![objective]);

    let frob_sq = costs_t.iter().map(|c| c * c).sum::<f64>();
    let mut step_base = 2.0 * frob_sq + 2.0 * lambda * m as f64 + 1e-12;

    let mut iterations = 0usize;
    let mut converged = false;
    let mut flat_count = 0usize;
    let mut direction = Array2::<f64>::zeros((m, n));
    let mut column = vec![0.0f64; n];
    while iterations < cfg.max_iterations {
        iterations += 1;
        // candidate = project(plan - grad / step_base), column marginals kept
        for j in 0..m {
            let row = state.plan.row(j);
            for i in 0..n {
                let g = 2.0 * state.cost * costs_t[(j, i)] + 2.0 * lambda * state.row_sums[i];
                column[i] = row[i] - g / step_base;
            }
            project_scaled_simplex(&mut column, target.masses[j]);
            for i in 0..n {
                direction[(j, i)] = column[i] - row[i];
            }
        }
        let delta_cost = Zip::from(&direction)
            .and(&costs_t)
            .fold(0.0, |acc, &d, &c| acc + d * c);
        let delta_rows = direction.sum_axis(Axis(0));
        // objective along plan + theta * direction is quadratic in theta
        let curvature = 2.0 * delta_cost * delta_cost + 2.0 * lambda * delta_rows.dot(&delta_rows);
        let slope = 2.0 * state.cost * delta_cost + 2.0 * lambda * state.row_sums.dot(&delta_rows);
        if slope >= -1e-300 {
            converged = true;
            break;
        }
        let theta = if curvature <= 0.0 {
            1.0
        } else {
            (-slope / curvature).clamp(0.0, 1.0)
        };
        Zip::from(&mut state.plan)
            .and(&direction)
            .for_each(|p, &d| *p += theta * d);
        state.refresh(&costs_t);
        let new_objective = state.objective(lambda);
        if theta >= 0.999 {
            step_base = (step_base * 0.5).max(1e-12);
        } else if theta < 0.5 {
            step_base *= 2.0;
        }
        let decrease = objective - new_objective;
        let relative = decrease / objective.abs().max(1e-30);
        objective = new_objective;
        if let Some(tr) = trace.as_mut() {
            tr.push(objective);
        }
        if relative < cfg.objective_tolerance {
            flat_count += 1;
            if flat_count >= 2 {
                converged = true;
                break;
            }
        } else {
            flat_count = 0;
        }
    }

    let mut weights = state.row_sums.clone();
    let total = weights.sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::RawSumDeviation {
            sum: total,
            tolerance: 1e-9,
        });
    }
    weights.mapv_inplace(|w| (w / total).max(0.0));
    let final_objective = state.cost * state.cost + lambda * weights.dot(&weights);
    let mut solution = WeightSolution::new(
        weights,
        n as f64,
        state.cost,
        final_objective,
        iterations,
        converged,
    );
    solution.trace = trace;
    solution.validate()?;
    Ok(solution)
}
