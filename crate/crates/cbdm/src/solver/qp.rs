//! Shared quadratic-program engine: accelerated projected gradient on
//! `F(w) = w'(K + ridge*I)w - 2 w'b` over the capped simplex.
//!
//! The acceleration is restarted whenever a momentum step would increase
//! the objective, so the recorded objective sequence is non-increasing up
//! to a 1e-12 slack. A short polishing phase afterwards drives the
//! projected-gradient fixed-point residual to ~1e-7, which is the
//! optimality certificate the tests check.

use ndarray::{Array1, ArrayView1, ArrayView2};

use super::projection::project_capped_simplex;
use crate::error::Result;

pub(crate) struct QpOutcome {
    pub w: Array1<f64>,
    /// Final value of F (no constant term).
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Option<Vec<f64>>,
}

pub(crate) struct QpProblem<'a> {
    pub k: ArrayView2<'a, f64>,
    pub ridge: f64,
    pub b: ArrayView1<'a, f64>,
    pub cap_entry: f64,
}

impl QpProblem<'_> {
    fn objective(&self, w: &Array1<f64>) -> f64 {
        let kw = self.k.dot(w);
        w.dot(&kw) + self.ridge * w.dot(w) - 2.0 * w.dot(&self.b)
    }

    fn gradient(&self, w: &Array1<f64>) -> Array1<f64> {
        let mut g = self.k.dot(w);
        ndarray::Zip::from(&mut g)
            .and(w)
            .and(&self.b)
            .for_each(|gi, &wi, &bi| *gi = 2.0 * (*gi + self.ridge * wi - bi));
        g
    }
}

pub(crate) fn minimize_qp(
    problem: &QpProblem,
    max_iterations: usize,
    objective_tolerance: f64,
    initial_l: f64,
    w0: Array1<f64>,
    record_trace: bool,
    trace_offset: f64,
) -> Result<QpOutcome> {
    let mut l = initial_l.max(1e-12);
    let mut w = project_capped_simplex(w0.view(), problem.cap_entry)?;
    let mut w_prev = w.clone();
    let mut t: f64 = 1.0;
    let mut f_cur = problem.objective(&w);
    let mut trace = record_trace.then(|| vec![f_cur + trace_offset]);
    let mut small_steps = 0usize;
    let mut iterations = 0usize;
    let mut hit_tolerance = false;

    for iter in 0..max_iterations {
        iterations = iter + 1;
        let mut t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        let y = &w + &((&w - &w_prev) * beta);
        let gy = problem.gradient(&y);
        let mut cand =
            project_capped_simplex((&y - &(&gy * (1.0 / l))).view(), problem.cap_entry)?;
        let mut f_cand = problem.objective(&cand);
        let slack = 1e-12 * (1.0 + f_cur.abs());
        if f_cand > f_cur + slack {
            // momentum overshoot: restart from the current iterate
            t_next = 1.0;
            let g = problem.gradient(&w);
            let mut attempts = 0;
            loop {
                cand =
                    project_capped_simplex((&w - &(&g * (1.0 / l))).view(), problem.cap_entry)?;
                f_cand = problem.objective(&cand);
                if f_cand <= f_cur + slack || attempts >= 60 {
                    break;
                }
                l *= 2.0;
                attempts += 1;
            }
            if f_cand > f_cur {
                cand = w.clone();
                f_cand = f_cur;
            }
        }
        let rel = (f_cur - f_cand) / f_cur.abs().max(1.0);
        w_prev = std::mem::replace(&mut w, cand);
        f_cur = f_cand;
        t = t_next;
        if let Some(tr) = trace.as_mut() {
            tr.push(f_cur + trace_offset);
        }
        if rel < objective_tolerance {
            small_steps += 1;
        } else {
            small_steps = 0;
        }
        if small_steps >= 2 && iter >= 2 {
            hit_tolerance = true;
            break;
        }
    }

    // polish: plain projected-gradient steps until the fixed-point residual
    // is well under the 1e-6 certificate
    let mut residual = f64::INFINITY;
    let polish_budget = 2000.min(max_iterations);
    for _ in 0..polish_budget {
        let g = problem.gradient(&w);
        let next = project_capped_simplex((&w - &(&g * (1.0 / l))).view(), problem.cap_entry)?;
        residual = next
            .iter()
            .zip(w.iter())
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        if residual <= 1e-7 {
            break;
        }
        let f_next = problem.objective(&next);
        if f_next > f_cur + 1e-12 * (1.0 + f_cur.abs()) {
            l *= 2.0;
            continue;
        }
        w = next;
        f_cur = f_next;
        iterations += 1;
        if let Some(tr) = trace.as_mut() {
            tr.push(f_cur + trace_offset);
        }
    }

    Ok(QpOutcome {
        w,
        objective: f_cur,
        iterations,
        converged: hit_tolerance || residual <= 1e-6,
        trace,
    })
}
