//! MMD weight solver.
//!
//! Minimizes `w' K_ss w - 2 w' b + lambda ||w||^2` over the capped simplex
//! by accelerated projected gradient with a power-method Lipschitz estimate.
//! The constant target term `c` is excluded from the optimization and added
//! back into reported objectives.

use ndarray::Array1;

use super::qp::{minimize_qp, QpProblem};
use super::{SolverConfig, StepRule};
use crate::data::WeightSolution;
use crate::discrepancy::{mmd_value, MmdQuadraticForm};
use crate::error::{Error, Result};
use crate::linalg::{power_method_lambda_max, power_method_lambda_min};

const POWER_ITERATIONS: usize = 50;

pub fn solve_mmd(form: &MmdQuadraticForm, cfg: &SolverConfig) -> Result<WeightSolution> {
    cfg.validate()?;
    let n = form.k_ss.nrows();
    if n == 0 {
        return Err(Error::TooFewRows(0));
    }
    if form.b.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: form.b.len(),
        });
    }
    let lmax = power_method_lambda_max(form.k_ss.view(), POWER_ITERATIONS);
    let lmin = power_method_lambda_min(form.k_ss.view(), POWER_ITERATIONS);
    if lmin < -1e-6 * (1.0 + lmax.abs()) {
        return Err(Error::NonPsdForm { lambda_min: lmin });
    }
    let initial_l = match cfg.step_rule {
        StepRule::FixedLipschitz => 2.0 * (lmax.max(0.0) * 1.02 + cfg.lambda) + 1e-12,
        StepRule::Backtracking => {
            2.0 * (form.k_ss.diag().sum() / n as f64 + cfg.lambda).max(1e-12)
        }
    };
    let problem = QpProblem {
        k: form.k_ss.view(),
        ridge: cfg.lambda,
        b: form.b.view(),
        cap_entry: cfg.cap / n as f64,
    };
    let w0 = Array1::from_elem(n, 1.0 / n as f64);
    let out = minimize_qp(
        &problem,
        cfg.max_iterations,
        cfg.objective_tolerance,
        initial_l,
        w0,
        cfg.record_trace,
        form.c,
    )?;
    let mmd_sq = mmd_value(form, out.w.view())?;
    let mut solution = WeightSolution::new(
        out.w,
        cfg.cap,
        mmd_sq.sqrt(),
        out.objective + form.c,
        out.iterations,
        out.converged,
    );
    solution.trace = out.trace;
    solution.validate()?;
    Ok(solution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use crate::discrepancy::mmd_form;
    use crate::kernel::KernelSpec;
    use crate::solver::project_capped_simplex;
    use crate::target::{build_shuffle, TargetSample};
    use ndarray::{array, Array2};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_instance(seed: u64, n: usize) -> (MmdQuadraticForm, Dataset) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = Array2::from_shape_fn((n, 1), |_| rng.random_range(-1.0..1.0));
        let x = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0));
        let data = Dataset::from_parts(t, x, None).unwrap();
        let target = build_shuffle(&data, 3, seed ^ 0xabc).unwrap();
        let spec = KernelSpec::gaussian(0.8).unwrap();
        (mmd_form(&spec, &data, &target).unwrap(), data)
    }

    /// Dense grid search over the 3-simplex at the given resolution,
    /// respecting the per-entry cap.
    fn grid_min_objective(form: &MmdQuadraticForm, lambda: f64, cap_entry: f64, step: f64) -> f64 {
        let mut best = f64::INFINITY;
        let mut w1 = 0.0;
        while w1 <= 1.0 + 1e-12 {
            let mut w2 = 0.0;
            while w1 + w2 <= 1.0 + 1e-12 {
                let w3 = 1.0 - w1 - w2;
                if w3 >= -1e-12
                    && w1 <= cap_entry + 1e-12
                    && w2 <= cap_entry + 1e-12
                    && w3 <= cap_entry + 1e-12
                {
                    let w = array![w1, w2, w3.max(0.0)];
                    let f = w.dot(&form.k_ss.dot(&w)) - 2.0 * w.dot(&form.b)
                        + form.c
                        + lambda * w.dot(&w);
                    if f < best {
                        best = f;
                    }
                }
                w2 += step;
            }
            w1 += step;
        }
        best
    }

    #[test]
    fn matches_dense_grid_search_on_three_points() {
        for (seed, lambda) in [(1u64, 0.0), (2, 0.1), (3, 0.5)] {
            let (form, _) = random_instance(seed, 3);
            let cfg = SolverConfig {
                lambda,
                cap: 2.0,
                ..SolverConfig::default()
            };
            let sol = solve_mmd(&form, &cfg).unwrap();
            let grid = grid_min_objective(&form, lambda, 2.0 / 3.0, 1e-3);
            assert!(
                sol.objective <= grid + 1e-4,
                "seed {seed}: solver {} vs grid {grid}",
                sol.objective
            );
            assert!(
                sol.objective >= grid - 1e-4,
                "seed {seed}: solver {} beats grid by too much, grid step misses",
                sol.objective
            );
        }
    }

    #[test]
    fn uniform_is_optimal_when_target_equals_data() {
        let (_, data) = random_instance(7, 12);
        let n = data.n();
        let z = data.z_matrix();
        let target =
            TargetSample::from_parts(z.clone(), Array1::from_elem(n, 1.0 / n as f64)).unwrap();
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let form = mmd_form(&spec, &data, &target).unwrap();
        let cfg = SolverConfig {
            cap: 5.0,
            ..SolverConfig::default()
        };
        let sol = solve_mmd(&form, &cfg).unwrap();
        let uniform = Array1::from_elem(n, 1.0 / n as f64);
        let f_uniform =
            uniform.dot(&form.k_ss.dot(&uniform)) - 2.0 * uniform.dot(&form.b) + form.c;
        assert!(sol.objective <= f_uniform + 1e-10);
        assert!(mmd_value(&form, sol.weights.view()).unwrap() < 1e-10);
    }

    #[test]
    fn huge_lambda_drives_weights_to_uniform() {
        let (form, _) = random_instance(11, 10);
        let cfg = SolverConfig {
            lambda: 1e8,
            cap: 5.0,
            ..SolverConfig::default()
        };
        let sol = solve_mmd(&form, &cfg).unwrap();
        for &w in sol.weights.iter() {
            assert!((w - 0.1).abs() < 1e-4);
        }
    }

    #[test]
    fn objective_trace_is_monotone() {
        let (form, _) = random_instance(13, 20);
        let cfg = SolverConfig {
            lambda: 0.01,
            cap: 3.0,
            record_trace: true,
            ..SolverConfig::default()
        };
        let sol = solve_mmd(&form, &cfg).unwrap();
        let trace = sol.trace.as_ref().unwrap();
        for pair in trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12 * (1.0 + pair[0].abs()));
        }
    }

    #[test]
    fn returned_point_satisfies_the_fixed_point_certificate() {
        let (form, _) = random_instance(17, 15);
        let cfg = SolverConfig {
            lambda: 0.05,
            cap: 4.0,
            ..SolverConfig::default()
        };
        let sol = solve_mmd(&form, &cfg).unwrap();
        assert!(sol.converged);
        let n = sol.weights.len();
        let lmax = power_method_lambda_max(form.k_ss.view(), 100);
        let l = 2.0 * (lmax + cfg.lambda);
        let grad = {
            let mut g = form.k_ss.dot(&sol.weights);
            for i in 0..n {
                g[i] = 2.0 * (g[i] + cfg.lambda * sol.weights[i] - form.b[i]);
            }
            g
        };
        let stepped = &sol.weights - &(&grad * (1.0 / l));
        let proj = project_capped_simplex(stepped.view(), cfg.cap / n as f64).unwrap();
        let residual = proj
            .iter()
            .zip(sol.weights.iter())
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        assert!(residual <= 1e-6, "certificate residual {residual}");
    }

    #[test]
    fn random_restarts_agree_on_the_objective() {
        let (form, _) = random_instance(19, 12);
        let lambda = 0.02;
        let cap = 3.0;
        let problem = QpProblem {
            k: form.k_ss.view(),
            ridge: lambda,
            b: form.b.view(),
            cap_entry: cap / 12.0,
        };
        let lmax = power_method_lambda_max(form.k_ss.view(), 50);
        let l0 = 2.0 * (lmax * 1.02 + lambda);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut objectives = Vec::new();
        for _ in 0..5 {
            let raw: Vec<f64> = (0..12).map(|_| rng.random_range(0.0..1.0)).collect();
            let s: f64 = raw.iter().sum();
            let w0 = Array1::from_iter(raw.into_iter().map(|v| v / s));
            let out = minimize_qp(&problem, 20_000, 1e-13, l0, w0, false, 0.0).unwrap();
            objectives.push(out.objective);
        }
        let best = objectives.iter().cloned().fold(f64::INFINITY, f64::min);
        for obj in objectives {
            assert!((obj - best).abs() <= 1e-6 * best.abs().max(1.0));
        }
    }

    #[test]
    fn degenerate_cap_returns_exact_uniform() {
        let (form, _) = random_instance(23, 8);
        let cfg = SolverConfig {
            cap: 1.0,
            ..SolverConfig::default()
        };
        let sol = solve_mmd(&form, &cfg).unwrap();
        for &w in sol.weights.iter() {
            assert_eq!(w, 1.0 / 8.0);
        }
    }

    #[test]
    fn non_psd_forms_are_rejected() {
        let form = MmdQuadraticForm {
            k_ss: array![[1.0, 0.0], [0.0, -1.0]],
            b: array![0.0, 0.0],
            c: 0.0,
            c_exact: true,
        };
        let cfg = SolverConfig::default();
        assert!(matches!(
            solve_mmd(&form, &cfg),
            Err(Error::NonPsdForm { .. })
        ));
    }

    #[test]
    fn config_validation_errors() {
        let (form, _) = random_instance(29, 5);
        let bad_lambda = SolverConfig {
            lambda: -0.1,
            ..SolverConfig::default()
        };
        assert!(matches!(
            solve_mmd(&form, &bad_lambda),
            Err(Error::NegativeLambda(_))
        ));
        let bad_cap = SolverConfig {
            cap: 0.5,
            ..SolverConfig::default()
        };
        assert!(matches!(
            solve_mmd(&form, &bad_cap),
            Err(Error::CapBelowOne(_))
        ));
    }
}
