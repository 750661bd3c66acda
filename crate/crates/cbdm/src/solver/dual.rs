//! Dual route to the MMD weights.
//!
//! Instead of optimizing the weights directly, this module minimizes the
//! Fenchel dual in a scalar offset `mu` and coefficients `alpha` indexed by
//! a support set: the data points plus (up to a budget) target atoms. The
//! dual objective is
//!
//! ```text
//! (1/n) sum_i rho*(-mu - alpha' k(Z_i)) + mu
//!     + lambda/(4n) alpha' K alpha + alpha' E_Q[k(Z)]
//! ```
//!
//! where `rho*` is the convex conjugate of the regularizer restricted to
//! `[0, W]`. Weights come back through `n w_i = rho*'(-mu - alpha' k(Z_i))`,
//! so the cap is enforced by the conjugate's derivative rather than by
//! projection, and the entropic regularizer — which has no practical primal
//! algorithm here — becomes just another conjugate. The objective is smooth
//! (the conjugate's derivative is Lipschitz on both branches), and
//! `n (primal value) = -lambda (dual value)` at the optimum ties the two
//! problems together.

use ndarray::{s, Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::projection::project_capped_simplex;
use crate::data::{Dataset, WeightSolution};
use crate::discrepancy::{mmd_value, target_self_term, MmdQuadraticForm};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::linalg::{cholesky, cholesky_solve, solve_lower_transpose, solve_lower_triangular};
use crate::seed::derive_seed;
use crate::target::TargetSample;

/// Support atoms kept for the dual expansion: all data points, then target
/// atoms fill the remainder of this budget.
pub const DUAL_SUPPORT_LIMIT: usize = 1000;

/// Hard ceiling on the support (data points cannot be dropped).
const HARD_SUPPORT_LIMIT: usize = 5000;

const SUPPORT_SAMPLE_SEED: u64 = 0x6475_616c_5f73_7570;
const GRADIENT_TOLERANCE: f64 = 1e-7;
const MAX_ITERATIONS: usize = 120_000;
const DESCENT_ITERATIONS: usize = 2_000;
const NEWTON_ITERATIONS: usize = 500;
const DICTIONARY_TOLERANCE: f64 = 1e-10;
const TARGET_CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegularizerKind {
    /// rho(x) = x^2 on [0, W].
    Quadratic,
    /// rho(x) = x log x on [0, W].
    Entropic,
}

/// A regularizer together with its convex conjugate, both specialized to
/// the clipping level W.
#[derive(Debug, Clone, Copy)]
pub struct LegendrePair {
    pub kind: RegularizerKind,
    pub cap: f64,
}

impl LegendrePair {
    pub fn quadratic(cap: f64) -> Result<Self> {
        if !(cap >= 1.0) {
            return Err(Error::CapBelowOne(cap));
        }
        Ok(LegendrePair {
            kind: RegularizerKind::Quadratic,
            cap,
        })
    }

    pub fn entropic(cap: f64) -> Result<Self> {
        if !(cap >= 1.0) {
            return Err(Error::CapBelowOne(cap));
        }
        Ok(LegendrePair {
            kind: RegularizerKind::Entropic,
            cap,
        })
    }

    /// Conjugate value and derivative at x. The derivative lives in [0, W]
    /// by construction, which is what caps the recovered weights.
    pub fn conjugate(&self, x: f64) -> (f64, f64) {
        let w = self.cap;
        match self.kind {
            RegularizerKind::Quadratic => {
                if x <= 0.0 {
                    (0.0, 0.0)
                } else if x < 2.0 * w {
                    (x * x / 4.0, x / 2.0)
                } else {
                    (w * x - w * w, w)
                }
            }
            RegularizerKind::Entropic => {
                let knot = 1.0 + w.ln();
                if x < knot {
                    let v = (x - 1.0).exp();
                    (v, v)
                } else {
                    (w * x - w * w.ln(), w)
                }
            }
        }
    }

    /// Second derivative of the conjugate at x, taking the flat side at the
    /// knots.
    fn curvature(&self, x: f64) -> f64 {
        match self.kind {
            RegularizerKind::Quadratic => {
                if x > 0.0 && x < 2.0 * self.cap {
                    0.5
                } else {
                    0.0
                }
            }
            RegularizerKind::Entropic => {
                if x < 1.0 + self.cap.ln() {
                    (x - 1.0).exp()
                } else {
                    0.0
                }
            }
        }
    }

    /// The regularizer itself on [0, W]; used for primal objectives.
    pub fn rho(&self, y: f64) -> f64 {
        match self.kind {
            RegularizerKind::Quadratic => y * y,
            RegularizerKind::Entropic => {
                if y <= 0.0 {
                    0.0
                } else {
                    y * y.ln()
                }
            }
        }
    }
}

/// Conjugate value and derivative as a free function.
pub fn rho_star_eval(pair: &LegendrePair, x: f64) -> (f64, f64) {
    pair.conjugate(x)
}

/// Minimizer of the dual objective plus everything needed to recover and
/// score the primal weights without re-evaluating the kernel.
#[derive(Debug, Clone)]
pub struct DualSolution {
    pub mu: f64,
    pub alpha: Array1<f64>,
    /// Dictionary atoms the expansion is indexed by: support rows that
    /// survive the pivoted thinning.
    pub support: Array2<f64>,
    /// k(Z_i, s_j) for data point i and dictionary atom j.
    pub k_data: Array2<f64>,
    /// Data self-Gram, for scoring recovered weights.
    pub k_ss: Array2<f64>,
    /// Target mean of the kernel features at each data point.
    pub b_data: Array1<f64>,
    /// Target mean of the kernel features over the dictionary.
    pub e: Array1<f64>,
    /// Target self-term of the squared MMD, for scoring recovered weights.
    pub c: f64,
    pub c_exact: bool,
    pub objective: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub lambda: f64,
    /// Equals lambda except at lambda = 0, where a small ridge keeps the
    /// problem strongly convex; recorded for diagnostics.
    pub lambda_effective: f64,
}

/// The dual problem in whitened coordinates. With the thinned dictionary
/// Gram factored as `L L'`, the solver works in `beta = L' alpha`: the ridge
/// becomes isotropic, so the Hessian's smallest eigenvalue is bounded below
/// by it and Newton never crawls along near-null Gram directions.
struct DualProblem {
    /// Whitened kernel features: row i solves `L phi_i = k(Z_i, dictionary)`.
    phi: Array2<f64>,
    /// Kernel of each data point against the dictionary, n by r.
    k_eval: Array2<f64>,
    /// Lower Cholesky factor of the thinned dictionary Gram.
    chol: Array2<f64>,
    /// Data self-Gram, kept for weight recovery.
    k_ss: Array2<f64>,
    /// Target kernel mean at the data points.
    b_data: Array1<f64>,
    /// Whitened target kernel mean over the dictionary.
    e_tilde: Array1<f64>,
    /// Target kernel mean over the dictionary.
    e: Array1<f64>,
    c: f64,
    c_exact: bool,
    support: Array2<f64>,
    n: usize,
    lambda: f64,
    lambda_effective: f64,
    pair: LegendrePair,
}

fn build_support(z: &Array2<f64>, target: &TargetSample) -> Result<Array2<f64>> {
    let n = z.nrows();
    if n > HARD_SUPPORT_LIMIT {
        return Err(Error::SupportTooLarge {
            size: n,
            limit: HARD_SUPPORT_LIMIT,
        });
    }
    let m = target.len();
    let budget = DUAL_SUPPORT_LIMIT.saturating_sub(n).min(m);
    let picked: Vec<usize> = if budget == m {
        (0..m).collect()
    } else {
        let seed = derive_seed(SUPPORT_SAMPLE_SEED, &[n as u64, m as u64]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut all: Vec<usize> = (0..m).collect();
        all.shuffle(&mut rng);
        all.truncate(budget);
        all.sort_unstable();
        all
    };
    let mut support = Array2::<f64>::zeros((n + picked.len(), z.ncols()));
    support.slice_mut(s![..n, ..]).assign(z);
    for (r, &j) in picked.iter().enumerate() {
        support.row_mut(n + r).assign(&target.atoms.row(j));
    }
    Ok(support)
}

/// Greedy pivoted-Cholesky selection on a Gram matrix: keeps atoms until
/// the residual diagonal falls under `tol` times the largest diagonal.
/// Atoms that are numerically linear combinations of kept ones are dropped,
/// which bounds the dictionary Gram's condition number; the spanned
/// function space, and with it the optimum, is unchanged up to `tol`.
fn pivot_dictionary(k: &Array2<f64>, tol: f64) -> Vec<usize> {
    let s = k.nrows();
    let mut residual: Vec<f64> = (0..s).map(|i| k[(i, i)]).collect();
    let floor = tol * residual.iter().cloned().fold(0.0f64, f64::max);
    let mut factors: Vec<Array1<f64>> = Vec::new();
    let mut picked = Vec::new();
    while picked.len() < s {
        let (j, d) = residual
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(j, &d)| (j, d))
            .unwrap();
        if d <= floor {
            break;
        }
        let mut col = k.column(j).to_owned();
        for f in &factors {
            let fj = f[j];
            col.scaled_add(-fj, f);
        }
        col /= d.sqrt();
        for (r, c) in residual.iter_mut().zip(col.iter()) {
            *r -= c * c;
        }
        residual[j] = 0.0;
        factors.push(col);
        picked.push(j);
    }
    if picked.is_empty() {
        picked.push(0);
    }
    picked.sort_unstable();
    picked
}

fn build_problem(
    spec: &KernelSpec,
    data: &Dataset,
    target: &TargetSample,
    pair: &LegendrePair,
    lambda: f64,
) -> Result<DualProblem> {
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::NegativeLambda(lambda));
    }
    if target.is_empty() {
        return Err(Error::EmptyTarget);
    }
    let z = data.z_matrix();
    if target.atoms.ncols() != z.ncols() {
        return Err(Error::DimensionMismatch {
            expected: z.ncols(),
            got: target.atoms.ncols(),
        });
    }
    let d_t = data.d_treatment();
    let n = z.nrows();
    let support = build_support(&z, target)?;
    let k_full = spec.gram_self(support.view(), d_t)?;

    // E_Q[k] over the full target, accumulated in atom chunks to bound memory
    let s_dim = support.nrows();
    let mut e_full = Array1::<f64>::zeros(s_dim);
    let mut start = 0;
    while start < target.len() {
        let stop = (start + TARGET_CHUNK).min(target.len());
        let chunk = target.atoms.slice(s![start..stop, ..]);
        let gram = spec.gram(support.view(), chunk, d_t)?;
        let masses = target.masses.slice(s![start..stop]);
        e_full += &gram.dot(&masses);
        start = stop;
    }

    let picked = pivot_dictionary(&k_full, DICTIONARY_TOLERANCE);
    let r = picked.len();
    let mut k_eval = Array2::<f64>::zeros((n, r));
    let mut k_dict = Array2::<f64>::zeros((r, r));
    let mut e = Array1::<f64>::zeros(r);
    let mut dictionary = Array2::<f64>::zeros((r, support.ncols()));
    for (a, &ja) in picked.iter().enumerate() {
        for i in 0..n {
            k_eval[(i, a)] = k_full[(i, ja)];
        }
        for (b, &jb) in picked.iter().enumerate() {
            k_dict[(a, b)] = k_full[(ja, jb)];
        }
        e[a] = e_full[ja];
        dictionary.row_mut(a).assign(&support.row(ja));
    }

    let (c, c_exact) = target_self_term(spec, target, d_t)?;
    let lambda_effective = if lambda == 0.0 {
        1e-8 * k_dict.diag().sum() / r as f64
    } else {
        lambda
    };

    // The thinning keeps every pivot above the tolerance floor, but rounding
    // in a different elimination order can still graze zero; a jitter of the
    // same order as the floor is then a faithful repair.
    let chol = cholesky(&k_dict).or_else(|_| {
        let jitter = DICTIONARY_TOLERANCE * k_dict.diag().sum() / r as f64;
        let mut bumped = k_dict.clone();
        for i in 0..r {
            bumped[(i, i)] += jitter;
        }
        cholesky(&bumped)
    })?;
    let mut phi = Array2::<f64>::zeros((n, r));
    for (i, row) in k_eval.axis_iter(Axis(0)).enumerate() {
        phi.row_mut(i)
            .assign(&solve_lower_triangular(&chol, row));
    }
    let e_tilde = solve_lower_triangular(&chol, e.view());

    Ok(DualProblem {
        phi,
        k_eval,
        chol,
        k_ss: k_full.slice(s![..n, ..n]).to_owned(),
        b_data: e_full.slice(s![..n]).to_owned(),
        e_tilde,
        e,
        c,
        c_exact,
        support: dictionary,
        n,
        lambda,
        lambda_effective,
        pair: *pair,
    })
}

fn objective_only(problem: &DualProblem, mu: f64, beta: &Array1<f64>) -> f64 {
    let n_f = problem.n as f64;
    let k_beta = problem.phi.dot(beta);
    let mut acc = 0.0;
    for i in 0..problem.n {
        acc += problem.pair.conjugate(-mu - k_beta[i]).0;
    }
    acc / n_f
        + mu
        + problem.lambda_effective / (4.0 * n_f) * beta.dot(beta)
        + beta.dot(&problem.e_tilde)
}

fn objective_and_gradient(
    problem: &DualProblem,
    mu: f64,
    beta: &Array1<f64>,
) -> (f64, f64, Array1<f64>) {
    let n = problem.n;
    let n_f = n as f64;
    let k_beta = problem.phi.dot(beta);
    let mut value = 0.0;
    let mut deriv = Array1::<f64>::zeros(n);
    for i in 0..n {
        let (v, d) = problem.pair.conjugate(-mu - k_beta[i]);
        value += v;
        deriv[i] = d;
    }
    let objective = value / n_f
        + mu
        + problem.lambda_effective / (4.0 * n_f) * beta.dot(beta)
        + beta.dot(&problem.e_tilde);
    let g_mu = 1.0 - deriv.sum() / n_f;
    let mut g_beta = problem.phi.t().dot(&deriv);
    let ridge_scale = problem.lambda_effective / (2.0 * n_f);
    for (gb, (bv, ev)) in g_beta
        .iter_mut()
        .zip(beta.iter().zip(problem.e_tilde.iter()))
    {
        *gb = -*gb / n_f + ridge_scale * bv + ev;
    }
    (objective, g_mu, g_beta)
}

fn infinity_norm(g_mu: f64, g_alpha: &Array1<f64>) -> f64 {
    g_alpha
        .iter()
        .fold(g_mu.abs(), |acc, v| acc.max(v.abs()))
}

/// Minimizes the dual objective from (mu, alpha) = (0, 0) by an accelerated
/// gradient method with backtracking, then a damped Newton polish accepted
/// on gradient-norm descent. The expansion is indexed by a pivoted-Cholesky
/// thinning of the support and solved in whitened coordinates, so the
/// Hessian keeps no near-null directions the polish would crawl along.
/// Converged means the gradient's max norm fell to 1e-7.
pub fn solve_dual(
    spec: &KernelSpec,
    data: &Dataset,
    target: &TargetSample,
    pair: &LegendrePair,
    lambda: f64,
) -> Result<DualSolution> {
    let problem = build_problem(spec, data, target, pair, lambda)?;
    let s_dim = problem.phi.ncols();

    let mut x_mu = 0.0;
    let mut x_beta = Array1::<f64>::zeros(s_dim);
    let mut f_x = objective_only(&problem, x_mu, &x_beta);
    let mut y_mu = x_mu;
    let mut y_beta = x_beta.clone();
    let mut t = 1.0f64;
    let mut l = 1.0f64;
    let mut converged = false;
    let mut gradient_norm = f64::INFINITY;
    let mut iterations = 0;

    while iterations < DESCENT_ITERATIONS {
        iterations += 1;
        let (f_y, g_mu, g_beta) = objective_and_gradient(&problem, y_mu, &y_beta);
        if !f_y.is_finite() {
            y_mu = x_mu;
            y_beta.assign(&x_beta);
            t = 1.0;
            continue;
        }
        if infinity_norm(g_mu, &g_beta) <= GRADIENT_TOLERANCE && f_y <= f_x {
            x_mu = y_mu;
            x_beta.assign(&y_beta);
            f_x = f_y;
            gradient_norm = infinity_norm(g_mu, &g_beta);
            converged = true;
            break;
        }

        let g_sq = g_mu * g_mu + g_beta.dot(&g_beta);
        let mut cand_mu;
        let mut cand_beta;
        let mut f_cand;
        loop {
            cand_mu = y_mu - g_mu / l;
            cand_beta = &y_beta - &(&g_beta / l);
            f_cand = objective_only(&problem, cand_mu, &cand_beta);
            let bound = f_y - g_sq / (2.0 * l) + 1e-12 * f_y.abs().max(1.0);
            if f_cand <= bound || l > 1e18 {
                break;
            }
            l *= 2.0;
        }

        if f_cand <= f_x + 1e-15 * f_x.abs().max(1.0) {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let momentum = (t - 1.0) / t_next;
            y_mu = cand_mu + momentum * (cand_mu - x_mu);
            y_beta = &cand_beta + &((&cand_beta - &x_beta) * momentum);
            x_mu = cand_mu;
            x_beta = cand_beta;
            f_x = f_cand;
            t = t_next;
        } else if t == 1.0 {
            // y was already x, so no step length can improve the objective
            // by a representable amount; the Newton tail takes over
            break;
        } else {
            y_mu = x_mu;
            y_beta.assign(&x_beta);
            t = 1.0;
        }
        l = (l * 0.97).max(1e-12);
    }

    // Backtracking descent stalls once its certifiable decrease g^2/2L
    // drops under the f64 resolution of the objective, and the gradient can
    // still be large at that point. The tail is Newton with Levenberg-style
    // adaptive damping: the conjugate's second derivative is explicit for
    // both regularizers, so the Hessian is available in closed form, and in
    // the whitened coordinates its spectrum is bounded below by the ridge.
    // Acceptance is Euclidean gradient descent — the norm a Newton direction
    // initially decreases and one that stays meaningful below the
    // objective's f64 resolution — while convergence stays on the max norm.
    if !converged {
        let n = problem.n;
        let n_f = n as f64;
        let ridge_scale = problem.lambda_effective / (2.0 * n_f);
        let dim = s_dim + 1;
        let l2 = |gm: f64, ga: &Array1<f64>| (gm * gm + ga.dot(ga)).sqrt();
        let (_, mut g_mu, mut g_beta) = objective_and_gradient(&problem, x_mu, &x_beta);
        let mut g_l2 = l2(g_mu, &g_beta);
        // Each iteration climbs a damping ladder until a step is accepted,
        // restarting one rung under the previous success so the undamped
        // step stays reachable after a rough patch.
        let mut warm = 1e-10f64;
        let mut newton_steps = 0;

        'newton: while iterations < MAX_ITERATIONS && newton_steps < NEWTON_ITERATIONS {
            if infinity_norm(g_mu, &g_beta) <= GRADIENT_TOLERANCE {
                converged = true;
                break;
            }
            iterations += 1;
            newton_steps += 1;

            let k_beta = problem.phi.dot(&x_beta);
            let curvatures = Array1::from_shape_fn(n, |i| {
                problem.pair.curvature(-x_mu - k_beta[i]) / n_f
            });
            let mut hessian = Array2::<f64>::zeros((dim, dim));
            hessian[(0, 0)] = curvatures.sum();
            let weighted_rows = &problem.phi * &curvatures.view().insert_axis(Axis(1));
            let cross = weighted_rows.sum_axis(Axis(0));
            for j in 0..s_dim {
                hessian[(0, j + 1)] = cross[j];
                hessian[(j + 1, 0)] = cross[j];
            }
            let k_block = problem.phi.t().dot(&weighted_rows);
            hessian.slice_mut(s![1.., 1..]).assign(&k_block);
            for j in 0..s_dim {
                hessian[(j + 1, j + 1)] += ridge_scale;
            }
            let scale = (0..dim).map(|i| hessian[(i, i)]).sum::<f64>() / dim as f64 + 1e-12;

            let mut rhs = Array1::<f64>::zeros(dim);
            rhs[0] = -g_mu;
            for j in 0..s_dim {
                rhs[j + 1] = -g_beta[j];
            }

            let mut advanced = false;
            let mut damping = warm;
            'ladder: for _ in 0..10 {
                let mut damped = hessian.clone();
                for i in 0..dim {
                    damped[(i, i)] += damping * scale;
                }
                if let Ok(p) = cholesky_solve(&damped, &rhs) {
                    let p_beta = p.slice(s![1..]);
                    let mut frac = 1.0f64;
                    for _ in 0..12 {
                        let cand_mu = x_mu + frac * p[0];
                        let cand_beta = &x_beta + &(&p_beta * frac);
                        let (_, c_mu, c_beta) =
                            objective_and_gradient(&problem, cand_mu, &cand_beta);
                        let c_l2 = l2(c_mu, &c_beta);
                        if c_l2.is_finite() && c_l2 < (1.0 - 1e-4 * frac) * g_l2 {
                            x_mu = cand_mu;
                            x_beta = cand_beta;
                            g_mu = c_mu;
                            g_beta = c_beta;
                            g_l2 = c_l2;
                            warm = (damping / 1e3).max(1e-12);
                            advanced = true;
                            break 'ladder;
                        }
                        frac *= 0.5;
                    }
                }
                damping = (damping * 1e3).min(1e24);
            }
            if !advanced {
                // nothing between a full Newton step and a short, heavily
                // damped one reduces the gradient any further
                break 'newton;
            }
        }
        gradient_norm = infinity_norm(g_mu, &g_beta);
        if gradient_norm <= GRADIENT_TOLERANCE {
            converged = true;
        }
        f_x = objective_only(&problem, x_mu, &x_beta);
    }

    let alpha = solve_lower_transpose(&problem.chol, x_beta.view());
    Ok(DualSolution {
        mu: x_mu,
        alpha,
        k_data: problem.k_eval,
        k_ss: problem.k_ss,
        b_data: problem.b_data,
        support: problem.support,
        e: problem.e,
        c: problem.c,
        c_exact: problem.c_exact,
        objective: f_x,
        gradient_norm,
        iterations,
        converged,
        lambda: problem.lambda,
        lambda_effective: problem.lambda_effective,
    })
}

/// Recovers primal weights from a dual solution: w_i is the conjugate's
/// derivative at -mu - alpha' k(Z_i), scaled by 1/n and renormalized. A raw
/// sum far from 1 means the dual did not converge, so that is an error.
pub fn weights_from_dual(
    sol: &DualSolution,
    pair: &LegendrePair,
    data: &Dataset,
) -> Result<WeightSolution> {
    let n = data.n();
    if sol.k_data.nrows() != n || sol.k_ss.nrows() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: sol.k_data.nrows().min(sol.k_ss.nrows()),
        });
    }
    if sol.alpha.len() != sol.k_data.ncols() {
        return Err(Error::LengthMismatch {
            expected: sol.k_data.ncols(),
            got: sol.alpha.len(),
        });
    }
    let k_alpha = sol.k_data.dot(&sol.alpha);
    let mut raw = Array1::<f64>::zeros(n);
    for i in 0..n {
        raw[i] = pair.conjugate(-sol.mu - k_alpha[i]).1;
    }
    let raw_mean = raw.sum() / n as f64;
    if (raw_mean - 1.0).abs() > 1e-3 {
        return Err(Error::RawSumDeviation {
            sum: raw_mean,
            tolerance: 1e-3,
        });
    }
    let mut weights = raw.mapv(|v| v / n as f64);
    weights.mapv_inplace(|v| v / raw_mean);
    let cap_entry = pair.cap / n as f64;
    if weights.iter().any(|&w| w > cap_entry + 1e-12) {
        weights = project_capped_simplex(weights.view(), cap_entry)?;
    }

    let form = MmdQuadraticForm {
        k_ss: sol.k_ss.clone(),
        b: sol.b_data.clone(),
        c: sol.c,
        c_exact: sol.c_exact,
    };
    let mmd_sq = mmd_value(&form, weights.view())?;
    let penalty = weights
        .iter()
        .map(|&w| pair.rho(n as f64 * w))
        .sum::<f64>()
        / (n as f64 * n as f64);
    let objective = mmd_sq + sol.lambda * penalty;
    let mut solution = WeightSolution::new(
        weights,
        pair.cap,
        mmd_sq.sqrt(),
        objective,
        sol.iterations,
        sol.converged,
    );
    solution.raw_weight_sum = Some(raw_mean);
    solution.validate()?;
    Ok(solution)
}
