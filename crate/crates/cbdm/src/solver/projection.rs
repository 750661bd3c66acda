//! Euclidean projections onto the feasible sets the solvers use.

use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};

/// Projects `v` onto `{w : w_i in [0, cap], sum w = 1}`.
///
/// The projection is `w_i = clamp(v_i - theta, 0, cap)` for the threshold
/// `theta` making the coordinates sum to one; `theta` is found by bisection
/// until `|sum w - 1| <= 1e-12`. When `n * cap = 1` the constraints force
/// the uniform vector, which is returned exactly.
pub fn project_capped_simplex(v: ArrayView1<f64>, cap: f64) -> Result<Array1<f64>> {
    let n = v.len();
    if n == 0 {
        return Err(Error::TooFewRows(0));
    }
    if !(cap > 0.0) {
        return Err(Error::InfeasibleCap { cap, n });
    }
    let total_capacity = cap * n as f64;
    if total_capacity < 1.0 - 1e-12 {
        return Err(Error::InfeasibleCap { cap, n });
    }
    if total_capacity - 1.0 <= 1e-12 {
        return Ok(Array1::from_elem(n, 1.0 / n as f64));
    }

    let clamp_sum = |theta: f64| -> f64 {
        v.iter()
            .map(|&vi| (vi - theta).clamp(0.0, cap))
            .sum::<f64>()
    };
    let vmin = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let vmax = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // sum(theta_lo) = n*cap >= 1, sum(theta_hi) = 0 <= 1
    let mut lo = vmin - cap.min(1.0) - 1.0;
    let mut hi = vmax;
    let mut theta = 0.5 * (lo + hi);
    for _ in 0..500 {
        theta = 0.5 * (lo + hi);
        let s = clamp_sum(theta);
        if (s - 1.0).abs() <= 1e-12 {
            break;
        }
        if s > 1.0 {
            lo = theta;
        } else {
            hi = theta;
        }
        if hi - lo <= f64::EPSILON * theta.abs().max(1.0) {
            break;
        }
    }
    Ok(Array1::from_iter(
        v.iter().map(|&vi| (vi - theta).clamp(0.0, cap)),
    ))
}

/// Exact projection of a slice onto `{w >= 0, sum w = total}` (no cap),
/// by the sort-and-threshold rule. Used column-wise by the transport solver.
pub fn project_scaled_simplex(values: &mut [f64], total: f64) {
    let n = values.len();
    if n == 0 {
        return;
    }
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut theta = (sorted[0] - total).max(0.0);
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - total) / (k + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        } else {
            break;
        }
    }
    for w in values.iter_mut() {
        *w = (*w - theta).max(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Exact reference projection by KKT-pattern enumeration: every
    /// coordinate is zero, capped, or free at a shared threshold. Feasible
    /// candidates are ranked by distance to `v`.
    fn oracle_projection(v: &[f64], cap: f64) -> Vec<f64> {
        let n = v.len();
        let mut best: Option<(f64, Vec<f64>)> = None;
        let patterns = 3usize.pow(n as u32);
        for code in 0..patterns {
            let mut digits = Vec::with_capacity(n);
            let mut c = code;
            for _ in 0..n {
                digits.push(c % 3); // 0 zero, 1 cap, 2 free
                c /= 3;
            }
            let free: Vec<usize> = (0..n).filter(|&i| digits[i] == 2).collect();
            let capped = digits.iter().filter(|&&d| d == 1).count() as f64;
            let w: Vec<f64>;
            if free.is_empty() {
                if (capped * cap - 1.0).abs() > 1e-9 {
                    continue;
                }
                w = digits
                    .iter()
                    .map(|&d| if d == 1 { cap } else { 0.0 })
                    .collect();
            } else {
                let free_sum: f64 = free.iter().map(|&i| v[i]).sum();
                let theta = (free_sum + capped * cap - 1.0) / free.len() as f64;
                let mut candidate = vec![0.0; n];
                let mut ok = true;
                for i in 0..n {
                    candidate[i] = match digits[i] {
                        0 => {
                            if v[i] - theta > 1e-12 {
                                ok = false;
                            }
                            0.0
                        }
                        1 => {
                            if v[i] - theta < cap - 1e-12 {
                                ok = false;
                            }
                            cap
                        }
                        _ => {
                            let wi = v[i] - theta;
                            if !(-1e-12..=cap + 1e-12).contains(&wi) {
                                ok = false;
                            }
                            wi.clamp(0.0, cap)
                        }
                    };
                }
                if !ok {
                    continue;
                }
                w = candidate;
            }
            let dist: f64 = w.iter().zip(v.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            if best.as_ref().map_or(true, |(d, _)| dist < *d) {
                best = Some((dist, w));
            }
        }
        best.expect("feasible pattern must exist").1
    }

    #[test]
    fn hand_worked_example() {
        let w = project_capped_simplex(array![0.9, 0.1, 0.0].view(), 0.5).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-12);
        assert!((w[1] - 0.3).abs() < 1e-12);
        assert!((w[2] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn feasible_input_is_unchanged() {
        let v = array![0.2, 0.5, 0.3];
        let w = project_capped_simplex(v.view(), 0.6).unwrap();
        for (a, b) in w.iter().zip(v.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_cap_returns_uniform_exactly() {
        let v = array![10.0, -5.0, 2.0, 0.0];
        let w = project_capped_simplex(v.view(), 0.25).unwrap();
        for &wi in w.iter() {
            assert_eq!(wi, 0.25);
        }
    }

    #[test]
    fn infeasible_cap_is_rejected() {
        let v = array![0.5, 0.5];
        assert!(matches!(
            project_capped_simplex(v.view(), 0.4),
            Err(Error::InfeasibleCap { .. })
        ));
    }

    #[test]
    fn matches_enumeration_oracle_on_random_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for trial in 0..100 {
            let n = rng.random_range(3..8);
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let cap = rng.random_range(1.0 / n as f64 + 0.05..1.2);
            let got = project_capped_simplex(ndarray::ArrayView1::from(&v), cap).unwrap();
            let want = oracle_projection(&v, cap);
            for i in 0..n {
                assert!(
                    (got[i] - want[i]).abs() < 1e-8,
                    "trial {trial}: coordinate {i}: {} vs {}",
                    got[i],
                    want[i]
                );
            }
        }
    }

    #[test]
    fn output_is_always_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..200 {
            let n = rng.random_range(2..40);
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let cap = rng.random_range(1.0 / n as f64..1.5);
            let w = project_capped_simplex(ndarray::ArrayView1::from(&v), cap).unwrap();
            let sum: f64 = w.sum();
            assert!((sum - 1.0).abs() <= 1e-9, "sum {sum}");
            for &wi in w.iter() {
                assert!(wi >= 0.0);
                assert!(wi <= cap + 1e-12);
            }
        }
    }

    #[test]
    fn scaled_simplex_projection_is_exact() {
        let mut vals = vec![0.8, 0.3, -0.2];
        project_scaled_simplex(&mut vals, 0.5);
        let sum: f64 = vals.iter().sum();
        assert!((sum - 0.5).abs() < 1e-12);
        assert!(vals.iter().all(|&v| v >= 0.0));
        // gradient-style check: projection of a feasible point is itself
        let mut feasible = vec![0.25, 0.25];
        project_scaled_simplex(&mut feasible, 0.5);
        assert!((feasible[0] - 0.25).abs() < 1e-15);
        assert!((feasible[1] - 0.25).abs() < 1e-15);
    }
}
