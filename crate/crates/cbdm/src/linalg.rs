//! Small dense linear-algebra helpers.
//!
//! Everything here targets the modest sizes this crate needs (design Grams
//! of a handful of columns, kernel systems up to a few thousand rows), so
//! plain textbook algorithms are used instead of a LAPACK binding.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Solves `a x = b` for symmetric positive-definite `a` via Cholesky.
pub fn cholesky_solve(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    let l = cholesky(a)?;
    let y = solve_lower_triangular(&l, b.view());
    Ok(solve_lower_transpose(&l, y.view()))
}

/// Solves `l y = b` for lower-triangular `l` by forward substitution.
pub fn solve_lower_triangular(l: &Array2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let n = b.len();
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for j in 0..i {
            s -= l[(i, j)] * y[j];
        }
        y[i] = s / l[(i, i)];
    }
    y
}

/// Solves `l' x = b` for lower-triangular `l` by back substitution.
pub fn solve_lower_transpose(l: &Array2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let n = b.len();
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in i + 1..n {
            s -= l[(j, i)] * x[j];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.ncols(),
        });
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return Err(Error::NotPositiveDefinite);
                }
                l[(i, i)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Ok(l)
}

/// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations.
///
/// Returned in ascending order. Intended for condition-number checks on
/// design Grams with at most a few dozen columns.
pub fn symmetric_eigenvalues(a: &Array2<f64>) -> Result<Vec<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.ncols(),
        });
    }
    let mut m = a.clone();
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += m[(p, q)] * m[(p, q)];
            }
        }
        if off.sqrt() <= 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut eigs: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(eigs)
}

/// Largest eigenvalue of a symmetric positive-semidefinite matrix via the
/// power method with a fixed iteration budget and deterministic start.
pub fn power_method_lambda_max(k: ArrayView2<f64>, iterations: usize) -> f64 {
    let n = k.nrows();
    if n == 0 {
        return 0.0;
    }
    // Deterministic start with mild asymmetry so eigenvectors orthogonal to
    // the all-ones direction are still picked up.
    let mut v = Array1::from_shape_fn(n, |i| 1.0 + 0.01 * ((i % 7) as f64));
    let norm = v.dot(&v).sqrt();
    v.mapv_inplace(|x| x / norm);
    let mut lambda = 0.0;
    for _ in 0..iterations {
        let kv = k.dot(&v);
        let norm = kv.dot(&kv).sqrt();
        if norm <= 1e-300 {
            return 0.0;
        }
        v = kv / norm;
        lambda = v.dot(&k.dot(&v));
    }
    lambda
}

/// Estimates the smallest eigenvalue of a symmetric matrix by running the
/// power method on `sigma I - K` (applied implicitly) where `sigma` bounds
/// the largest one.
pub fn power_method_lambda_min(k: ArrayView2<f64>, iterations: usize) -> f64 {
    let n = k.nrows();
    if n == 0 {
        return 0.0;
    }
    let lambda_max = power_method_lambda_max(k, iterations);
    let sigma = lambda_max.max(0.0) * 1.01 + 1e-12;
    let mut v = Array1::from_shape_fn(n, |i| 1.0 + 0.01 * ((i % 7) as f64));
    let norm = v.dot(&v).sqrt();
    v.mapv_inplace(|x| x / norm);
    let mut top = 0.0;
    for _ in 0..iterations {
        let mut sv = k.dot(&v);
        sv.zip_mut_with(&v, |out, &vi| *out = sigma * vi - *out);
        let norm = sv.dot(&sv).sqrt();
        if norm <= 1e-300 {
            return sigma;
        }
        v = sv / norm;
        top = sigma * v.dot(&v) - v.dot(&k.dot(&v));
    }
    sigma - top
}

/// Weighted Pearson correlation of two columns under nonnegative weights.
pub fn weighted_correlation(
    a: ArrayView1<f64>,
    b: ArrayView1<f64>,
    w: ArrayView1<f64>,
) -> f64 {
    let wsum: f64 = w.sum();
    let ma = a.dot(&w) / wsum;
    let mb = b.dot(&w) / wsum;
    let mut caa = 0.0;
    let mut cbb = 0.0;
    let mut cab = 0.0;
    for ((&ai, &bi), &wi) in a.iter().zip(b.iter()).zip(w.iter()) {
        let da = ai - ma;
        let db = bi - mb;
        caa += wi * da * da;
        cbb += wi * db * db;
        cab += wi * da * db;
    }
    if caa <= 0.0 || cbb <= 0.0 {
        return 0.0;
    }
    cab / (caa * cbb).sqrt()
}
