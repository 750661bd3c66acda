//! Kernel specifications and Gram-matrix assembly.
//!
//! Points are joint vectors z = (t, x) with the treatment coordinates first.
//! A kernel either reads the full vector or, via its coordinate mask, only
//! the treatment block — the composed kernel uses that to pair a joint
//! kernel with a treatment-only kernel:
//!
//! `K((t,x),(t',x')) = 4 * K_tau(z,z') * K_g(t,t') + K_g(t,t')^2`
//!
//! which is positive semidefinite whenever `K_tau` and `K_g` are (products
//! and squares of kernels are kernels). All evaluation happens on
//! standardized coordinates; the exponential kernel additionally rejects
//! inputs with norm above 30 to keep `exp` in a sane range.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use ndarray::parallel::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Which coordinates of z = (t, x) a kernel reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordinateMask {
    FullZ,
    TreatmentOnly,
}

#[derive(Debug, Clone)]
pub enum KernelKind {
    /// `(1 + <z, z'>)^degree`
    Polynomial { degree: u32 },
    /// `exp(<z, z'>)`
    Exponential,
    /// `exp(-||z - z'||^2 / (2 h^2))`
    Gaussian { bandwidth: f64 },
    /// `4 * tau(z,z') * g(t,t') + g(t,t')^2`
    Composed {
        tau: Box<KernelSpec>,
        g: Box<KernelSpec>,
    },
}

#[derive(Debug, Clone)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub mask: CoordinateMask,
}

impl KernelSpec {
    pub fn polynomial(degree: u32) -> Result<Self> {
        if degree < 1 {
            return Err(Error::InvalidDegree);
        }
        Ok(KernelSpec {
            kind: KernelKind::Polynomial { degree },
            mask: CoordinateMask::FullZ,
        })
    }

    pub fn exponential() -> Self {
        KernelSpec {
            kind: KernelKind::Exponential,
            mask: CoordinateMask::FullZ,
        }
    }

    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::InvalidBandwidth(bandwidth));
        }
        Ok(KernelSpec {
            kind: KernelKind::Gaussian { bandwidth },
            mask: CoordinateMask::FullZ,
        })
    }

    /// Composes a joint kernel with a treatment-only kernel. The `g` part is
    /// forced onto the treatment coordinates.
    pub fn composed(tau: KernelSpec, mut g: KernelSpec) -> Self {
        g.mask = CoordinateMask::TreatmentOnly;
        KernelSpec {
            kind: KernelKind::Composed {
                tau: Box::new(tau),
                g: Box::new(g),
            },
            mask: CoordinateMask::FullZ,
        }
    }

    pub fn with_mask(mut self, mask: CoordinateMask) -> Self {
        self.mask = mask;
        self
    }

    /// Short config token, e.g. `poly4`, `gaussian`, `exponential`.
    pub fn token(&self) -> String {
        match &self.kind {
            KernelKind::Polynomial { degree } => format!("poly{degree}"),
            KernelKind::Exponential => "exponential".to_string(),
            KernelKind::Gaussian { .. } => "gaussian".to_string(),
            KernelKind::Composed { tau, g } => {
                format!("composed({},{})", tau.token(), g.token())
            }
        }
    }

    fn masked<'a>(&self, z: ArrayView1<'a, f64>, d_t: usize) -> ArrayView1<'a, f64> {
        match self.mask {
            CoordinateMask::FullZ => z,
            CoordinateMask::TreatmentOnly => z.slice_move(ndarray::s![..d_t]),
        }
    }

    /// Evaluates the kernel at a pair of joint points.
    pub fn eval(&self, a: ArrayView1<f64>, b: ArrayView1<f64>, d_t: usize) -> Result<f64> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: a.len(),
                got: b.len(),
            });
        }
        if d_t > a.len() {
            return Err(Error::DimensionMismatch {
                expected: a.len(),
                got: d_t,
            });
        }
        self.check_domain(a, d_t)?;
        self.check_domain(b, d_t)?;
        Ok(self.eval_raw(a, b, d_t))
    }

    /// Domain guard: the exponential kernel only accepts masked inputs with
    /// Euclidean norm at most 30.
    fn check_domain(&self, z: ArrayView1<f64>, d_t: usize) -> Result<()> {
        match &self.kind {
            KernelKind::Exponential => {
                let m = self.masked(z, d_t);
                let norm = m.dot(&m).sqrt();
                if norm > 30.0 {
                    return Err(Error::KernelInputTooLarge { norm });
                }
                Ok(())
            }
            KernelKind::Composed { tau, g } => {
                tau.check_domain(z, d_t)?;
                g.check_domain(z, d_t)
            }
            _ => Ok(()),
        }
    }

    fn eval_raw(&self, a: ArrayView1<f64>, b: ArrayView1<f64>, d_t: usize) -> f64 {
        match &self.kind {
            KernelKind::Polynomial { degree } => {
                let am = self.masked(a, d_t);
                let bm = self.masked(b, d_t);
                (1.0 + am.dot(&bm)).powi(*degree as i32)
            }
            KernelKind::Exponential => {
                let am = self.masked(a, d_t);
                let bm = self.masked(b, d_t);
                am.dot(&bm).exp()
            }
            KernelKind::Gaussian { bandwidth } => {
                let am = self.masked(a, d_t);
                let bm = self.masked(b, d_t);
                let mut sq = 0.0;
                for (x, y) in am.iter().zip(bm.iter()) {
                    let d = x - y;
                    sq += d * d;
                }
                (-sq / (2.0 * bandwidth * bandwidth)).exp()
            }
            KernelKind::Composed { tau, g } => {
                let kt = tau.eval_raw(a, b, d_t);
                let kg = g.eval_raw(a, b, d_t);
                4.0 * kt * kg + kg * kg
            }
        }
    }

    /// Cross Gram matrix between two point sets (rows are points).
    pub fn gram(
        &self,
        rows_a: ArrayView2<f64>,
        rows_b: ArrayView2<f64>,
        d_t: usize,
    ) -> Result<Array2<f64>> {
        if rows_a.ncols() != rows_b.ncols() {
            return Err(Error::DimensionMismatch {
                expected: rows_a.ncols(),
                got: rows_b.ncols(),
            });
        }
        if d_t > rows_a.ncols() {
            return Err(Error::DimensionMismatch {
                expected: rows_a.ncols(),
                got: d_t,
            });
        }
        for row in rows_a.axis_iter(Axis(0)) {
            self.check_domain(row, d_t)?;
        }
        for row in rows_b.axis_iter(Axis(0)) {
            self.check_domain(row, d_t)?;
        }
        let mut out = Array2::<f64>::zeros((rows_a.nrows(), rows_b.nrows()));
        out.axis_iter_mut(Axis(0))
            .into_par_iter()
            .enumerate()
            .for_each(|(i, mut row)| {
                let a = rows_a.row(i);
                for (j, slot) in row.iter_mut().enumerate() {
                    *slot = self.eval_raw(a, rows_b.row(j), d_t);
                }
            });
        Ok(out)
    }

    /// Self Gram matrix, exactly symmetric: the upper triangle is computed
    /// and mirrored.
    pub fn gram_self(&self, rows: ArrayView2<f64>, d_t: usize) -> Result<Array2<f64>> {
        if d_t > rows.ncols() {
            return Err(Error::DimensionMismatch {
                expected: rows.ncols(),
                got: d_t,
            });
        }
        for row in rows.axis_iter(Axis(0)) {
            self.check_domain(row, d_t)?;
        }
        let n = rows.nrows();
        let mut out = Array2::<f64>::zeros((n, n));
        out.axis_iter_mut(Axis(0))
            .into_par_iter()
            .enumerate()
            .for_each(|(i, mut row)| {
                let a = rows.row(i);
                for j in i..n {
                    row[j] = self.eval_raw(a, rows.row(j), d_t);
                }
            });
        for i in 0..n {
            for j in 0..i {
                out[(i, j)] = out[(j, i)];
            }
        }
        Ok(out)
    }
}

/// Fixed seed for the subsample the median heuristic draws on large inputs;
/// a constant so the bandwidth is reproducible for a given dataset.
const MEDIAN_SUBSAMPLE_SEED: u64 = 0x6d65_6469_616e_5f68;

/// Median pairwise Euclidean distance between rows. Exact up to 2000 rows;
/// beyond that a seeded 2000-row subsample is used, so the result is still
/// deterministic for a given input.
pub fn median_heuristic_bandwidth(points: ArrayView2<f64>) -> Result<f64> {
    let n = points.nrows();
    if n < 2 {
        return Err(Error::TooFewRows(n));
    }
    let limit = 2000;
    let idx: Vec<usize> = if n <= limit {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(MEDIAN_SUBSAMPLE_SEED);
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        all.truncate(limit);
        all.sort_unstable();
        all
    };
    let m = idx.len();
    let mut dists = Vec::with_capacity(m * (m - 1) / 2);
    for a in 0..m {
        let ra = points.row(idx[a]);
        for b in a + 1..m {
            let rb = points.row(idx[b]);
            let mut sq = 0.0;
            for (x, y) in ra.iter().zip(rb.iter()) {
                let d = x - y;
                sq += d * d;
            }
            dists.push(sq.sqrt());
        }
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = dists[dists.len() / 2];
    if median <= 0.0 {
        return Err(Error::AllPointsIdentical);
    }
    Ok(median)
}
