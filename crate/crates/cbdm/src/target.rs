//! Pseudo-interventional target samples.
//!
//! The target represents "what the sample would look like with treatment
//! assigned independently of covariates". Two constructions:
//!
//! * **Shuffle**: permute the treatment column while covariates stay in
//!   place, repeated over `k` independent rounds. k*n atoms of mass 1/(k*n).
//!   Each round preserves both marginals exactly as multisets.
//! * **Marginal product**: all n^2 pairings (t_i, x_j) with mass 1/n^2.
//!   Exact, but quadratic in n, so guarded to n <= 2000.

use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// Hard ceiling on n for the marginal-product construction.
pub const MARGINAL_PRODUCT_MAX_N: usize = 2000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TargetConstruction {
    Shuffle { rounds: usize, seed: u64 },
    MarginalProduct,
    Custom,
}

/// Weighted atom set in the joint (t, x) space.
#[derive(Debug, Clone)]
pub struct TargetSample {
    /// m x (d_T + d_X) atom coordinates, treatment block first.
    pub atoms: Array2<f64>,
    /// Nonnegative masses summing to one.
    pub masses: Array1<f64>,
    pub construction: TargetConstruction,
}

impl TargetSample {
    /// Wraps externally built atoms/masses, validating the mass vector.
    pub fn from_parts(atoms: Array2<f64>, masses: Array1<f64>) -> Result<Self> {
        if atoms.nrows() == 0 {
            return Err(Error::EmptyTarget);
        }
        if atoms.nrows() != masses.len() {
            return Err(Error::LengthMismatch {
                expected: atoms.nrows(),
                got: masses.len(),
            });
        }
        if masses.iter().any(|&q| q < 0.0 || !q.is_finite()) {
            return Err(Error::BadTargetMasses { sum: f64::NAN });
        }
        let sum = kahan_sum(masses.iter().copied());
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::BadTargetMasses { sum });
        }
        Ok(TargetSample {
            atoms,
            masses,
            construction: TargetConstruction::Custom,
        })
    }

    pub fn len(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.nrows() == 0
    }

    pub fn atoms_view(&self) -> ArrayView2<'_, f64> {
        self.atoms.view()
    }
}

/// Default number of shuffle rounds: about 1e5 atoms total, at most 200
/// rounds.
pub fn default_shuffle_rounds(n: usize) -> usize {
    ((100_000 + n - 1) / n).clamp(1, 200)
}

/// Builds the shuffle target: `rounds` independent permutations of the
/// treatment rows against fixed covariate rows.
pub fn build_shuffle(data: &Dataset, rounds: usize, seed: u64) -> Result<TargetSample> {
    if rounds == 0 {
        return Err(Error::InvalidShuffleRounds);
    }
    let n = data.n();
    if n == 0 {
        return Err(Error::TooFewRows(0));
    }
    let d_t = data.d_treatment();
    let d = d_t + data.d_covariate();
    let m = rounds * n;
    let mut atoms = Array2::<f64>::zeros((m, d));
    for r in 0..rounds {
        let mut perm: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[r as u64]));
        perm.shuffle(&mut rng);
        for i in 0..n {
            let row = r * n + i;
            for j in 0..d_t {
                atoms[(row, j)] = data.treatments[(perm[i], j)];
            }
            for j in 0..data.d_covariate() {
                atoms[(row, d_t + j)] = data.covariates[(i, j)];
            }
        }
    }
    let mass = 1.0 / m as f64;
    Ok(TargetSample {
        atoms,
        masses: Array1::from_elem(m, mass),
        construction: TargetConstruction::Shuffle { rounds, seed },
    })
}

/// Builds the exact product-of-marginals target with all n^2 pairings.
pub fn build_marginal_product(data: &Dataset) -> Result<TargetSample> {
    let n = data.n();
    if n == 0 {
        return Err(Error::TooFewRows(0));
    }
    if n > MARGINAL_PRODUCT_MAX_N {
        return Err(Error::MarginalProductTooLarge {
            n,
            limit: MARGINAL_PRODUCT_MAX_N,
        });
    }
    let d_t = data.d_treatment();
    let d_x = data.d_covariate();
    let m = n * n;
    let mut atoms = Array2::<f64>::zeros((m, d_t + d_x));
    for i in 0..n {
        for j in 0..n {
            let row = i * n + j;
            for k in 0..d_t {
                atoms[(row, k)] = data.treatments[(i, k)];
            }
            for k in 0..d_x {
                atoms[(row, d_t + k)] = data.covariates[(j, k)];
            }
        }
    }
    let mass = 1.0 / m as f64;
    Ok(TargetSample {
        atoms,
        masses: Array1::from_elem(m, mass),
        construction: TargetConstruction::MarginalProduct,
    })
}

pub(crate) fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut carry = 0.0;
    for v in values {
        let y = v - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy(n: usize) -> Dataset {
        let t = Array2::from_shape_fn((n, 1), |(i, _)| i as f64 * 0.5);
        let x = Array2::from_shape_fn((n, 2), |(i, j)| (i + j) as f64);
        Dataset::from_parts(t, x, None).unwrap()
    }

    fn sorted(v: Vec<f64>) -> Vec<f64> {
        let mut v = v;
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    #[test]
    fn shuffle_preserves_both_marginals_per_round() {
        let data = toy(5);
        let target = build_shuffle(&data, 3, 99).unwrap();
        assert_eq!(target.len(), 15);
        let t_data: Vec<f64> = data.treatments.column(0).to_vec();
        for r in 0..3 {
            let block = target.atoms.slice(ndarray::s![r * 5..(r + 1) * 5, ..]);
            // treatment marginal equals the data treatments as a multiset
            let t_round: Vec<f64> = block.column(0).to_vec();
            assert_eq!(sorted(t_round), sorted(t_data.clone()));
            // covariates stay attached to their original rows
            for i in 0..5 {
                assert_eq!(block[(i, 1)], data.covariates[(i, 0)]);
                assert_eq!(block[(i, 2)], data.covariates[(i, 1)]);
            }
        }
        let expected_mass = 1.0 / 15.0;
        for &q in target.masses.iter() {
            assert_eq!(q, expected_mass);
        }
    }

    #[test]
    fn shuffle_is_deterministic_in_the_seed() {
        let data = toy(8);
        let a = build_shuffle(&data, 4, 7).unwrap();
        let b = build_shuffle(&data, 4, 7).unwrap();
        assert_eq!(a.atoms, b.atoms);
        let c = build_shuffle(&data, 4, 8).unwrap();
        assert_ne!(a.atoms, c.atoms);
    }

    #[test]
    fn zero_rounds_is_invalid() {
        assert!(matches!(
            build_shuffle(&toy(3), 0, 1),
            Err(Error::InvalidShuffleRounds)
        ));
    }

    #[test]
    fn marginal_product_enumerates_all_pairings() {
        let data = Dataset::from_parts(
            array![[1.0], [2.0], [3.0]],
            array![[10.0], [20.0], [30.0]],
            None,
        )
        .unwrap();
        let target = build_marginal_product(&data).unwrap();
        assert_eq!(target.len(), 9);
        // product mean of t*x equals the product of the marginal means
        let mean_tx: f64 = (0..9)
            .map(|r| target.masses[r] * target.atoms[(r, 0)] * target.atoms[(r, 1)])
            .sum();
        assert!((mean_tx - 2.0 * 20.0).abs() < 1e-12);
        // every pairing occurs exactly once
        let mut pairs: Vec<(i64, i64)> = (0..9)
            .map(|r| (target.atoms[(r, 0)] as i64, target.atoms[(r, 1)] as i64))
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        assert_eq!(pairs.len(), 9);
    }

    #[test]
    fn marginal_product_guard_fires() {
        let n = MARGINAL_PRODUCT_MAX_N + 1;
        let data = toy(n);
        assert!(matches!(
            build_marginal_product(&data),
            Err(Error::MarginalProductTooLarge { .. })
        ));
    }

    #[test]
    fn default_rounds_follow_the_budget() {
        assert_eq!(default_shuffle_rounds(100), 200);
        assert_eq!(default_shuffle_rounds(1000), 100);
        assert_eq!(default_shuffle_rounds(1600), 63);
        assert_eq!(default_shuffle_rounds(200_000), 1);
    }

    #[test]
    fn from_parts_validates_masses() {
        let atoms = array![[0.0, 1.0], [1.0, 0.0]];
        assert!(TargetSample::from_parts(atoms.clone(), array![0.5, 0.5]).is_ok());
        assert!(matches!(
            TargetSample::from_parts(atoms.clone(), array![0.6, 0.5]),
            Err(Error::BadTargetMasses { .. })
        ));
        assert!(matches!(
            TargetSample::from_parts(atoms, array![1.5, -0.5]),
            Err(Error::BadTargetMasses { .. })
        ));
    }

    #[test]
    fn large_uniform_mass_vectors_pass_the_sum_check() {
        let m = 100_000;
        let atoms = Array2::<f64>::zeros((m, 1));
        let masses = Array1::from_elem(m, 1.0 / m as f64);
        TargetSample::from_parts(atoms, masses).unwrap();
    }
}
