//! Computes balancing weights for a confounded continuous treatment and
//! shows the before/after dependence between treatment and covariates.
//!
//! Run with `cargo run --example compute_weights`.

use cbdm::solver::{solve_mmd, SolverConfig};
use cbdm::{data, discrepancy, kernel, sim, target, Dataset, KernelSpec};
use ndarray::{Array1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> cbdm::Result<()> {
    let n = 300;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = sim::draw_covariates(n, &mut rng);
    let t = Array1::from_shape_fn(n, |i| sim::draw_treatment(x.row(i), &mut rng));
    let data = Dataset::from_parts(t.insert_axis(Axis(1)), x, None)?;

    // Everything downstream runs on standardized coordinates.
    let (work, _info) = data::standardize(&data)?;
    let target = target::build_shuffle(&work, target::default_shuffle_rounds(n), 42)?;

    let bandwidth = kernel::median_heuristic_bandwidth(work.z_matrix().view())?;
    let spec = KernelSpec::composed(KernelSpec::gaussian(bandwidth)?, KernelSpec::polynomial(1)?);
    let form = discrepancy::mmd_form(&spec, &work, &target)?;

    let cfg = SolverConfig {
        lambda: 0.01,
        cap: 5.0,
        ..SolverConfig::default()
    };
    let sol = solve_mmd(&form, &cfg)?;

    let uniform = Array1::from_elem(n, 1.0 / n as f64);
    let before = discrepancy::mmd_value(&form, uniform.view())?.sqrt();
    println!("mmd (uniform weights):  {before:.6}");
    println!("mmd (balanced weights): {:.6}", sol.ipm_value);
    println!("effective sample size:  {:.1} of {n}", sol.ess);
    println!(
        "largest weight: {:.5} (cap {:.5})",
        sol.weights.iter().cloned().fold(0.0, f64::max),
        sol.cap / n as f64
    );
    println!("converged: {} in {} iterations", sol.converged, sol.iterations);
    Ok(())
}
