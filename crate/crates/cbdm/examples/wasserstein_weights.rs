//! Balances with the Wasserstein-1 discrepancy instead of a kernel: the
//! nearest-atom closed form when there is no regularization, then the
//! regularized transport solver, which spreads mass toward uniform.

use cbdm::solver::{solve_w1_nearest, solve_w1_transport, SolverConfig};
use cbdm::tuning::ess;
use cbdm::{data, sim, target, Dataset};
use ndarray::{Array1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> cbdm::Result<()> {
    let n = 120;
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let x = sim::draw_covariates(n, &mut rng);
    let t = Array1::from_shape_fn(n, |i| sim::draw_treatment(x.row(i), &mut rng));
    let data = Dataset::from_parts(t.insert_axis(Axis(1)), x, None)?;

    let (work, _) = data::standardize(&data)?;
    // Transport holds the full n-by-m plan, so keep the target modest.
    let target = target::build_shuffle(&work, 4, 5)?;

    let nearest = solve_w1_nearest(&work, &target)?;
    println!(
        "nearest-atom:  w1 = {:.5}, ess = {:.1}",
        nearest.ipm_value,
        ess(nearest.weights.view())
    );

    for lambda in [0.0, 0.05, 0.5] {
        let cfg = SolverConfig {
            lambda,
            ..SolverConfig::default()
        };
        let sol = solve_w1_transport(&work, &target, &cfg)?;
        println!(
            "transport lambda={lambda:<4}: w1 = {:.5}, ess = {:.1}",
            sol.ipm_value,
            ess(sol.weights.view())
        );
    }
    Ok(())
}
