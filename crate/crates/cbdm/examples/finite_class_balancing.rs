//! Balances a finite class of moment functions — treatment, covariates, and
//! their products — by minimizing the worst squared gap. Prints the balance
//! table before and after weighting.

use cbdm::discrepancy::npcbgps_moments;
use cbdm::solver::{solve_finite_class, SolverConfig};
use cbdm::tuning::balance_report;
use cbdm::{data, sim, target, Dataset};
use ndarray::{Array1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> cbdm::Result<()> {
    let n = 250;
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let x = sim::draw_covariates(n, &mut rng);
    let t = Array1::from_shape_fn(n, |i| sim::draw_treatment(x.row(i), &mut rng));
    let data = Dataset::from_parts(t.insert_axis(Axis(1)), x, None)?;

    let (work, _) = data::standardize(&data)?;
    let target = target::build_shuffle(&work, target::default_shuffle_rounds(n), 9)?;
    let moments = npcbgps_moments(&work, &target)?;

    let cfg = SolverConfig {
        lambda: 1e-4,
        max_iterations: 60_000,
        ..SolverConfig::default()
    };
    let sol = solve_finite_class(&moments, &cfg)?;
    println!(
        "max |gap| = {:.5}, ess = {:.1}, converged = {}\n",
        sol.ipm_value, sol.ess, sol.converged
    );

    let uniform = Array1::from_elem(n, 1.0 / n as f64);
    let before = balance_report(&work, &target, uniform.view())?;
    let after = balance_report(&work, &target, sol.weights.view())?;
    println!("moment          before      after");
    for (b, a) in before.moments.iter().zip(after.moments.iter()) {
        println!("{:<12}  {:+.5}   {:+.5}", b.name, b.gap(), a.gap());
    }
    println!("\ncorrelation     before      after");
    for (b, a) in before.correlations.iter().zip(after.correlations.iter()) {
        println!("{:<12}  {:+.5}   {:+.5}", b.0, b.1, a.1);
    }
    Ok(())
}
