//! Sweeps the (lambda, cap) grid and marks the knee: the cell with the most
//! effective sample size among those whose discrepancy stays within a band
//! of the best achieved.

use cbdm::tuning::{frontier, knee_point};
use cbdm::{data, kernel, sim, target, Dataset, KernelSpec};
use ndarray::{Array1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> cbdm::Result<()> {
    let n = 200;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = sim::draw_covariates(n, &mut rng);
    let t = Array1::from_shape_fn(n, |i| sim::draw_treatment(x.row(i), &mut rng));
    let data = Dataset::from_parts(t.insert_axis(Axis(1)), x, None)?;

    let (work, _) = data::standardize(&data)?;
    let target = target::build_shuffle(&work, target::default_shuffle_rounds(n), 17)?;
    let bandwidth = kernel::median_heuristic_bandwidth(work.z_matrix().view())?;
    let spec = KernelSpec::composed(KernelSpec::gaussian(bandwidth)?, KernelSpec::polynomial(1)?);

    let lambdas = [0.0, 0.01, 0.1, 1.0];
    let caps = [2.0, 5.0, 20.0];
    let points = frontier(&work, &target, &spec, &lambdas, &caps)?;
    let knee = knee_point(&points);

    println!("lambda   cap    mmd        ess");
    for (i, p) in points.iter().enumerate() {
        let mark = if Some(i) == knee { "  <- knee" } else { "" };
        println!(
            "{:<7}  {:<5}  {:.6}  {:>6.1}{mark}",
            p.lambda, p.cap, p.ipm_value, p.ess
        );
    }
    Ok(())
}
