//! A cut-down run of the simulation benchmark: one response family, two
//! sample sizes, few replications. The full table takes 100 replications
//! per cell; this keeps the wait short while still separating the weighted
//! estimators from the unweighted one.

use cbdm::sim::{run_benchmark, BenchMethod, ResponseFamily, ScenarioConfig};

fn main() -> cbdm::Result<()> {
    let cfg = ScenarioConfig {
        n_values: vec![100, 200],
        replications: 20,
        methods: vec![
            BenchMethod::Unweighted,
            BenchMethod::Gauss,
            BenchMethod::Exp,
        ],
        shuffle_target_size: 10_000,
        seed: 1,
        ..ScenarioConfig::new(ResponseFamily::Quadratic)
    };

    let cells = run_benchmark(&cfg)?;
    println!("family     n    method       rmse     mc_se   reps");
    for c in &cells {
        println!(
            "{:<9}  {:<4} {:<12} {:.4}   {:.4}  {}",
            c.family.tag(),
            c.n,
            c.method.tag(),
            c.rmse,
            c.mc_se,
            c.replications
        );
    }
    Ok(())
}
