// Mean-field copies driven by the exact Kalman gain stay distributed as
// the Kalman posterior, even from a skewed initial law.

use fpflab::harness::{run, ExperimentConfig, ExperimentName};

pub fn run_example() -> fpflab::Result<()> {
    let mut cfg = ExperimentConfig::default_for(ExperimentName::Exactness);
    cfg.copies = 20_000;
    cfg.t_end = 2.0;
    cfg.checkpoints = vec![0.5, 1.0, 2.0];
    let result = run(&cfg)?;
    for c in &result.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(())
}

fn main() -> fpflab::Result<()> {
    run_example()
}
