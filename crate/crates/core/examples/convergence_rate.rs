// Monte Carlo estimate of how the ensemble's covariance and mean errors
// shrink with N, written to a result directory.

use fpflab::harness::{run, write_outputs, ExperimentConfig, ExperimentName};

pub fn run_example() -> fpflab::Result<()> {
    let mut cfg = ExperimentConfig::default_for(ExperimentName::Convergence);
    cfg.n_list = vec![20, 40, 80];
    cfg.n_trials = 40;
    cfg.t_end = 1.0;
    cfg.checkpoints = vec![1.0];
    cfg.dt = 2e-3;
    cfg.dt_check = false;
    let result = run(&cfg)?;
    for f in &result.fits {
        println!("{} at t = {}: slope {:.3}, r2 {:.3}", f.quantity, f.t, f.slope, f.r_squared);
    }
    let dir = std::env::temp_dir().join(format!("fpflab-convergence-{}", std::process::id()));
    write_outputs(&result, &dir, true)?;
    println!("wrote {}", dir.display());
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

fn main() -> fpflab::Result<()> {
    run_example()
}
