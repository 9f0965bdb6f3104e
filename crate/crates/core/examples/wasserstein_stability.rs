// Two mean-field populations started from different Gaussian laws forget
// their initialisation: the W₂ distance between their moment fits decays
// exponentially.

use fpflab::harness::{run, ExperimentConfig, ExperimentName};
use fpflab::linalg::{Mat, Vector};
use fpflab::metrics::gaussian_w2;

pub fn run_example() -> fpflab::Result<()> {
    let w = gaussian_w2(
        &Vector::from_element(1, 0.0),
        &Mat::from_element(1, 1, 4.0),
        &Vector::from_element(1, 0.0),
        &Mat::from_element(1, 1, 1.0),
    )?;
    println!("W2(N(0,4), N(0,1)) = {w}");

    let mut cfg = ExperimentConfig::default_for(ExperimentName::Stability);
    cfg.copies = 2000;
    cfg.n_trials = 2;
    cfg.dt = 2e-3;
    let result = run(&cfg)?;
    for t in [0.5, 1.0, 2.0, 4.0] {
        if let Some(p) = result.curve("w2", t).first() {
            println!("t = {t}: W2 = {:.4e}", p.estimate);
        }
    }
    if let Some(rate) = result.constant("w2_decay_rate") {
        println!("fitted decay rate {rate}");
    }
    Ok(())
}

fn main() -> fpflab::Result<()> {
    run_example()
}
