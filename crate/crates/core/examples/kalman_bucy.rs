// Simulate a hidden Ornstein-Uhlenbeck state, observe it in white noise
// and track it with the Kalman-Bucy filter.

use fpflab::kalman::{kb_filter, FilterState};
use fpflab::linmodel::{
    simulate_observations, simulate_truth, ModelParams, NoiseBundle, StreamRole, TimeGrid,
};

pub fn run_example() -> fpflab::Result<()> {
    let params = ModelParams::acceptance();
    let grid = TimeGrid::new(5.0, 1e-3)?;
    let seed = 7;
    let truth = simulate_truth(&params, &grid, &NoiseBundle::new(seed, StreamRole::Truth))?;
    let obs = simulate_observations(
        &params,
        &grid,
        &truth,
        &NoiseBundle::new(seed, StreamRole::Observation),
    )?;
    let path = kb_filter(&params, &grid, &obs, &FilterState::prior(&params))?;

    for k in (0..=grid.n_steps()).step_by(1000) {
        let s = &path[k];
        println!(
            "t = {:.1}  x = {:+.4}  m = {:+.4}  Sigma = {:.4}",
            s.t,
            truth.states[k][0],
            s.mean[0],
            s.cov[(0, 0)]
        );
    }
    Ok(())
}

fn main() -> fpflab::Result<()> {
    run_example()
}
