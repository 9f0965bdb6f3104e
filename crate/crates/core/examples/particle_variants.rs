// The three classic members of the exact particle family run on one
// observation record; their empirical moments all track the Kalman pair.

use fpflab::ensemble::{empirical_stats, init_ensemble, VariantParams};
use fpflab::kalman::{kb_filter, FilterState};
use fpflab::linmodel::{
    simulate_observations, simulate_truth, ModelParams, NoiseBundle, StreamRole, TimeGrid,
};

pub fn run_example() -> fpflab::Result<()> {
    let params = ModelParams::acceptance();
    let grid = TimeGrid::new(2.0, 1e-3)?;
    let seed = 11;
    let truth = simulate_truth(&params, &grid, &NoiseBundle::new(seed, StreamRole::Truth))?;
    let obs = simulate_observations(
        &params,
        &grid,
        &truth,
        &NoiseBundle::new(seed, StreamRole::Observation),
    )?;
    let kf = kb_filter(&params, &grid, &obs, &FilterState::prior(&params))?;
    let last = kf.last().expect("non-empty path");

    let variants = [
        ("stochastic FPF", VariantParams::STOCHASTIC_FPF),
        ("perturbed-observation EnKBF", VariantParams::PERTURBED_OBSERVATION),
        ("deterministic FPF", VariantParams::DETERMINISTIC_FPF),
    ];
    println!("Kalman: m = {:+.4}, Sigma = {:.4}", last.mean[0], last.cov[(0, 0)]);
    for (label, variant) in variants {
        let noise = NoiseBundle::new(seed, StreamRole::Particle(0));
        let mut ens = init_ensemble(&params, 2000, variant, &noise)?;
        for k in 0..grid.n_steps() {
            ens.step(obs.get(k), grid.dt(), &params)?;
        }
        let s = empirical_stats(&ens);
        println!("{label:>28}: m = {:+.4}, Sigma = {:.4}", s.mean[0], s.cov[(0, 0)]);
    }
    Ok(())
}

fn main() -> fpflab::Result<()> {
    run_example()
}
