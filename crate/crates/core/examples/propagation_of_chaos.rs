// Particles and independent mean-field copies sharing every noise
// increment: their gap shrinks as the ensemble grows.

use fpflab::ensemble::{coupled_step, init_ensemble, CoupledSystem, VariantParams};
use fpflab::kalman::{kb_filter, FilterState};
use fpflab::linmodel::{
    simulate_observations, simulate_truth, ModelParams, NoiseBundle, StreamRole, TimeGrid,
};

pub fn run_example() -> fpflab::Result<()> {
    let params = ModelParams::acceptance();
    let grid = TimeGrid::new(2.0, 2e-3)?;
    let seed = 3;
    let truth = simulate_truth(&params, &grid, &NoiseBundle::new(seed, StreamRole::Truth))?;
    let obs = simulate_observations(
        &params,
        &grid,
        &truth,
        &NoiseBundle::new(seed, StreamRole::Observation),
    )?;
    let kf = kb_filter(&params, &grid, &obs, &FilterState::prior(&params))?;

    for n in [50, 200, 800] {
        let ens = init_ensemble(
            &params,
            n,
            VariantParams::default(),
            &NoiseBundle::new(seed, StreamRole::Particle(0)),
        )?;
        let mut sys = CoupledSystem::new(ens)?;
        for k in 0..grid.n_steps() {
            coupled_step(&mut sys, &kf[k], obs.get(k), grid.dt(), &params)?;
        }
        let gap = (sys.ensemble.states() - sys.copies()).norm_squared() / n as f64;
        println!("N = {n:>4}: mean |X - Xbar|^2 = {gap:.3e}");
    }
    Ok(())
}

fn main() -> fpflab::Result<()> {
    run_example()
}
