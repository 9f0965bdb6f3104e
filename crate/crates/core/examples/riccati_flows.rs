// Covariance flow of the scalar model `A = −1, H = 1, σ_B = 1`: the ARE
// solution, the RK4 path against the explicit solution, and the decay
// envelope of the square-root Riccati transition matrix.

use fpflab::linalg::spectral_norm;
use fpflab::linmodel::{ModelParams, TimeGrid};
use fpflab::riccati::{explicit_dre_solution, integrate_dre, psi_sweep, solve_are, CovMatrix};

pub fn run_example() -> fpflab::Result<()> {
    let params = ModelParams::acceptance();
    let consts = solve_are(&params)?;
    print!("{}", consts.report());

    let grid = TimeGrid::new(5.0, 1e-3)?;
    let sigma0 = CovMatrix::new(params.sigma0().clone())?;
    let path = integrate_dre(&sigma0, &params, &grid)?;
    for t in [0.5, 1.0, 2.0, 5.0] {
        let rk4 = path.at(t)?[(0, 0)];
        let exact = explicit_dre_solution(&sigma0, &consts, &params, t)?[(0, 0)];
        println!("t = {t}: rk4 {rk4:.12}  explicit {exact:.12}");
    }

    let targets = [1.0, 2.0, 3.0, 4.0, 5.0];
    for (psi, t) in psi_sweep(0.0, &targets, &path, &params)?.iter().zip(targets) {
        let envelope = consts.alpha * (-consts.beta * t).exp();
        println!("|Psi(t={t}, 0)| = {:.3e} <= {envelope:.3e}", spectral_norm(psi));
        assert!(spectral_norm(psi) <= envelope);
    }
    Ok(())
}

fn main() -> fpflab::Result<()> {
    run_example()
}
