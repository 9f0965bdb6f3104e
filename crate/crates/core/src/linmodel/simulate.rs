use std::io::Write;

use crate::error::{Error, Result};
use crate::linalg::{psd_sqrt, Mat, Vector};
use crate::linmodel::{GaussianSource, ModelParams, NoiseBundle, TimeGrid};

/// Hidden-state path `X_{t_k}`, `k = 0..=n_steps`.
#[derive(Clone, Debug, PartialEq)]
pub struct TruthPath {
    pub states: Vec<Vector>,
}

/// Recorded observation increments `dZ_k = H X_{t_k} dt + ΔW_k`,
/// `k = 0..n_steps`. Every filter of a trial consumes the same record.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationIncrements {
    dz: Vec<Vector>,
    dt: f64,
}

impl ObservationIncrements {
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn len(&self) -> usize {
        self.dz.len()
    }
    pub fn is_empty(&self) -> bool {
        self.dz.is_empty()
    }
    pub fn get(&self, k: usize) -> &Vector {
        &self.dz[k]
    }
    pub fn as_slice(&self) -> &[Vector] {
        &self.dz
    }

    /// Build a record directly from increments (test hooks, replayed data).
    pub fn from_increments(dz: Vec<Vector>, dt: f64) -> Self {
        Self { dz, dt }
    }
}

/// Draw `m + S^{1/2} z` with `z` read from `src`.
pub(crate) fn draw_gaussian(src: &mut GaussianSource, mean: &Vector, sqrt_cov: &Mat) -> Vector {
    let mut z = Vector::zeros(mean.len());
    src.fill_standard(z.as_mut_slice());
    mean + sqrt_cov * z
}

/// Euler-Maruyama path of `dX = AX dt + σ_B dB` from `X_0 ~ N(m0, Σ0)`.
pub fn simulate_truth(params: &ModelParams, grid: &TimeGrid, noise: &NoiseBundle) -> Result<TruthPath> {
    let mut src = noise.source();
    let root = psd_sqrt(params.sigma0(), 1e-12)?;
    let dt = grid.dt();
    let mut x = draw_gaussian(&mut src, params.m0(), &root);
    let mut db = Vector::zeros(params.d_b());
    let mut states = Vec::with_capacity(grid.n_steps() + 1);
    states.push(x.clone());
    for _ in 0..grid.n_steps() {
        src.increment(dt, db.as_mut_slice());
        x = &x + params.a() * &x * dt + params.sigma_b() * &db;
        states.push(x.clone());
    }
    Ok(TruthPath { states })
}

/// Observation record driven by a fresh `W` stream read from `noise`.
pub fn simulate_observations(
    params: &ModelParams,
    grid: &TimeGrid,
    truth: &TruthPath,
    noise: &NoiseBundle,
) -> Result<ObservationIncrements> {
    let mut src = noise.source();
    let mut dw = Vec::with_capacity(grid.n_steps());
    for _ in 0..grid.n_steps() {
        let mut w = Vector::zeros(params.m());
        src.increment(grid.dt(), w.as_mut_slice());
        dw.push(w);
    }
    observations_from_noise(params, grid, truth, &dw)
}

/// `dZ_k = H X_k dt + ΔW_k` for caller-supplied `ΔW_k`.
pub fn observations_from_noise(
    params: &ModelParams,
    grid: &TimeGrid,
    truth: &TruthPath,
    dw: &[Vector],
) -> Result<ObservationIncrements> {
    if truth.states.len() != grid.n_steps() + 1 {
        return Err(Error::Dimension(format!(
            "truth path has {} nodes, grid needs {}",
            truth.states.len(),
            grid.n_steps() + 1
        )));
    }
    if dw.len() != grid.n_steps() {
        return Err(Error::Dimension(format!(
            "{} noise increments for {} steps",
            dw.len(),
            grid.n_steps()
        )));
    }
    let dt = grid.dt();
    let mut dz = Vec::with_capacity(grid.n_steps());
    for (x, w) in truth.states.iter().zip(dw) {
        if x.len() != params.d() || w.len() != params.m() {
            return Err(Error::Dimension(format!(
                "state of length {} / noise of length {} against H of shape {}x{}",
                x.len(),
                w.len(),
                params.m(),
                params.d()
            )));
        }
        dz.push(params.h() * x * dt + w);
    }
    Ok(ObservationIncrements { dz, dt })
}

/// Long-format CSV `time,component,value`.
pub fn write_path_csv<W: Write>(mut w: W, grid: &TimeGrid, states: &[Vector]) -> Result<()> {
    writeln!(w, "time,component,value")?;
    for (k, x) in states.iter().enumerate() {
        for (c, v) in x.iter().enumerate() {
            writeln!(w, "{},{},{}", grid.time(k), c, v)?;
        }
    }
    Ok(())
}
