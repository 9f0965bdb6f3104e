//! Kalman-Bucy filter driven by a recorded observation record.

use std::io::Write;

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::linmodel::{ModelParams, ObservationIncrements, TimeGrid};
use crate::riccati::{check_psd, dre_step, CovMatrix};

/// Conditional mean and covariance at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterState {
    pub t: f64,
    pub mean: Vector,
    pub cov: CovMatrix,
}

impl FilterState {
    /// The prior `N(m0, Σ0)` at `t = 0`.
    pub fn prior(params: &ModelParams) -> Self {
        Self {
            t: 0.0,
            mean: params.m0().clone(),
            cov: CovMatrix::from_symmetric(params.sigma0().clone()),
        }
    }
}

/// Run the Kalman-Bucy filter over the whole record.
///
/// The mean takes explicit Euler steps against the recorded increments,
/// `m ← m + A m dt + Σ Hᵀ (dZ − H m dt)`; the covariance takes the same
/// RK4 step as [`integrate_dre`](crate::riccati::integrate_dre), so both
/// produce bit-identical covariance paths.
pub fn kb_filter(
    params: &ModelParams,
    grid: &TimeGrid,
    obs: &ObservationIncrements,
    init: &FilterState,
) -> Result<Vec<FilterState>> {
    let d = params.d();
    if init.mean.len() != d || init.cov.nrows() != d {
        return Err(Error::Dimension(format!(
            "initial state has dimension {}/{}, model has {d}",
            init.mean.len(),
            init.cov.nrows()
        )));
    }
    if obs.len() != grid.n_steps() {
        return Err(Error::Dimension(format!(
            "{} observation increments for {} steps",
            obs.len(),
            grid.n_steps()
        )));
    }
    check_psd(&init.cov, init.t)?;
    let dt = grid.dt();
    let ht = params.h().transpose();
    let mut out = Vec::with_capacity(grid.n_steps() + 1);
    let mut m = init.mean.clone();
    let mut q: Mat = (*init.cov).clone();
    out.push(init.clone());
    for k in 0..grid.n_steps() {
        let dz = obs.get(k);
        let innovation = dz - params.h() * &m * dt;
        let gain = &q * &ht;
        m = &m + params.a() * &m * dt + gain * innovation;
        q = dre_step(&q, params, dt);
        let t = init.t + grid.time(k + 1);
        check_psd(&q, t)?;
        out.push(FilterState {
            t,
            mean: m.clone(),
            cov: CovMatrix::from_symmetric(q.clone()),
        });
    }
    Ok(out)
}

/// CSV with columns `time, m_0..m_{d-1}, S_ij` for the row-major upper
/// triangle of the covariance.
pub fn write_filter_csv<W: Write>(mut w: W, path: &[FilterState]) -> Result<()> {
    let d = path.first().map_or(0, |s| s.mean.len());
    let mut header = vec!["time".to_string()];
    header.extend((0..d).map(|i| format!("m_{i}")));
    for i in 0..d {
        for j in i..d {
            header.push(format!("S_{i}{j}"));
        }
    }
    writeln!(w, "{}", header.join(","))?;
    for s in path {
        let mut row = vec![s.t.to_string()];
        row.extend(s.mean.iter().map(|v| v.to_string()));
        for i in 0..d {
            for j in i..d {
                row.push(s.cov[(i, j)].to_string());
            }
        }
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}
