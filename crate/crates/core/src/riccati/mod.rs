//! Riccati vector fields, the differential and algebraic Riccati equations,
//! the two state-transition flows driven by a covariance path, and the
//! stability constants that quantify their decay.

mod are;
mod explicit;
mod transition;

use std::ops::Deref;

pub use are::{fit_m1, solve_are, StabilityConstants, ARE_RELATIVE_TOL};
pub use explicit::explicit_dre_solution;
pub use transition::{
    fit_phi_envelope, phi_sweep, psi_sweep, transition_phi, transition_psi, PhiEnvelope,
};

use crate::error::{Error, Result};
use crate::linalg::{max_asymmetry, min_sym_eigenvalue, symmetrize, Mat};
use crate::linmodel::{ModelParams, TimeGrid};

const SYM_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-10;

/// Symmetric PSD `d×d` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CovMatrix(Mat);

impl CovMatrix {
    /// Accepts matrices symmetric to `1e-10` (relative) and PSD to the same
    /// tolerance; the stored value is exactly symmetrized.
    pub fn new(m: Mat) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension(format!(
                "covariance must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let scale = m.amax().max(1.0);
        if max_asymmetry(&m) > SYM_TOL * scale {
            return Err(Error::InvalidParameter("covariance is not symmetric".into()));
        }
        let mut m = m;
        symmetrize(&mut m);
        let min_eig = min_sym_eigenvalue(&m);
        if min_eig < -PSD_TOL * scale {
            return Err(Error::NotPsd {
                what: "covariance".into(),
                min_eig,
            });
        }
        Ok(Self(m))
    }

    pub fn scalar(v: f64) -> Result<Self> {
        Self::new(Mat::from_element(1, 1, v))
    }

    /// Wrap without checks; the caller guarantees symmetry.
    pub(crate) fn from_symmetric(m: Mat) -> Self {
        Self(m)
    }

    pub fn into_inner(self) -> Mat {
        self.0
    }
}

impl Deref for CovMatrix {
    type Target = Mat;
    fn deref(&self) -> &Mat {
        &self.0
    }
}

fn check_dims(q: &Mat, params: &ModelParams) -> Result<()> {
    let d = params.d();
    if q.nrows() != d || q.ncols() != d {
        return Err(Error::Dimension(format!(
            "expected a {d}x{d} matrix, got {}x{}",
            q.nrows(),
            q.ncols()
        )));
    }
    Ok(())
}

/// `AQ + QAᵀ + Σ_B − Q HᵀH Q` without dimension checks.
pub(crate) fn ricc(q: &Mat, params: &ModelParams) -> Mat {
    let aq = params.a() * q;
    let mut out = &aq + aq.transpose() + params.sigma_b_cov() - q * params.hth() * q;
    symmetrize(&mut out);
    out
}

/// `Ricc(Q) = AQ + QAᵀ + Σ_B − Q HᵀH Q`.
pub fn ricc_rhs(q: &CovMatrix, params: &ModelParams) -> Result<Mat> {
    check_dims(q, params)?;
    Ok(ricc(q, params))
}

/// `√Ricc(Q) = A − ½ Q HᵀH`, the generator of the square-root flow.
pub fn sqrt_ricc(q: &CovMatrix, params: &ModelParams) -> Result<Mat> {
    check_dims(q, params)?;
    Ok(sqrt_ricc_unchecked(q, params))
}

pub(crate) fn sqrt_ricc_unchecked(q: &Mat, params: &ModelParams) -> Mat {
    params.a() - 0.5 * q * params.hth()
}

/// One classical RK4 step of the DRE, symmetrized.
pub(crate) fn dre_step(q: &Mat, params: &ModelParams, dt: f64) -> Mat {
    let k1 = ricc(q, params);
    let k2 = ricc(&(q + &k1 * (0.5 * dt)), params);
    let k3 = ricc(&(q + &k2 * (0.5 * dt)), params);
    let k4 = ricc(&(q + &k3 * dt), params);
    let mut next = q + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    symmetrize(&mut next);
    next
}

pub(crate) fn check_psd(q: &Mat, t: f64) -> Result<()> {
    let min_eig = min_sym_eigenvalue(q);
    if !min_eig.is_finite() || min_eig < -PSD_TOL * (1.0 + q.amax()) {
        return Err(Error::PsdLoss { t, min_eig });
    }
    Ok(())
}

/// Covariance values on the nodes `k·dt`, `k = 0..len`.
#[derive(Clone, Debug, PartialEq)]
pub struct CovPath {
    dt: f64,
    mats: Vec<CovMatrix>,
}

impl CovPath {
    pub fn new(dt: f64, mats: Vec<CovMatrix>) -> Result<Self> {
        if !(dt > 0.0) || mats.is_empty() {
            return Err(Error::InvalidParameter("empty covariance path".into()));
        }
        Ok(Self { dt, mats })
    }

    /// Constant path `Q_t ≡ q` on `n_steps + 1` nodes.
    pub fn constant(q: CovMatrix, dt: f64, n_steps: usize) -> Self {
        Self {
            dt,
            mats: vec![q; n_steps + 1],
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn len(&self) -> usize {
        self.mats.len()
    }
    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }
    pub fn t_end(&self) -> f64 {
        (self.mats.len() - 1) as f64 * self.dt
    }
    pub fn node(&self, k: usize) -> &CovMatrix {
        &self.mats[k]
    }
    pub fn as_slice(&self) -> &[CovMatrix] {
        &self.mats
    }

    /// Node index of `t`; errors when `t` is outside the path or between
    /// nodes.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let end = self.t_end();
        if t < -1e-12 * self.dt || t > end + 1e-9 * self.dt.max(end) {
            return Err(Error::PathCoverage { t, start: 0.0, end });
        }
        let k = (t / self.dt).round();
        if (k * self.dt - t).abs() > 1e-9 * self.dt.max(t.abs()) {
            return Err(Error::OffGrid(t));
        }
        Ok((k as usize).min(self.mats.len() - 1))
    }

    pub fn at(&self, t: f64) -> Result<&CovMatrix> {
        Ok(&self.mats[self.index_of(t)?])
    }
}

/// RK4 integration of `dΣ/dt = Ricc(Σ)` on `grid`. Every iterate is
/// symmetrized and checked for positive semi-definiteness.
pub fn integrate_dre(sigma0: &CovMatrix, params: &ModelParams, grid: &TimeGrid) -> Result<CovPath> {
    check_dims(sigma0, params)?;
    let dt = grid.dt();
    let mut mats = Vec::with_capacity(grid.n_steps() + 1);
    let mut q: Mat = (**sigma0).clone();
    mats.push(sigma0.clone());
    for k in 0..grid.n_steps() {
        q = dre_step(&q, params, dt);
        check_psd(&q, grid.time(k + 1))?;
        mats.push(CovMatrix::from_symmetric(q.clone()));
    }
    Ok(CovPath { dt, mats })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cov(v: f64) -> CovMatrix {
        CovMatrix::scalar(v).unwrap()
    }

    #[test]
    fn ricc_scalar_values() {
        let p = ModelParams::acceptance();
        assert_eq!(ricc_rhs(&cov(0.0), &p).unwrap()[(0, 0)], 1.0);
        // -2 + 1 - 1
        assert_eq!(ricc_rhs(&cov(1.0), &p).unwrap()[(0, 0)], -2.0);
        let root = 2f64.sqrt() - 1.0;
        assert!(ricc_rhs(&cov(root), &p).unwrap()[(0, 0)].abs() < 1e-15);
    }

    #[test]
    fn sqrt_ricc_values() {
        let p = ModelParams::acceptance();
        assert_eq!(sqrt_ricc(&cov(0.0), &p).unwrap()[(0, 0)], -1.0);
        let root = 2f64.sqrt() - 1.0;
        let v = sqrt_ricc(&cov(root), &p).unwrap()[(0, 0)];
        assert!((v + (1.0 + 2f64.sqrt()) / 2.0).abs() < 1e-15);
        let blind = ModelParams::scalar(-0.7, 0.0, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(sqrt_ricc(&cov(5.0), &blind).unwrap()[(0, 0)], -0.7);
    }

    #[test]
    fn dimension_mismatch() {
        let p = ModelParams::acceptance();
        let q = CovMatrix::new(Mat::identity(2, 2)).unwrap();
        assert!(matches!(ricc_rhs(&q, &p), Err(Error::Dimension(_))));
        assert!(matches!(sqrt_ricc(&q, &p), Err(Error::Dimension(_))));
    }

    #[test]
    fn cov_matrix_rejects_asymmetric_and_indefinite() {
        assert!(CovMatrix::new(Mat::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0])).is_err());
        assert!(CovMatrix::new(Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])).is_err());
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let p = ModelParams::acceptance();
        let root = 2f64.sqrt() - 1.0;
        let g = TimeGrid::new(2.0, 1e-3).unwrap();
        let path = integrate_dre(&cov(root), &p, &g).unwrap();
        for q in path.as_slice() {
            assert!((q[(0, 0)] - root).abs() < 1e-14);
        }
    }

    #[test]
    fn dre_decreases_monotonically_to_root() {
        let p = ModelParams::acceptance();
        let g = TimeGrid::new(10.0, 1e-3).unwrap();
        let path = integrate_dre(&cov(1.0), &p, &g).unwrap();
        let vals: Vec<f64> = path.as_slice().iter().map(|q| q[(0, 0)]).collect();
        assert!(vals.windows(2).all(|w| w[1] <= w[0]));
        assert!((vals.last().unwrap() - (2f64.sqrt() - 1.0)).abs() < 1e-10);
    }

    #[test]
    fn oversized_step_is_refused() {
        let p = ModelParams::scalar(-1.0, 1.0, 1.0, 0.0, 100.0).unwrap();
        let g = TimeGrid::new(2.0, 0.5).unwrap();
        let r = integrate_dre(&cov(100.0), &p, &g);
        assert!(matches!(r, Err(Error::PsdLoss { .. })), "{r:?}");
    }

    #[test]
    fn path_lookup() {
        let path = CovPath::constant(cov(1.0), 0.1, 10);
        assert_eq!(path.index_of(0.5).unwrap(), 5);
        assert!(matches!(path.index_of(1.5), Err(Error::PathCoverage { .. })));
        assert!(matches!(path.index_of(0.55), Err(Error::OffGrid(_))));
    }

    #[test]
    fn lyapunov_flow_when_unobserved() {
        // H = 0: DRE is linear, scalar closed form v(t) = v∞ + (v0 - v∞)e^{2at}
        let p = ModelParams::scalar(-0.5, 0.0, 1.0, 0.0, 2.0).unwrap();
        let g = TimeGrid::new(3.0, 1e-3).unwrap();
        let path = integrate_dre(&cov(2.0), &p, &g).unwrap();
        let v_inf = 1.0;
        let exact = v_inf + (2.0 - v_inf) * (-3.0f64).exp();
        assert!((path.node(g.n_steps())[(0, 0)] - exact).abs() < 1e-12);
    }
}
