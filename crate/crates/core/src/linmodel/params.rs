use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{max_asymmetry, min_sym_eigenvalue, symmetrize, Mat, Vector};

/// Relative tolerance for the symmetry and PSD checks on covariance inputs.
const SYM_TOL: f64 = 1e-10;

/// Linear-Gaussian filtering problem
///
/// ```text
/// dX = A X dt + σ_B dB,    dZ = H X dt + dW,    X_0 ~ N(m0, Σ0)
/// ```
///
/// Construction only enforces dimensional consistency and that `Σ0` is
/// symmetric PSD. Degenerate choices (`σ_B = 0`, `Σ0 = 0`) are allowed so
/// that deterministic limits can be simulated; whether the standing
/// assumptions hold is reported by
/// [`validate_assumptions`](crate::linmodel::validate_assumptions).
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    a: Mat,
    h: Mat,
    sigma_b: Mat,
    sigma_b_cov: Mat,
    hth: Mat,
    m0: Vector,
    sigma0: Mat,
}

impl ModelParams {
    pub fn new(a: Mat, h: Mat, sigma_b: Mat, m0: Vector, sigma0: Mat) -> Result<Self> {
        let d = a.nrows();
        if d == 0 || a.ncols() != d {
            return Err(Error::Dimension(format!(
                "A must be a non-empty square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if h.ncols() != d || h.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "H must be m x {d}, got {}x{}",
                h.nrows(),
                h.ncols()
            )));
        }
        if sigma_b.nrows() != d || sigma_b.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "sigma_B must be {d} x d_B, got {}x{}",
                sigma_b.nrows(),
                sigma_b.ncols()
            )));
        }
        if m0.len() != d {
            return Err(Error::Dimension(format!(
                "m0 must have length {d}, got {}",
                m0.len()
            )));
        }
        if sigma0.nrows() != d || sigma0.ncols() != d {
            return Err(Error::Dimension(format!(
                "Sigma0 must be {d}x{d}, got {}x{}",
                sigma0.nrows(),
                sigma0.ncols()
            )));
        }
        let scale = sigma0.amax().max(1.0);
        if max_asymmetry(&sigma0) > SYM_TOL * scale {
            return Err(Error::InvalidParameter("Sigma0 is not symmetric".into()));
        }
        let mut sigma0 = sigma0;
        symmetrize(&mut sigma0);
        let min_eig = min_sym_eigenvalue(&sigma0);
        if min_eig < -SYM_TOL * scale {
            return Err(Error::NotPsd {
                what: "Sigma0".into(),
                min_eig,
            });
        }
        if a.iter().chain(h.iter()).chain(sigma_b.iter()).chain(m0.iter()).any(|v| !v.is_finite())
        {
            return Err(Error::InvalidParameter("non-finite model entry".into()));
        }
        let mut sigma_b_cov = &sigma_b * sigma_b.transpose();
        symmetrize(&mut sigma_b_cov);
        let mut hth = h.transpose() * &h;
        symmetrize(&mut hth);
        Ok(Self {
            a,
            h,
            sigma_b,
            sigma_b_cov,
            hth,
            m0,
            sigma0,
        })
    }

    /// One-dimensional model with `d = m = d_B = 1`.
    pub fn scalar(a: f64, h: f64, sigma_b: f64, m0: f64, sigma0: f64) -> Result<Self> {
        let s = |v: f64| Mat::from_element(1, 1, v);
        Self::new(s(a), s(h), s(sigma_b), Vector::from_element(1, m0), s(sigma0))
    }

    /// The scalar model `A = -1, H = 1, σ_B = 1, m0 = 0, Σ0 = 1`, whose
    /// stationary constants all have closed forms.
    pub fn acceptance() -> Self {
        Self::scalar(-1.0, 1.0, 1.0, 0.0, 1.0).expect("acceptance model is valid")
    }

    /// Same dynamics with a different prior.
    pub fn with_prior(&self, m0: Vector, sigma0: Mat) -> Result<Self> {
        Self::new(self.a.clone(), self.h.clone(), self.sigma_b.clone(), m0, sigma0)
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }
    pub fn h(&self) -> &Mat {
        &self.h
    }
    pub fn sigma_b(&self) -> &Mat {
        &self.sigma_b
    }
    /// `Σ_B = σ_B σ_Bᵀ`.
    pub fn sigma_b_cov(&self) -> &Mat {
        &self.sigma_b_cov
    }
    /// `HᵀH`.
    pub fn hth(&self) -> &Mat {
        &self.hth
    }
    pub fn m0(&self) -> &Vector {
        &self.m0
    }
    pub fn sigma0(&self) -> &Mat {
        &self.sigma0
    }
    /// State dimension.
    pub fn d(&self) -> usize {
        self.a.nrows()
    }
    /// Observation dimension.
    pub fn m(&self) -> usize {
        self.h.nrows()
    }
    /// Process-noise dimension.
    pub fn d_b(&self) -> usize {
        self.sigma_b.ncols()
    }
    pub fn is_scalar(&self) -> bool {
        self.d() == 1 && self.m() == 1
    }

    pub fn from_config(cfg: &ModelConfig) -> Result<Self> {
        let (d, m, db) = (cfg.d, cfg.m, cfg.d_b);
        let take = |name: &str, v: &[f64], r: usize, c: usize| -> Result<Mat> {
            if v.len() != r * c {
                return Err(Error::Config(format!(
                    "{name} needs {} entries ({r}x{c} row-major), got {}",
                    r * c,
                    v.len()
                )));
            }
            Ok(Mat::from_row_slice(r, c, v))
        };
        let a = take("A", &cfg.a, d, d)?;
        let h = take("H", &cfg.h, m, d)?;
        let sb = take("sigma_B", &cfg.sigma_b, d, db)?;
        let s0 = take("Sigma0", &cfg.sigma0, d, d)?;
        if cfg.m0.len() != d {
            return Err(Error::Config(format!("m0 needs {d} entries, got {}", cfg.m0.len())));
        }
        Self::new(a, h, sb, Vector::from_column_slice(&cfg.m0), s0)
    }

    pub fn to_config(&self) -> ModelConfig {
        let row_major = |m: &Mat| m.transpose().as_slice().to_vec();
        ModelConfig {
            d: self.d(),
            m: self.m(),
            d_b: self.d_b(),
            a: row_major(&self.a),
            h: row_major(&self.h),
            sigma_b: row_major(&self.sigma_b),
            m0: self.m0.as_slice().to_vec(),
            sigma0: row_major(&self.sigma0),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ModelConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_config(&cfg)
    }
}

/// Serialized form of [`ModelParams`]: dimensions plus row-major arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d: usize,
    pub m: usize,
    pub d_b: usize,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    #[serde(rename = "H")]
    pub h: Vec<f64>,
    #[serde(rename = "sigma_B")]
    pub sigma_b: Vec<f64>,
    pub m0: Vec<f64>,
    #[serde(rename = "Sigma0")]
    pub sigma0: Vec<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelParams::acceptance().to_config()
    }
}

/// Uniform time grid `t_k = k·dt`, `k = 0..=n_steps`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    t_end: f64,
    dt: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() || !(t_end >= 0.0) || !t_end.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "time grid needs dt > 0 and T >= 0, got dt = {dt}, T = {t_end}"
            )));
        }
        let n_steps = (t_end / dt).round() as usize;
        let err = (n_steps as f64 * dt - t_end).abs();
        if err > 1e-9 * dt.max(t_end) + f64::EPSILON {
            return Err(Error::InvalidParameter(format!(
                "T = {t_end} is not a multiple of dt = {dt}"
            )));
        }
        Ok(Self { t_end, dt, n_steps })
    }

    pub fn t0(&self) -> f64 {
        0.0
    }
    pub fn t_end(&self) -> f64 {
        self.t_end
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// Grid with half the step size over the same horizon.
    pub fn halved(&self) -> Self {
        Self {
            t_end: self.t_end,
            dt: self.dt / 2.0,
            n_steps: self.n_steps * 2,
        }
    }

    /// Index of the node at time `t`.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let k = (t / self.dt).round();
        if k < 0.0 || k as usize > self.n_steps || (k * self.dt - t).abs() > 1e-9 * self.dt.max(t.abs())
        {
            return Err(Error::OffGrid(t));
        }
        Ok(k as usize)
    }
}
