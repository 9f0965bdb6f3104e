use crate::error::{Error, Result};
use crate::linalg::{gauss_legendre, symmetrize, Mat};
use crate::linmodel::ModelParams;
use crate::riccati::{check_dims, CovMatrix, StabilityConstants};

/// Absolute per-entry tolerance of the adaptive quadrature.
const QUAD_TOL: f64 = 1e-10;
const QUAD_NODES: usize = 8;
const QUAD_MAX_DEPTH: u32 = 40;

/// Closed-form DRE solution
///
/// ```text
/// Σ_t = Σ_∞ + e^{F_∞ t} D_t⁻¹ e^{F_∞ᵀ t},
/// D_t = (Σ0 − Σ_∞)⁻¹ + ∫₀ᵗ e^{F_∞ᵀ s} HᵀH e^{F_∞ s} ds
/// ```
///
/// The integral is evaluated by adaptive Gauss-Legendre quadrature on the
/// matrix exponential. `Σ0 = Σ_∞` returns `Σ_∞`; a singular but non-zero
/// `Σ0 − Σ_∞` is refused because the formula is undefined there.
pub fn explicit_dre_solution(
    sigma0: &CovMatrix,
    consts: &StabilityConstants,
    params: &ModelParams,
    t: f64,
) -> Result<CovMatrix> {
    check_dims(sigma0, params)?;
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("t must be >= 0, got {t}")));
    }
    let sigma_inf: &Mat = &consts.sigma_inf;
    let gap: Mat = &**sigma0 - sigma_inf;
    let scale = 1.0 + sigma_inf.norm();
    if gap.norm() <= 1e-14 * scale {
        return Ok(consts.sigma_inf.clone());
    }
    let sv = gap.clone().singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if smin <= 1e-12 * smax {
        return Err(Error::Degenerate(format!(
            "Σ0 − Σ∞ is singular (singular values {:?})",
            sv.as_slice()
        )));
    }
    let gap_inv = gap
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("Σ0 − Σ∞ is not invertible".into()))?;

    let f = &consts.f_inf;
    let ft = f.transpose();
    let hth = params.hth();
    let integrand = |s: f64| -> Mat {
        let e = (f * s).exp();
        (&ft * s).exp() * hth * e
    };
    let d_t = gap_inv + integrate(&integrand, 0.0, t, f.nrows());
    let d_inv = d_t
        .try_inverse()
        .ok_or_else(|| Error::Degenerate(format!("D_t is singular at t = {t}")))?;
    let e = (f * t).exp();
    let mut out = sigma_inf + &e * d_inv * e.transpose();
    symmetrize(&mut out);
    Ok(CovMatrix::from_symmetric(out))
}

fn integrate(g: &impl Fn(f64) -> Mat, a: f64, b: f64, d: usize) -> Mat {
    if b <= a {
        return Mat::zeros(d, d);
    }
    let (nodes, weights) = gauss_legendre(QUAD_NODES);
    let rule = |lo: f64, hi: f64| -> Mat {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let mut acc = Mat::zeros(d, d);
        for (x, w) in nodes.iter().zip(&weights) {
            acc += g(mid + half * x) * (w * half);
        }
        acc
    };
    adapt(&rule, a, b, rule(a, b), QUAD_TOL, 0)
}

fn adapt(rule: &impl Fn(f64, f64) -> Mat, a: f64, b: f64, whole: Mat, tol: f64, depth: u32) -> Mat {
    let m = 0.5 * (a + b);
    let left = rule(a, m);
    let right = rule(m, b);
    let split = &left + &right;
    if (&split - &whole).amax() <= tol || depth >= QUAD_MAX_DEPTH {
        return split;
    }
    adapt(rule, a, m, left, 0.5 * tol, depth + 1) + adapt(rule, m, b, right, 0.5 * tol, depth + 1)
}
