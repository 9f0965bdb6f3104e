use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::linalg::{
    max_sym_eigenvalue, min_sym_eigenvalue, solve_lyapunov, spectral_norm, stability_margin,
    symmetrize, Mat,
};
use crate::linmodel::ModelParams;
use crate::riccati::{dre_step, ricc, CovMatrix};

/// Required `‖Ricc(Σ_∞)‖_F / (1 + ‖Σ_∞‖_F)`.
pub const ARE_RELATIVE_TOL: f64 = 1e-8;

/// Fraction of `λ₀` used as the decay rate of fitted envelopes.
pub const LAMBDA_FRACTION: f64 = 0.9;

const BURN_IN_MAX_STEPS: usize = 2_000_000;
const BURN_IN_TOL: f64 = 1e-4;
const NEWTON_MAX_ITERS: usize = 60;
const M1_MAX_STEPS: usize = 200_000;

/// Steady-state covariance and the decay constants derived from it.
#[derive(Clone, Debug, PartialEq)]
pub struct StabilityConstants {
    /// Positive definite solution of `Ricc(Σ) = 0`.
    pub sigma_inf: CovMatrix,
    /// `A − Σ_∞ HᵀH`.
    pub f_inf: Mat,
    /// `min{−Re λ : λ ∈ eig(F_∞)}`.
    pub lambda0: f64,
    /// Envelope rate actually used, `0.9·λ₀`.
    pub lambda: f64,
    /// `λ_min(Σ_B) / (2 λ_max(Σ_∞))`.
    pub beta: f64,
    /// `exp(√cond(Σ_∞)·M̂₁·‖HᵀH‖₂ / (2β))·√cond(Σ_∞)`.
    pub alpha: f64,
    /// `sup_t ‖Σ_t − Σ_∞‖₂ e^{2λt}` along the DRE from the model prior.
    pub m1_hat: f64,
    /// `‖Ricc(Σ_∞)‖_F`.
    pub are_residual: f64,
}

impl StabilityConstants {
    /// Plain `key = value` report; matrices are written row-major.
    pub fn report(&self) -> String {
        let row_major = |m: &Mat| {
            let vals: Vec<String> = m.transpose().iter().map(|v| format!("{v:e}")).collect();
            format!("[{}]", vals.join(", "))
        };
        let mut s = String::new();
        let _ = writeln!(s, "sigma_inf = {}", row_major(&self.sigma_inf));
        let _ = writeln!(s, "f_inf = {}", row_major(&self.f_inf));
        let _ = writeln!(s, "lambda0 = {:e}", self.lambda0);
        let _ = writeln!(s, "lambda = {:e}", self.lambda);
        let _ = writeln!(s, "alpha = {:e}", self.alpha);
        let _ = writeln!(s, "beta = {:e}", self.beta);
        let _ = writeln!(s, "m1_hat = {:e}", self.m1_hat);
        let _ = writeln!(s, "are_residual = {:e}", self.are_residual);
        s
    }

    /// `√cond(Σ_∞)`.
    pub fn sqrt_cond(&self) -> f64 {
        (max_sym_eigenvalue(&self.sigma_inf) / min_sym_eigenvalue(&self.sigma_inf)).sqrt()
    }
}

/// Solve the ARE by integrating the DRE from the identity until the
/// residual stalls, then polishing with Newton (Kleinman) iterations, each
/// of which is a Lyapunov solve.
pub fn solve_are(params: &ModelParams) -> Result<StabilityConstants> {
    let d = params.d();
    let mut history = Vec::new();

    let mut q = Mat::identity(d, d);
    let rel_residual = |q: &Mat| ricc(q, params).norm() / (1.0 + q.norm());
    let a_norm = params.a().norm();
    let hth_norm = params.hth().norm();
    let sb_norm = params.sigma_b_cov().norm();
    let mut steps = 0;
    loop {
        let r = rel_residual(&q);
        if steps % 1000 == 0 {
            history.push(r);
        }
        if r < BURN_IN_TOL {
            break;
        }
        if steps >= BURN_IN_MAX_STEPS || !r.is_finite() || q.norm() > 1e12 {
            history.push(r);
            return Err(Error::AreNonConvergence {
                iterations: steps,
                history,
            });
        }
        let dt = 0.05 / (1.0 + 2.0 * a_norm + 2.0 * q.norm() * hth_norm + sb_norm / (1.0 + q.norm()));
        q = dre_step(&q, params, dt);
        steps += 1;
    }

    let mut best = rel_residual(&q);
    for _ in 0..NEWTON_MAX_ITERS {
        let f = params.a() - &q * params.hth();
        let rhs = params.sigma_b_cov() + &q * params.hth() * &q;
        let next = solve_lyapunov(&f, &rhs)?;
        let r = rel_residual(&next);
        history.push(r);
        let improved = r < best;
        if improved {
            q = next;
            best = r;
        }
        if best < 1e-14 || !improved {
            break;
        }
    }
    symmetrize(&mut q);

    let residual = ricc(&q, params).norm();
    if residual > ARE_RELATIVE_TOL * (1.0 + q.norm()) || min_sym_eigenvalue(&q) <= 0.0 {
        return Err(Error::AreNonConvergence {
            iterations: steps + history.len(),
            history,
        });
    }

    let f_inf = params.a() - &q * params.hth();
    let lambda0 = stability_margin(&f_inf);
    if lambda0 <= 0.0 {
        return Err(Error::Assumption(format!(
            "closed-loop matrix A - Σ∞HᵀH is not Hurwitz (margin {lambda0:e})"
        )));
    }
    let lambda = LAMBDA_FRACTION * lambda0;
    let beta = min_sym_eigenvalue(params.sigma_b_cov()) / (2.0 * max_sym_eigenvalue(&q));
    let sigma_inf = CovMatrix::from_symmetric(q);
    let m1_hat = fit_m1(params, &sigma_inf, lambda0, lambda)?;
    let sqrt_cond = (max_sym_eigenvalue(&sigma_inf) / min_sym_eigenvalue(&sigma_inf)).sqrt();
    let hth = spectral_norm(params.hth());
    let alpha = (sqrt_cond * m1_hat * hth / (2.0 * beta)).exp() * sqrt_cond;

    Ok(StabilityConstants {
        sigma_inf,
        f_inf,
        lambda0,
        lambda,
        beta,
        alpha,
        m1_hat,
        are_residual: residual,
    })
}

/// `sup_t ‖Σ_t − Σ_∞‖₂ e^{2λt}` along the RK4 DRE path started at the
/// model prior, over `t ∈ [0, 20/λ₀]` or until the gap reaches the
/// `1e-10` roundoff floor.
pub fn fit_m1(params: &ModelParams, sigma_inf: &Mat, lambda0: f64, lambda: f64) -> Result<f64> {
    let horizon = 20.0 / lambda0;
    let stiff = 1.0 + params.a().norm() + 2.0 * params.sigma0().norm() * params.hth().norm();
    let mut dt = (1e-3_f64).min(0.05 / stiff);
    let mut n = (horizon / dt).ceil() as usize;
    if n > M1_MAX_STEPS {
        n = M1_MAX_STEPS;
        dt = horizon / n as f64;
    }
    // Below this gap the difference is integration and rounding error,
    // which the growing weight e^{2λt} would amplify without bound.
    let floor = 1e-10 * (1.0 + sigma_inf.norm());
    let mut q = params.sigma0().clone();
    let mut sup = spectral_norm(&(&q - sigma_inf));
    for k in 1..=n {
        q = dre_step(&q, params, dt);
        let gap = spectral_norm(&(&q - sigma_inf));
        if gap < floor {
            break;
        }
        let t = k as f64 * dt;
        sup = sup.max(gap * (2.0 * lambda * t).exp());
    }
    Ok(sup)
}
