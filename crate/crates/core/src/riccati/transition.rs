use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, Mat};
use crate::linmodel::ModelParams;
use crate::riccati::{check_dims, ricc, sqrt_ricc_unchecked, CovPath};

#[derive(Clone, Copy)]
enum Flow {
    /// `A − Q HᵀH`
    Kalman,
    /// `A − ½ Q HᵀH`
    SquareRoot,
}

impl Flow {
    fn generator(self, q: &Mat, params: &ModelParams) -> Mat {
        match self {
            Flow::Kalman => params.a() - q * params.hth(),
            Flow::SquareRoot => sqrt_ricc_unchecked(q, params),
        }
    }
}

/// Integrate `dY/dt = M(Q_t) Y`, `Y_s = I`, with RK4 on the path's nodes,
/// returning `Y` at every requested target (sorted, all `>= s`).
///
/// The midpoint value of `Q` inside a step is the cubic Hermite
/// interpolant built from the node values and their derivatives
/// `Ricc(Q)`, so the step keeps fourth-order accuracy on DRE paths.
fn sweep(flow: Flow, s: f64, targets: &[f64], path: &CovPath, params: &ModelParams) -> Result<Vec<Mat>> {
    check_dims(path.node(0), params)?;
    let ks = path.index_of(s)?;
    let mut idx = Vec::with_capacity(targets.len());
    for &t in targets {
        if t < s {
            return Err(Error::InvalidParameter(format!(
                "transition needs s <= t, got s = {s}, t = {t}"
            )));
        }
        idx.push(path.index_of(t)?);
    }
    if idx.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("targets must be sorted".into()));
    }
    let d = params.d();
    let dt = path.dt();
    let mut y = Mat::identity(d, d);
    let mut out = Vec::with_capacity(targets.len());
    let mut k = ks;
    let mut next_q_deriv = ricc(path.node(k), params);
    for &kt in &idx {
        while k < kt {
            let q0: &Mat = path.node(k);
            let q1: &Mat = path.node(k + 1);
            let r0 = next_q_deriv;
            let r1 = ricc(q1, params);
            let q_mid = (q0 + q1) * 0.5 + (&r0 - &r1) * (dt / 8.0);
            let m0 = flow.generator(q0, params);
            let mh = flow.generator(&q_mid, params);
            let m1 = flow.generator(q1, params);
            let k1 = &m0 * &y;
            let k2 = &mh * (&y + &k1 * (0.5 * dt));
            let k3 = &mh * (&y + &k2 * (0.5 * dt));
            let k4 = &m1 * (&y + &k3 * dt);
            y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
            next_q_deriv = r1;
            k += 1;
        }
        out.push(y.clone());
    }
    Ok(out)
}

/// State-transition matrix `Φ_{t,s}` of `d/dt Φ = (A − Σ_t HᵀH) Φ`.
pub fn transition_phi(s: f64, t: f64, sigma_path: &CovPath, params: &ModelParams) -> Result<Mat> {
    Ok(sweep(Flow::Kalman, s, &[t], sigma_path, params)?.remove(0))
}

/// State-transition matrix `Ψ_{t,s}` of `d/dt Ψ = (A − ½ Q_t HᵀH) Ψ`.
pub fn transition_psi(s: f64, t: f64, q_path: &CovPath, params: &ModelParams) -> Result<Mat> {
    Ok(sweep(Flow::SquareRoot, s, &[t], q_path, params)?.remove(0))
}

/// `Φ_{t,s}` for every `t` in `targets` from a single forward sweep.
pub fn phi_sweep(s: f64, targets: &[f64], sigma_path: &CovPath, params: &ModelParams) -> Result<Vec<Mat>> {
    sweep(Flow::Kalman, s, targets, sigma_path, params)
}

/// `Ψ_{t,s}` for every `t` in `targets` from a single forward sweep.
pub fn psi_sweep(s: f64, targets: &[f64], q_path: &CovPath, params: &ModelParams) -> Result<Vec<Mat>> {
    sweep(Flow::SquareRoot, s, targets, q_path, params)
}

/// Fitted exponential envelope `‖Φ_{t,s}‖₂ ≤ κ e^{−λ(t−s)}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhiEnvelope {
    pub kappa: f64,
    pub lambda: f64,
    pub t0: f64,
}

/// Smallest `κ` with `‖Φ_{t,s}‖₂ ≤ κ e^{−λ(t−s)}` over all node pairs
/// `t0 ≤ s ≤ t ≤ T` of an `n_nodes`-point uniform grid on `[t0, T]`.
pub fn fit_phi_envelope(
    sigma_path: &CovPath,
    params: &ModelParams,
    lambda: f64,
    t0: f64,
    n_nodes: usize,
) -> Result<PhiEnvelope> {
    let nodes = envelope_nodes(sigma_path, t0, n_nodes)?;
    let mut kappa: f64 = 0.0;
    for (i, &s) in nodes.iter().enumerate() {
        let targets = &nodes[i..];
        let phis = phi_sweep(s, targets, sigma_path, params)?;
        for (phi, &t) in phis.iter().zip(targets) {
            kappa = kappa.max(spectral_norm(phi) * (lambda * (t - s)).exp());
        }
    }
    Ok(PhiEnvelope { kappa, lambda, t0 })
}

/// `n` path nodes spread uniformly (up to node rounding) over `[t0, T]`.
pub(crate) fn envelope_nodes(path: &CovPath, t0: f64, n: usize) -> Result<Vec<f64>> {
    let end = path.t_end();
    if n < 2 || t0 >= end {
        return Err(Error::InvalidParameter(format!(
            "envelope grid needs n >= 2 and t0 < T, got n = {n}, t0 = {t0}, T = {end}"
        )));
    }
    let dt = path.dt();
    let mut nodes: Vec<f64> = (0..n)
        .map(|i| {
            let t = t0 + (end - t0) * i as f64 / (n - 1) as f64;
            (t / dt).round() * dt
        })
        .collect();
    nodes.dedup();
    Ok(nodes)
}
