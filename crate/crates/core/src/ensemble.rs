//! Finite-N interacting particle system, mean-field copies driven by the
//! exact Kalman moments, and the coupled pair used to measure propagation
//! of chaos.
//!
//! All members of the exact linear family
//!
//! ```text
//! dX = AX dt + γ₁ σ_B dB + ½(1−γ₁²) Σ_B S⁻¹ (X − m) dt
//!        + S Hᵀ (dZ − ½((1−γ₂²) m + (1+γ₂²) X) dt + γ₂ dW̄)
//! ```
//!
//! share one Euler-Maruyama update. `(m, S)` is the empirical pair for the
//! particle system and the Kalman-Bucy pair for mean-field copies; the
//! gain is frozen at the start of each step.

use std::io::Write;

use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::kalman::FilterState;
use crate::linalg::{min_sym_eigenvalue, psd_sqrt, symmetrize, Mat, Vector};
use crate::linmodel::{GaussianSource, ModelParams, NoiseBundle, StreamRole};
use crate::riccati::CovMatrix;

/// Covariances with `λ_min < COLLAPSE_TOL · tr` cannot be inverted.
pub const COLLAPSE_TOL: f64 = 1e-10;

/// `(γ₁, γ₂)` selecting a member of the exact family.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VariantParams {
    pub gamma1: f64,
    pub gamma2: f64,
}

impl VariantParams {
    /// `(1, 1)`: ensemble Kalman-Bucy filter with perturbed observations.
    pub const PERTURBED_OBSERVATION: Self = Self { gamma1: 1.0, gamma2: 1.0 };
    /// `(1, 0)`: stochastic linear FPF / square-root EnKBF.
    pub const STOCHASTIC_FPF: Self = Self { gamma1: 1.0, gamma2: 0.0 };
    /// `(0, 0)`: deterministic linear FPF.
    pub const DETERMINISTIC_FPF: Self = Self { gamma1: 0.0, gamma2: 0.0 };

    pub fn new(gamma1: f64, gamma2: f64) -> Result<Self> {
        let v = Self { gamma1, gamma2 };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        for g in [self.gamma1, self.gamma2] {
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::InvalidParameter(format!(
                    "variant coefficients must lie in [0, 1], got ({}, {})",
                    self.gamma1, self.gamma2
                )));
            }
        }
        Ok(())
    }

    fn needs_inverse(&self) -> bool {
        self.gamma1 < 1.0
    }
}

impl Default for VariantParams {
    fn default() -> Self {
        Self::STOCHASTIC_FPF
    }
}

/// Law of the initial particle draws.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialLaw {
    /// The model prior `N(m0, Σ0)`.
    Prior,
    Gaussian { mean: Vector, cov: Mat },
    /// `mean + cov^{1/2} (E − 1)` with independent `Exp(1)` entries `E`:
    /// skewed, with the given first two moments.
    Exponential { mean: Vector, cov: Mat },
}

impl InitialLaw {
    /// First two moments of the law.
    pub fn moments(&self, params: &ModelParams) -> (Vector, Mat) {
        match self {
            InitialLaw::Prior => (params.m0().clone(), params.sigma0().clone()),
            InitialLaw::Gaussian { mean, cov } | InitialLaw::Exponential { mean, cov } => {
                (mean.clone(), cov.clone())
            }
        }
    }
}

/// Noise consumed by one step: `ΔBⁱ` rows and, for `γ₂ > 0`, `ΔW̄ⁱ` rows.
#[derive(Clone, Debug, PartialEq)]
pub struct StepNoise {
    pub db: Mat,
    pub dw: Option<Mat>,
}

/// `N` particle states with their private noise streams.
#[derive(Clone, Debug)]
pub struct Ensemble {
    t: f64,
    states: Mat,
    variant: VariantParams,
    process: Vec<GaussianSource>,
    perturb: Vec<GaussianSource>,
    steps: usize,
}

/// Empirical mean, unbiased covariance and centred errors `ξⁱ = Xⁱ − m`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleStats {
    pub mean: Vector,
    pub cov: CovMatrix,
    pub errors: Mat,
}

/// Particles from the prior, one stream per particle.
pub fn init_ensemble(
    params: &ModelParams,
    n: usize,
    variant: VariantParams,
    noise: &NoiseBundle,
) -> Result<Ensemble> {
    init_ensemble_with_law(params, n, variant, noise, &InitialLaw::Prior)
}

/// Particle `i` reads its initial draw and then its increments `ΔBⁱ` from
/// stream `Particle(i)`; `ΔW̄ⁱ` comes from `Perturbation(i)`.
pub fn init_ensemble_with_law(
    params: &ModelParams,
    n: usize,
    variant: VariantParams,
    noise: &NoiseBundle,
    law: &InitialLaw,
) -> Result<Ensemble> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "an ensemble needs at least 2 particles, got {n}"
        )));
    }
    let states = Mat::zeros(n, params.d());
    let mut ens = Ensemble::with_streams(params, states, variant, noise)?;
    ens.draw_initial(params, law)?;
    Ok(ens)
}

impl Ensemble {
    fn with_streams(
        params: &ModelParams,
        states: Mat,
        variant: VariantParams,
        noise: &NoiseBundle,
    ) -> Result<Self> {
        variant.validate()?;
        let n = states.nrows();
        if states.ncols() != params.d() {
            return Err(Error::Dimension(format!(
                "states have {} columns, model dimension is {}",
                states.ncols(),
                params.d()
            )));
        }
        let process = (0..n as u64)
            .map(|i| noise.with_role(StreamRole::Particle(i)).source())
            .collect();
        let perturb = if variant.gamma2 > 0.0 {
            (0..n as u64)
                .map(|i| noise.with_role(StreamRole::Perturbation(i)).source())
                .collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            t: 0.0,
            states,
            variant,
            process,
            perturb,
            steps: 0,
        })
    }

    fn draw_initial(&mut self, params: &ModelParams, law: &InitialLaw) -> Result<()> {
        let d = params.d();
        let (mean, cov) = law.moments(params);
        if mean.len() != d || cov.nrows() != d || cov.ncols() != d {
            return Err(Error::Dimension("initial law does not match the model".into()));
        }
        let root = psd_sqrt(&cov, 1e-12)?;
        let exponential = matches!(law, InitialLaw::Exponential { .. });
        let mut z = Vector::zeros(d);
        for (i, src) in self.process.iter_mut().enumerate() {
            if exponential {
                for v in z.iter_mut() {
                    let e: f64 = src.rng_mut().sample(Exp1);
                    *v = e - 1.0;
                }
            } else {
                src.fill_standard(z.as_mut_slice());
            }
            let x = &mean + &root * &z;
            self.states.row_mut(i).copy_from(&x.transpose());
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.states.nrows()
    }
    pub fn t(&self) -> f64 {
        self.t
    }
    /// `N × d` matrix, row `i` is particle `i`.
    pub fn states(&self) -> &Mat {
        &self.states
    }
    pub fn variant(&self) -> VariantParams {
        self.variant
    }
    /// Number of steps taken (equivalently, increments consumed per stream).
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Read one step's increments from every particle stream.
    pub fn draw_increments(&mut self, params: &ModelParams, dt: f64) -> StepNoise {
        let db = draw_rows(&mut self.process, params.d_b(), dt);
        let dw = if self.perturb.is_empty() {
            None
        } else {
            Some(draw_rows(&mut self.perturb, params.m(), dt))
        };
        StepNoise { db, dw }
    }

    /// Advance with gain and centring taken from `(mean, cov)` and the
    /// given increments.
    pub fn apply_step(
        &mut self,
        mean: &Vector,
        cov: &Mat,
        dz: &Vector,
        dt: f64,
        params: &ModelParams,
        noise: &StepNoise,
    ) -> Result<()> {
        advance(&mut self.states, mean, cov, self.variant, dz, dt, params, noise)?;
        self.t += dt;
        self.steps += 1;
        Ok(())
    }

    /// One step of the interacting particle system.
    pub fn step(&mut self, dz: &Vector, dt: f64, params: &ModelParams) -> Result<()> {
        let stats = empirical_stats(self);
        fpf_step(self, &stats, dz, dt, params)
    }

    /// One step as independent mean-field copies: gain and centring come
    /// from the exact filter state instead of the ensemble.
    pub fn step_mean_field(
        &mut self,
        kf: &FilterState,
        dz: &Vector,
        dt: f64,
        params: &ModelParams,
    ) -> Result<()> {
        check_time(self.t, kf.t, dt)?;
        let noise = self.draw_increments(params, dt);
        self.apply_step(&kf.mean, &kf.cov, dz, dt, params, &noise)
    }

    /// Reorder particles together with their streams.
    pub fn permute(&mut self, perm: &[usize]) {
        let n = self.n();
        assert_eq!(perm.len(), n);
        self.states = Mat::from_fn(n, self.states.ncols(), |i, j| self.states[(perm[i], j)]);
        self.process = perm.iter().map(|&i| self.process[i].clone()).collect();
        if !self.perturb.is_empty() {
            self.perturb = perm.iter().map(|&i| self.perturb[i].clone()).collect();
        }
    }
}

/// `len × width` matrix whose row `i` is the next increment of stream `i`.
fn draw_rows(sources: &mut [GaussianSource], width: usize, dt: f64) -> Mat {
    let n = sources.len();
    if width == 1 {
        let mut col = vec![0.0; n];
        for (v, src) in col.iter_mut().zip(sources.iter_mut()) {
            src.increment(dt, std::slice::from_mut(v));
        }
        return Mat::from_vec(n, 1, col);
    }
    let mut out = Mat::zeros(n, width);
    let mut row = vec![0.0; width];
    for (i, src) in sources.iter_mut().enumerate() {
        src.increment(dt, &mut row);
        for (j, v) in row.iter().enumerate() {
            out[(i, j)] = *v;
        }
    }
    out
}

fn add_to_rows(m: &mut Mat, v: &Vector) {
    for (mut col, x) in m.column_iter_mut().zip(v.iter()) {
        col.add_scalar_mut(*x);
    }
}

fn check_time(t_ens: f64, t_kf: f64, dt: f64) -> Result<()> {
    if (t_ens - t_kf).abs() > 1e-6 * dt {
        return Err(Error::Desync(format!(
            "ensemble at t = {t_ens}, filter state at t = {t_kf}"
        )));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn advance(
    states: &mut Mat,
    mean: &Vector,
    cov: &Mat,
    variant: VariantParams,
    dz: &Vector,
    dt: f64,
    params: &ModelParams,
    noise: &StepNoise,
) -> Result<()> {
    let d = params.d();
    let n = states.nrows();
    if dz.len() != params.m() || mean.len() != d || cov.nrows() != d || noise.db.nrows() != n {
        return Err(Error::Dimension("step inputs do not match the model".into()));
    }
    let (g1, g2) = (variant.gamma1, variant.gamma2);
    let gain = cov * params.h().transpose();
    let kh = &gain * params.h();
    let mut drift = Mat::identity(d, d) + params.a() * dt - &kh * (0.5 * (1.0 + g2 * g2) * dt);
    let mut offset = &gain * dz - &kh * mean * (0.5 * (1.0 - g2 * g2) * dt);
    if variant.needs_inverse() {
        let trace = cov.trace();
        let min_eig = min_sym_eigenvalue(cov);
        if !(min_eig >= COLLAPSE_TOL * trace) || trace <= 0.0 {
            return Err(Error::Collapse { min_eig, trace });
        }
        let inv = cov
            .clone()
            .cholesky()
            .ok_or(Error::Collapse { min_eig, trace })?
            .inverse();
        let pull = params.sigma_b_cov() * inv * (0.5 * (1.0 - g1 * g1) * dt);
        drift += &pull;
        offset -= &pull * mean;
    }

    let mut next = &*states * drift.transpose();
    add_to_rows(&mut next, &offset);
    if g1 != 0.0 {
        next.gemm(g1, &noise.db, &params.sigma_b().transpose(), 1.0);
    }
    if g2 != 0.0 {
        let dw = noise
            .dw
            .as_ref()
            .ok_or_else(|| Error::Desync("perturbed-observation increments missing".into()))?;
        next.gemm(g2, dw, &gain.transpose(), 1.0);
    }
    *states = next;
    Ok(())
}

/// Mean, unbiased covariance (divisor `N − 1`) and centred errors.
pub fn empirical_stats(ens: &Ensemble) -> EnsembleStats {
    stats_of(&ens.states)
}

pub(crate) fn stats_of(states: &Mat) -> EnsembleStats {
    let n = states.nrows();
    let mean = Vector::from_iterator(states.ncols(), states.column_iter().map(|c| c.sum() / n as f64));
    let mut errors = states.clone();
    add_to_rows(&mut errors, &-&mean);
    let mut cov = errors.transpose() * &errors / (n as f64 - 1.0);
    symmetrize(&mut cov);
    EnsembleStats {
        mean,
        cov: CovMatrix::from_symmetric(cov),
        errors,
    }
}

/// One step of the interacting system using the supplied statistics for
/// the gain and centring.
pub fn fpf_step(
    ens: &mut Ensemble,
    stats: &EnsembleStats,
    dz: &Vector,
    dt: f64,
    params: &ModelParams,
) -> Result<()> {
    let noise = ens.draw_increments(params, dt);
    ens.apply_step(&stats.mean, &stats.cov, dz, dt, params, &noise)
}

/// Particles and their mean-field copies, coupled through identical
/// initial draws and identical increments.
#[derive(Clone, Debug)]
pub struct CoupledSystem {
    pub ensemble: Ensemble,
    copies: Mat,
    copy_steps: usize,
}

impl CoupledSystem {
    /// Copies start at the particles' initial positions.
    pub fn new(ensemble: Ensemble) -> Result<Self> {
        if ensemble.steps() != 0 {
            return Err(Error::Desync("coupling must start before the first step".into()));
        }
        Ok(Self {
            copies: ensemble.states().clone(),
            ensemble,
            copy_steps: 0,
        })
    }

    /// `N × d` copy states `X̄ⁱ`.
    pub fn copies(&self) -> &Mat {
        &self.copies
    }

    /// Advance both systems one step; the particles use `stats` for their
    /// gain, the copies use the Kalman pair `kf`.
    pub fn step_with_stats(
        &mut self,
        stats: &EnsembleStats,
        kf: &FilterState,
        dz: &Vector,
        dt: f64,
        params: &ModelParams,
    ) -> Result<()> {
        if self.ensemble.steps() != self.copy_steps {
            return Err(Error::Desync(format!(
                "particles consumed {} increments, copies {}",
                self.ensemble.steps(),
                self.copy_steps
            )));
        }
        check_time(self.ensemble.t(), kf.t, dt)?;
        let noise = self.ensemble.draw_increments(params, dt);
        let variant = self.ensemble.variant();
        self.ensemble
            .apply_step(&stats.mean, &stats.cov, dz, dt, params, &noise)?;
        advance(&mut self.copies, &kf.mean, &kf.cov, variant, dz, dt, params, &noise)?;
        self.copy_steps += 1;
        Ok(())
    }
}

/// One coupled step with the particles' own empirical statistics.
pub fn coupled_step(
    sys: &mut CoupledSystem,
    kf: &FilterState,
    dz: &Vector,
    dt: f64,
    params: &ModelParams,
) -> Result<()> {
    let stats = empirical_stats(&sys.ensemble);
    sys.step_with_stats(&stats, kf, dz, dt, params)
}

/// `ξⁱ = Xⁱ − m^{(N)}` and `ξ̄ⁱ = X̄ⁱ − m_t`.
pub fn error_processes(sys: &CoupledSystem, kf: &FilterState) -> (Mat, Mat) {
    let xi = stats_of(sys.ensemble.states()).errors;
    let mut xi_bar = sys.copies.clone();
    add_to_rows(&mut xi_bar, &-&kf.mean);
    (xi, xi_bar)
}

/// Snapshot CSV with columns `time, particle, x_0..x_{d-1}`.
pub fn write_ensemble_csv<W: Write>(mut w: W, ens: &Ensemble) -> Result<()> {
    let d = ens.states.ncols();
    let cols: Vec<String> = (0..d).map(|j| format!("x_{j}")).collect();
    writeln!(w, "time,particle,{}", cols.join(","))?;
    for (i, row) in ens.states.row_iter().enumerate() {
        let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{},{},{}", ens.t, i, vals.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundle(seed: u64) -> NoiseBundle {
        NoiseBundle::new(seed, StreamRole::Particle(0))
    }

    #[test]
    fn needs_two_particles() {
        let p = ModelParams::acceptance();
        assert!(init_ensemble(&p, 1, VariantParams::default(), &bundle(0)).is_err());
    }

    #[test]
    fn degenerate_prior_puts_everyone_at_the_mean() {
        let p = ModelParams::scalar(-1.0, 1.0, 1.0, 0.7, 0.0).unwrap();
        let e = init_ensemble(&p, 10, VariantParams::default(), &bundle(1)).unwrap();
        assert!(e.states().iter().all(|&x| x == 0.7));
    }

    #[test]
    fn initialisation_is_deterministic() {
        let p = ModelParams::acceptance();
        let a = init_ensemble(&p, 50, VariantParams::default(), &bundle(9)).unwrap();
        let b = init_ensemble(&p, 50, VariantParams::default(), &bundle(9)).unwrap();
        assert_eq!(a.states(), b.states());
    }

    #[test]
    fn stats_of_small_ensemble() {
        let s = stats_of(&Mat::from_column_slice(3, 1, &[0.0, 1.0, 2.0]));
        assert_eq!(s.mean[0], 1.0);
        assert_eq!(s.cov[(0, 0)], 1.0);
        assert_eq!(s.errors.as_slice(), &[-1.0, 0.0, 1.0]);
        let flat = stats_of(&Mat::from_element(4, 2, 3.0));
        assert!(flat.cov.iter().all(|&v| v == 0.0));
        assert!(flat.errors.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn uncoupled_particles_follow_the_drift() {
        let p = ModelParams::scalar(-0.8, 0.0, 0.0, 0.0, 1.0).unwrap();
        let mut e = init_ensemble(&p, 5, VariantParams::default(), &bundle(2)).unwrap();
        let x0 = e.states().clone();
        let dz = Vector::from_element(1, 0.3);
        for _ in 0..10 {
            e.step(&dz, 0.01, &p).unwrap();
        }
        let factor = (1.0f64 - 0.8 * 0.01).powi(10);
        for i in 0..5 {
            assert!((e.states()[(i, 0)] - factor * x0[(i, 0)]).abs() < 1e-14);
        }
    }

    #[test]
    fn two_particle_step_matches_hand_evaluation() {
        // A = -1, H = 1, σ_B = 1, γ = (1, 0); states {0.5, -0.1},
        // ΔB = {0.02, -0.03}, dZ = 0.04, dt = 0.01.
        let p = ModelParams::acceptance();
        let mut e = init_ensemble(&p, 2, VariantParams::default(), &bundle(3)).unwrap();
        e.states = Mat::from_column_slice(2, 1, &[0.5, -0.1]);
        let noise = StepNoise {
            db: Mat::from_column_slice(2, 1, &[0.02, -0.03]),
            dw: None,
        };
        let stats = empirical_stats(&e);
        e.apply_step(&stats.mean, &stats.cov, &Vector::from_element(1, 0.04), 0.01, &p, &noise)
            .unwrap();
        // m = 0.2, S = ((0.3)² + (0.3)²)/1 = 0.18
        // x1 = 0.5 - 0.005 + 0.02 + 0.18·(0.04 - 0.5·(0.5 + 0.2)·0.01) = 0.52157
        // x2 = -0.1 + 0.001 - 0.03 + 0.18·(0.04 - 0.5·(-0.1 + 0.2)·0.01) = -0.12189
        assert!((e.states()[(0, 0)] - 0.52157).abs() < 1e-14);
        assert!((e.states()[(1, 0)] + 0.12189).abs() < 1e-14);
    }

    #[test]
    fn collapse_refused_for_deterministic_variant() {
        let p = ModelParams::scalar(-1.0, 1.0, 1.0, 0.0, 0.0).unwrap();
        let mut e = init_ensemble(&p, 4, VariantParams::DETERMINISTIC_FPF, &bundle(4)).unwrap();
        let r = e.step(&Vector::zeros(1), 0.01, &p);
        assert!(matches!(r, Err(Error::Collapse { .. })));
    }

    #[test]
    fn variant_bounds() {
        assert!(VariantParams::new(1.2, 0.0).is_err());
        assert!(VariantParams::new(0.5, 0.5).is_ok());
        assert_eq!(VariantParams::default(), VariantParams::STOCHASTIC_FPF);
    }

    #[test]
    fn coupled_copies_start_on_particles_and_detect_desync() {
        let p = ModelParams::acceptance();
        let e = init_ensemble(&p, 8, VariantParams::default(), &bundle(5)).unwrap();
        let mut sys = CoupledSystem::new(e).unwrap();
        assert_eq!(sys.copies(), sys.ensemble.states());
        let kf = FilterState::prior(&p);
        coupled_step(&mut sys, &kf, &Vector::zeros(1), 0.01, &p).unwrap();
        // the same filter state again is one step behind
        assert!(matches!(
            coupled_step(&mut sys, &kf, &Vector::zeros(1), 0.01, &p),
            Err(Error::Desync(_))
        ));
        sys.ensemble.step(&Vector::zeros(1), 0.01, &p).unwrap();
        let mut kf2 = kf.clone();
        kf2.t = 0.01;
        assert!(matches!(
            coupled_step(&mut sys, &kf2, &Vector::zeros(1), 0.01, &p),
            Err(Error::Desync(_))
        ));
    }

    #[test]
    fn csv_snapshot() {
        let p = ModelParams::acceptance();
        let e = init_ensemble(&p, 3, VariantParams::default(), &bundle(6)).unwrap();
        let mut buf = Vec::new();
        write_ensemble_csv(&mut buf, &e).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time,particle,x_0\n0,0,"));
        assert_eq!(text.lines().count(), 4);
    }
}
