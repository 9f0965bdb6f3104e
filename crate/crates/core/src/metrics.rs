//! Error functionals, the scalar theoretical constants, Gaussian W₂ and
//! log-log rate fitting with bootstrap error bars.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{min_sym_eigenvalue, psd_sqrt, stability_margin, Mat, Vector};
use crate::linmodel::{derive_seed, ModelParams};
use crate::riccati::StabilityConstants;

/// Clamp tolerance for eigenvalues inside matrix square roots.
pub const W2_CLAMP_TOL: f64 = 1e-12;
pub const BOOTSTRAP_RESAMPLES: usize = 1000;
pub const MIN_TRIALS_PER_N: usize = 30;

/// `n!! = n (n−2) (n−4) …`, empty product for `n ≤ 1`.
pub fn double_factorial(n: u64) -> u64 {
    (0..n / 2).map(|k| n - 2 * k).product()
}

/// Constants of the finite-N error bounds for a scalar model.
#[derive(Clone, Debug, PartialEq)]
pub struct TheoreticalBounds {
    pub p: u32,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub beta: f64,
    pub alpha: f64,
    pub mu_a: f64,
}

impl TheoreticalBounds {
    /// Bound on `E[|Σ^{(N)}_t − Σ_t|^{2p}]^{1/p}`.
    pub fn cov_bound(&self, n: usize, t: f64) -> f64 {
        (self.c1 * (-2.0 * self.beta * t).exp() + self.c2) / n as f64
    }

    /// Bound on `E[|m^{(N)}_t − m_t|²]`; needs the prior variance.
    pub fn mean_bound(&self, sigma0: f64, n: usize, t: f64) -> f64 {
        (sigma0 * (-2.0 * self.mu_a * t).exp() + self.c3) / n as f64
    }

    /// Bound on `E[|Xⁱ_t − X̄ⁱ_t|²]`.
    pub fn coupling_bound(&self, n: usize) -> f64 {
        self.c4 / n as f64
    }

    pub fn report(&self) -> String {
        format!(
            "p = {}\nC1 = {:e}\nC2 = {:e}\nC3 = {:e}\nC4 = {:e}\nbeta = {:e}\nalpha = {:e}\nmu_A = {:e}\n",
            self.p, self.c1, self.c2, self.c3, self.c4, self.beta, self.alpha, self.mu_a
        )
    }
}

pub fn theoretical_bounds(
    params: &ModelParams,
    consts: &StabilityConstants,
    p: u32,
) -> Result<TheoreticalBounds> {
    if !params.is_scalar() {
        return Err(Error::Dimension(
            "theoretical constants are defined for scalar models only".into(),
        ));
    }
    if p == 0 {
        return Err(Error::InvalidParameter("moment order p must be positive".into()));
    }
    let mu_a = stability_margin(params.a());
    if !(mu_a > 0.0) {
        return Err(Error::Assumption(format!("A is not stable: mu(A) = {mu_a}")));
    }
    let s0 = params.sigma0()[(0, 0)];
    let s_inf = consts.sigma_inf[(0, 0)];
    let h2 = params.hth()[(0, 0)];
    let sb = params.sigma_b_cov()[(0, 0)];
    let a4 = consts.alpha.powi(4);
    let pf = p as f64;

    let c1 = 2.0 * a4 * s0 * s0 * (double_factorial(2 * p as u64 - 1) as f64).powf(1.0 / pf);
    let c2 = 4.0 * (2.0 * pf - 1.0) * a4 * s_inf * (s0 + s_inf);
    let c3 = ((c1 + c2) * h2 + sb) / (2.0 * mu_a);
    let c4 = 2.0 * c3
        + 4.0 * s0
        + 3f64.sqrt() * h2 * h2 * (s0 + s_inf) * (c1 + c2) / (mu_a * mu_a)
        + 2.0 * sb / mu_a;
    Ok(TheoreticalBounds {
        p,
        c1,
        c2,
        c3,
        c4,
        beta: consts.beta,
        alpha: consts.alpha,
        mu_a,
    })
}

fn check_psd(s: &Mat, what: &str) -> Result<()> {
    let scale = s.amax().max(1.0);
    let min_eig = min_sym_eigenvalue(s);
    if min_eig < -1e-10 * scale || !min_eig.is_finite() {
        return Err(Error::NotPsd {
            what: what.into(),
            min_eig,
        });
    }
    Ok(())
}

/// `W₂` between `N(m1, s1)` and `N(m2, s2)`.
pub fn gaussian_w2(m1: &Vector, s1: &Mat, m2: &Vector, s2: &Mat) -> Result<f64> {
    let d = m1.len();
    if m2.len() != d || s1.shape() != (d, d) || s2.shape() != (d, d) {
        return Err(Error::Dimension("Gaussian arguments differ in dimension".into()));
    }
    check_psd(s1, "first covariance")?;
    check_psd(s2, "second covariance")?;
    let dm = (m1 - m2).norm_squared();
    if s1 == s2 {
        return Ok(dm.sqrt());
    }
    if d == 1 {
        let gap = s1[(0, 0)].max(0.0).sqrt() - s2[(0, 0)].max(0.0).sqrt();
        return Ok((dm + gap * gap).sqrt());
    }
    let r2 = psd_sqrt(s2, W2_CLAMP_TOL)?;
    let cross = psd_sqrt(&(&r2 * s1 * &r2), W2_CLAMP_TOL)?;
    let bures = (s1.trace() + s2.trace() - 2.0 * cross.trace()).max(0.0);
    Ok((dm + bures).sqrt())
}

/// Quantity recorded per trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Quantity {
    /// `|Σ^{(N)}_t − Σ_t|^{2p}`; the curve reports the `1/p`-th power of its mean.
    CovErr2p,
    /// `|m^{(N)}_t − m_t|²`.
    MeanErr,
    /// `(1/N) Σᵢ |Xⁱ_t − X̄ⁱ_t|²`.
    ParticleCoupling,
    /// `|(1/N) Σᵢ Xⁱ_t − E[X̄_t | Z]|²`.
    FunctionMcX,
    /// `|(1/N) Σᵢ |Xⁱ_t| − E[|X̄_t| | Z]|²`.
    FunctionMcAbs,
    /// `W₂` between two Gaussian moment fits.
    W2,
}

impl Quantity {
    pub const ALL: [Quantity; 6] = [
        Quantity::CovErr2p,
        Quantity::MeanErr,
        Quantity::ParticleCoupling,
        Quantity::FunctionMcX,
        Quantity::FunctionMcAbs,
        Quantity::W2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Quantity::CovErr2p => "cov_err_2p",
            Quantity::MeanErr => "mean_err",
            Quantity::ParticleCoupling => "particle_coupling",
            Quantity::FunctionMcX => "function_mc_x",
            Quantity::FunctionMcAbs => "function_mc_abs",
            Quantity::W2 => "w2",
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Quantity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Quantity::ALL
            .into_iter()
            .find(|q| q.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown quantity `{s}`")))
    }
}

/// One measured value from one trial.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub trial: u64,
    pub n: usize,
    pub t: f64,
    /// A [`Quantity`] name, or an experiment-specific label.
    pub quantity: String,
    pub value: f64,
}

/// Estimate at one particle count with a bootstrap interval.
///
/// `stderr_low`/`stderr_high` are the 15.87% and 84.13% bootstrap
/// percentiles (a one-sigma band); `std_error` is the resample spread.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvePoint {
    pub n: usize,
    pub estimate: f64,
    pub stderr_low: f64,
    pub stderr_high: f64,
    pub std_error: f64,
    pub n_trials: usize,
}

/// Pairwise summation; the result depends only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

fn moment_estimate(values: &[f64], p: u32) -> f64 {
    let mean = pairwise_sum(values) / values.len() as f64;
    if p > 1 {
        mean.max(0.0).powf(1.0 / p as f64)
    } else {
        mean
    }
}

/// Monte Carlo estimate per particle count. Records are keyed by trial
/// id, so input order does not matter.
pub fn mse_curve(
    records: &[TrialRecord],
    quantity: Quantity,
    t: f64,
    p: u32,
) -> Result<Vec<CurvePoint>> {
    let p_eff = if quantity == Quantity::CovErr2p { p } else { 1 };
    let tol = 1e-9 * t.abs().max(1.0);
    let mut by_n: BTreeMap<usize, Vec<(u64, f64)>> = BTreeMap::new();
    for r in records
        .iter()
        .filter(|r| r.quantity == quantity.as_str() && (r.t - t).abs() <= tol)
    {
        by_n.entry(r.n).or_default().push((r.trial, r.value));
    }
    if by_n.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no `{quantity}` records at t = {t}"
        )));
    }
    let mut curve = Vec::with_capacity(by_n.len());
    for (n, mut rows) in by_n {
        if rows.len() < MIN_TRIALS_PER_N {
            return Err(Error::InsufficientData(format!(
                "N = {n} has {} trials, at least {MIN_TRIALS_PER_N} required",
                rows.len()
            )));
        }
        rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let values: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let estimate = moment_estimate(&values, p_eff);
        let seed = derive_seed(t.to_bits(), quantity.as_str(), n as u64, p_eff as u64);
        let (lo, hi, sd) = bootstrap(&values, p_eff, seed);
        curve.push(CurvePoint {
            n,
            estimate,
            stderr_low: lo,
            stderr_high: hi,
            std_error: sd,
            n_trials: values.len(),
        });
    }
    Ok(curve)
}

fn bootstrap(values: &[f64], p: u32, seed: u64) -> (f64, f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = values.len();
    let mut sample = vec![0.0; n];
    let mut stats: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            for s in sample.iter_mut() {
                *s = values[rng.random_range(0..n)];
            }
            moment_estimate(&sample, p)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let mean = pairwise_sum(&stats) / stats.len() as f64;
    let var = stats.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (stats.len() - 1) as f64;
    (
        quantile(&stats, 0.158_655_25),
        quantile(&stats, 0.841_344_75),
        var.sqrt(),
    )
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

/// Least-squares line `y = slope·x + intercept`.
#[derive(Clone, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares; `r² = 1` when `y` is constant.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "line fit needs at least 2 paired points, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::Degenerate("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy <= f64::EPSILON * y.iter().map(|v| v * v).sum::<f64>() {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(LineFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Log-log power-law fit of error against particle count.
#[derive(Clone, Debug, PartialEq)]
pub struct RateFit {
    pub points: Vec<(usize, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn rate_fit(curve: &[(usize, f64)]) -> Result<RateFit> {
    if curve.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "rate fit needs at least 3 points, got {}",
            curve.len()
        )));
    }
    if let Some(&(n, e)) = curve.iter().find(|(n, e)| !(*e > 0.0) || *n == 0) {
        return Err(Error::InvalidParameter(format!(
            "log-log fit needs positive values, got ({n}, {e})"
        )));
    }
    let x: Vec<f64> = curve.iter().map(|(n, _)| (*n as f64).ln()).collect();
    let y: Vec<f64> = curve.iter().map(|(_, e)| e.ln()).collect();
    let fit = linear_fit(&x, &y)?;
    Ok(RateFit {
        points: curve.to_vec(),
        slope: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
    })
}

/// Fit `y ≈ c·e^{−rate·t}` on the points with `t ∈ [t_lo, t_hi]`.
/// Returns `(rate, r²)` of the log-linear regression.
pub fn exponential_decay_fit(t: &[f64], y: &[f64], t_lo: f64, t_hi: f64) -> Result<(f64, f64)> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = t
        .iter()
        .zip(y)
        .filter(|(ti, _)| **ti >= t_lo && **ti <= t_hi)
        .map(|(ti, yi)| (*ti, *yi))
        .unzip();
    if let Some(v) = ys.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "exponential fit needs positive values, got {v}"
        )));
    }
    let logs: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let fit = linear_fit(&xs, &logs)?;
    Ok((-fit.slope, fit.r_squared))
}

/// `E|Y|` for `Y ~ N(mean, var)`.
pub fn gaussian_abs_mean(mean: f64, var: f64) -> f64 {
    if var <= 0.0 {
        return mean.abs();
    }
    let s = var.sqrt();
    let z = mean / s;
    s * (2.0 / std::f64::consts::PI).sqrt() * (-0.5 * z * z).exp() + mean * libm::erf(z / 2f64.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riccati::solve_are;
    use approx::assert_relative_eq;

    #[test]
    fn double_factorial_values() {
        assert_eq!(double_factorial(0), 1);
        assert_eq!(double_factorial(1), 1);
        assert_eq!(double_factorial(5), 15);
        assert_eq!(double_factorial(6), 48);
        assert_eq!(double_factorial(7), 105);
    }

    #[test]
    fn c1_with_unit_alpha() {
        let p = ModelParams::acceptance();
        let mut c = solve_are(&p).unwrap();
        c.alpha = 1.0;
        let b = theoretical_bounds(&p, &c, 1).unwrap();
        assert_eq!(b.c1, 2.0);
    }

    #[test]
    fn zero_prior_kills_c1() {
        let p = ModelParams::scalar(-1.0, 1.0, 1.0, 0.0, 0.0).unwrap();
        let c = solve_are(&p).unwrap();
        for k in 1..5 {
            assert_eq!(theoretical_bounds(&p, &c, k).unwrap().c1, 0.0);
        }
    }

    #[test]
    fn acceptance_constants_by_hand() {
        let p = ModelParams::acceptance();
        let c = solve_are(&p).unwrap();
        let b = theoretical_bounds(&p, &c, 1).unwrap();
        let s = 2f64.sqrt() - 1.0;
        let a4 = c.alpha.powi(4);
        let c1 = 2.0 * a4;
        let c2 = 4.0 * a4 * s * (1.0 + s);
        let c3 = (c1 + c2 + 1.0) / 2.0;
        let c4 = 2.0 * c3 + 4.0 + 3f64.sqrt() * (1.0 + s) * (c1 + c2) + 2.0;
        assert_relative_eq!(b.c1, c1, max_relative = 1e-12);
        assert_relative_eq!(b.c2, c2, max_relative = 1e-12);
        assert_relative_eq!(b.c3, c3, max_relative = 1e-12);
        assert_relative_eq!(b.c4, c4, max_relative = 1e-12);
        assert_eq!(b.mu_a, 1.0);
    }

    #[test]
    fn bounds_refuse_vector_or_unstable_models() {
        let p = ModelParams::scalar(0.5, 1.0, 1.0, 0.0, 1.0).unwrap();
        let c = solve_are(&p).unwrap();
        assert!(matches!(theoretical_bounds(&p, &c, 1), Err(Error::Assumption(_))));
        let p2 = ModelParams::new(
            Mat::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]),
            Mat::identity(2, 2),
            Mat::identity(2, 2),
            Vector::zeros(2),
            Mat::identity(2, 2),
        )
        .unwrap();
        let c2 = solve_are(&p2).unwrap();
        assert!(matches!(theoretical_bounds(&p2, &c2, 1), Err(Error::Dimension(_))));
    }

    #[test]
    fn w2_examples() {
        let v = |x: f64| Vector::from_element(1, x);
        let m = |x: f64| Mat::from_element(1, 1, x);
        assert_eq!(gaussian_w2(&v(0.3), &m(2.0), &v(0.3), &m(2.0)).unwrap(), 0.0);
        assert_relative_eq!(gaussian_w2(&v(1.0), &m(1.0), &v(0.0), &m(1.0)).unwrap(), 1.0);
        assert_relative_eq!(gaussian_w2(&v(0.0), &m(4.0), &v(0.0), &m(1.0)).unwrap(), 1.0);
        assert!(gaussian_w2(&v(0.0), &m(-1.0), &v(0.0), &m(1.0)).is_err());
    }

    #[test]
    fn w2_commuting_matrices_reduce_to_diagonal_formula() {
        let s1 = Mat::from_diagonal(&Vector::from_vec(vec![4.0, 1.0]));
        let s2 = Mat::from_diagonal(&Vector::from_vec(vec![1.0, 9.0]));
        let w = gaussian_w2(&Vector::zeros(2), &s1, &Vector::zeros(2), &s2).unwrap();
        assert_relative_eq!(w, (1.0f64 + 4.0).sqrt(), epsilon = 1e-12);
    }

    fn synthetic(c: f64, ns: &[usize], trials: u64) -> Vec<TrialRecord> {
        let mut out = Vec::new();
        for &n in ns {
            for trial in 0..trials {
                out.push(TrialRecord {
                    trial,
                    n,
                    t: 2.0,
                    quantity: Quantity::MeanErr.to_string(),
                    value: c / n as f64,
                });
            }
        }
        out
    }

    #[test]
    fn curve_passes_known_function_through() {
        let recs = synthetic(3.0, &[100, 200, 400], 30);
        let curve = mse_curve(&recs, Quantity::MeanErr, 2.0, 1).unwrap();
        for pt in &curve {
            assert_relative_eq!(pt.estimate, 3.0 / pt.n as f64, max_relative = 1e-14);
            assert!(pt.stderr_low <= pt.estimate * (1.0 + 1e-14));
            assert!(pt.stderr_high >= pt.estimate * (1.0 - 1e-14));
        }
        let pts: Vec<_> = curve.iter().map(|c| (c.n, c.estimate)).collect();
        let fit = rate_fit(&pts).unwrap();
        assert_relative_eq!(fit.slope, -1.0, epsilon = 1e-12);
        let zeros = synthetic(0.0, &[10, 20], 40);
        assert!(mse_curve(&zeros, Quantity::MeanErr, 2.0, 1)
            .unwrap()
            .iter()
            .all(|p| p.estimate == 0.0));
    }

    #[test]
    fn curve_requires_enough_trials() {
        let recs = synthetic(1.0, &[100, 200], 29);
        assert!(matches!(
            mse_curve(&recs, Quantity::MeanErr, 2.0, 1),
            Err(Error::InsufficientData(_))
        ));
        assert!(mse_curve(&recs, Quantity::CovErr2p, 2.0, 1).is_err());
    }

    #[test]
    fn curve_ignores_record_order() {
        let mut recs = synthetic(1.0, &[50], 40);
        for (i, r) in recs.iter_mut().enumerate() {
            r.value = (i as f64 * 0.37).sin().abs();
        }
        let a = mse_curve(&recs, Quantity::MeanErr, 2.0, 1).unwrap();
        recs.reverse();
        let b = mse_curve(&recs, Quantity::MeanErr, 2.0, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rate_fit_examples() {
        let ns = [100usize, 200, 400];
        let inv: Vec<_> = ns.iter().map(|&n| (n, 1.0 / n as f64)).collect();
        let f = rate_fit(&inv).unwrap();
        assert_relative_eq!(f.slope, -1.0, epsilon = 1e-12);
        assert_relative_eq!(f.r_squared, 1.0, epsilon = 1e-12);
        let flat: Vec<_> = ns.iter().map(|&n| (n, 0.7)).collect();
        assert_relative_eq!(rate_fit(&flat).unwrap().slope, 0.0, epsilon = 1e-12);
        let half: Vec<_> = ns.iter().map(|&n| (n, (n as f64).powf(-0.5))).collect();
        assert_relative_eq!(rate_fit(&half).unwrap().slope, -0.5, epsilon = 1e-12);
        assert!(rate_fit(&[(1, 1.0), (2, 0.0), (3, 1.0)]).is_err());
        assert!(rate_fit(&[(1, 1.0), (2, 1.0)]).is_err());
    }

    #[test]
    fn exponential_fit_recovers_rate() {
        let t: Vec<f64> = (0..50).map(|k| 0.1 * k as f64).collect();
        let y: Vec<f64> = t.iter().map(|s| 3.0 * (-1.7 * s).exp()).collect();
        let (rate, r2) = exponential_decay_fit(&t, &y, 0.5, 5.0).unwrap();
        assert_relative_eq!(rate, 1.7, epsilon = 1e-10);
        assert_relative_eq!(r2, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn abs_mean_limits() {
        assert_relative_eq!(gaussian_abs_mean(0.0, 1.0), (2.0 / std::f64::consts::PI).sqrt());
        assert_eq!(gaussian_abs_mean(-2.0, 0.0), 2.0);
        assert_relative_eq!(gaussian_abs_mean(40.0, 1.0), 40.0, epsilon = 1e-12);
    }

    #[test]
    fn quantity_names_round_trip() {
        for q in Quantity::ALL {
            assert_eq!(q.as_str().parse::<Quantity>().unwrap(), q);
        }
        assert!("nope".parse::<Quantity>().is_err());
    }
}
