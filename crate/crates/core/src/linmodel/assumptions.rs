use nalgebra::{Complex, DMatrix};

use crate::linalg::{complex_rank, eigenvalues, min_sym_eigenvalue, stability_margin, Mat};
use crate::linmodel::ModelParams;

/// Eigenvalues with real part at or above `-EIG_RE_TOL` count as
/// not asymptotically stable.
const EIG_RE_TOL: f64 = 1e-10;

/// Smallest eigenvalue of `Σ_B` (relative to its largest) that counts as
/// positive definite.
const SPD_TOL: f64 = 1e-12;

/// Outcome of the standing-assumption checks.
#[derive(Clone, Debug, PartialEq)]
pub struct AssumptionReport {
    /// `(A, H)` detectable.
    pub detectable: bool,
    /// `(A, σ_B)` stabilizable.
    pub stabilizable: bool,
    /// Detectable and stabilizable.
    pub a1: bool,
    /// `Σ_B ≻ 0`.
    pub a2: bool,
    /// `A` Hurwitz.
    pub a3: bool,
    /// `μ(A) = min{-Re λ : λ ∈ eig(A)}`.
    pub mu_a: f64,
    pub min_eig_sigma_b: f64,
}

impl AssumptionReport {
    pub fn all(&self) -> bool {
        self.a1 && self.a2 && self.a3
    }
}

/// Hautus rank tests for A1, eigenvalue tests for A2 and A3.
pub fn validate_assumptions(params: &ModelParams) -> AssumptionReport {
    let d = params.d();
    let a = params.a();
    let unstable: Vec<Complex<f64>> = eigenvalues(a)
        .into_iter()
        .filter(|l| l.re >= -EIG_RE_TOL)
        .collect();

    let shifted = |l: Complex<f64>| -> DMatrix<Complex<f64>> {
        DMatrix::from_fn(d, d, |i, j| {
            let diag = if i == j { l } else { Complex::new(0.0, 0.0) };
            diag - Complex::new(a[(i, j)], 0.0)
        })
    };
    let to_c = |m: &Mat| m.map(|v| Complex::new(v, 0.0));

    let detectable = unstable.iter().all(|&l| {
        let h = to_c(params.h());
        let top = shifted(l);
        let mut stacked = DMatrix::zeros(d + h.nrows(), d);
        stacked.rows_mut(0, d).copy_from(&top);
        stacked.rows_mut(d, h.nrows()).copy_from(&h);
        complex_rank(&stacked) == d
    });
    let stabilizable = unstable.iter().all(|&l| {
        let sb = to_c(params.sigma_b());
        let left = shifted(l);
        let mut wide = DMatrix::zeros(d, d + sb.ncols());
        wide.columns_mut(0, d).copy_from(&left);
        wide.columns_mut(d, sb.ncols()).copy_from(&sb);
        complex_rank(&wide) == d
    });

    let sb = params.sigma_b_cov();
    let min_eig_sigma_b = min_sym_eigenvalue(sb);
    let scale = sb.amax().max(f64::MIN_POSITIVE);
    let a2 = min_eig_sigma_b > SPD_TOL * scale.max(1.0) && sb.amax() > 0.0;

    let mu_a = stability_margin(a);
    AssumptionReport {
        detectable,
        stabilizable,
        a1: detectable && stabilizable,
        a2,
        a3: mu_a > EIG_RE_TOL,
        mu_a,
        min_eig_sigma_b,
    }
}
