//! Small dense linear-algebra helpers shared by the filter modules.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Replace `m` by `(m + mᵀ)/2`.
pub fn symmetrize(m: &mut Mat) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn max_asymmetry(m: &Mat) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn ensure_square(m: &Mat, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(m: &Mat) -> Vec<f64> {
    if m.nrows() == 1 {
        return vec![m[(0, 0)]];
    }
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_sym_eigenvalue(m: &Mat) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(0.0)
}

pub fn max_sym_eigenvalue(m: &Mat) -> f64 {
    sym_eigenvalues(m).last().copied().unwrap_or(0.0)
}

/// Largest singular value.
pub fn spectral_norm(m: &Mat) -> f64 {
    if m.nrows() == 1 && m.ncols() == 1 {
        return m[(0, 0)].abs();
    }
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Eigenvalues of a general real square matrix.
pub fn eigenvalues(m: &Mat) -> Vec<Complex<f64>> {
    if m.nrows() == 1 {
        return vec![Complex::new(m[(0, 0)], 0.0)];
    }
    m.clone().complex_eigenvalues().iter().copied().collect()
}

/// `min{-Re(λ)}` over the spectrum of `m`; positive iff `m` is Hurwitz.
pub fn stability_margin(m: &Mat) -> f64 {
    eigenvalues(m)
        .iter()
        .map(|l| -l.re)
        .fold(f64::INFINITY, f64::min)
}

/// Numerical rank with the threshold `max(rows, cols)·ε·σ_max`.
pub fn complex_rank(m: &DMatrix<Complex<f64>>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    let tol = m.nrows().max(m.ncols()) as f64 * f64::EPSILON * smax;
    sv.iter().filter(|&&s| s > tol).count()
}

/// Symmetric PSD square root via eigendecomposition, clamping eigenvalues
/// below `clamp_tol` (relative to the largest) to zero.
pub fn psd_sqrt(m: &Mat, clamp_tol: f64) -> Result<Mat> {
    let n = m.nrows();
    if n == 1 {
        let v = m[(0, 0)];
        let scale = v.abs().max(1.0);
        if v < -clamp_tol * scale {
            return Err(Error::NotPsd {
                what: "square-root argument".into(),
                min_eig: v,
            });
        }
        return Ok(Mat::from_element(1, 1, v.max(0.0).sqrt()));
    }
    let eig = m.clone().symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(1.0_f64, |a, &b| a.max(b.abs()));
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -clamp_tol * scale {
        return Err(Error::NotPsd {
            what: "square-root argument".into(),
            min_eig: min,
        });
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    let mut out = v * Mat::from_diagonal(&roots) * v.transpose();
    symmetrize(&mut out);
    Ok(out)
}

/// Solve `F X + X Fᵀ + Q = 0` by Kronecker vectorisation. Meant for the
/// small state dimensions used here.
pub fn solve_lyapunov(f: &Mat, q: &Mat) -> Result<Mat> {
    let n = f.nrows();
    let id = Mat::identity(n, n);
    let op = id.kronecker(f) + f.kronecker(&id);
    let rhs = -Vector::from_column_slice(q.as_slice());
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Degenerate("singular Lyapunov operator".into()))?;
    let mut x = Mat::from_column_slice(n, n, sol.as_slice());
    symmetrize(&mut x);
    Ok(x)
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(8);
        // degree 15 is the exactness limit for 8 nodes
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((integral - 2.0 / 15.0).abs() < 1e-14);
        let total: f64 = w.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
    }

    #[test]
    fn lyapunov_matches_scalar_closed_form() {
        let f = Mat::from_element(1, 1, -2.0);
        let q = Mat::from_element(1, 1, 3.0);
        let x = solve_lyapunov(&f, &q).unwrap();
        assert!((x[(0, 0)] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let m = Mat::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let r = psd_sqrt(&m, 1e-12).unwrap();
        assert!((&r * &r - &m).norm() < 1e-12);
        let bad = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(psd_sqrt(&bad, 1e-12).is_err());
    }

    #[test]
    fn jordan_block_has_zero_margin() {
        let a = Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(stability_margin(&a).abs() < 1e-12);
    }
}
