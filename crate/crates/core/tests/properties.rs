use fpflab::ensemble::{empirical_stats, init_ensemble, VariantParams};
use fpflab::linalg::{min_sym_eigenvalue, Mat, Vector};
use fpflab::linmodel::{ModelParams, NoiseBundle, StreamRole, TimeGrid};
use fpflab::metrics::{double_factorial, gaussian_w2, rate_fit, theoretical_bounds};
use fpflab::riccati::{integrate_dre, ricc_rhs, solve_are, sqrt_ricc, CovMatrix};
use proptest::prelude::*;

fn matrix(d: usize, entries: &[f64]) -> Mat {
    Mat::from_row_slice(d, d, &entries[..d * d])
}

fn spd(d: usize, entries: &[f64], shift: f64) -> Mat {
    let g = matrix(d, entries);
    &g * g.transpose() + Mat::identity(d, d) * shift
}

fn model(d: usize, a: &[f64], h: &[f64], s: &[f64]) -> ModelParams {
    ModelParams::new(
        matrix(d, a),
        matrix(d, h),
        matrix(d, s),
        Vector::zeros(d),
        Mat::identity(d, d),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn ricc_splits_into_square_root_flow(
        d in 1usize..=4,
        a in prop::collection::vec(-2.0f64..2.0, 16),
        h in prop::collection::vec(-2.0f64..2.0, 16),
        s in prop::collection::vec(-1.0f64..1.0, 16),
        q in prop::collection::vec(-1.0f64..1.0, 16),
    ) {
        let params = model(d, &a, &h, &s);
        let q = CovMatrix::new(spd(d, &q, 0.1)).unwrap();
        let lhs = ricc_rhs(&q, &params).unwrap();
        let f = sqrt_ricc(&q, &params).unwrap();
        let rhs = &f * &*q + &*q * f.transpose() + params.sigma_b_cov();
        let scale = 1.0 + lhs.amax();
        prop_assert!((lhs - rhs).amax() <= 1e-12 * scale);
    }

    #[test]
    fn dre_keeps_covariance_positive_definite(
        a in prop::collection::vec(-1.5f64..0.5, 4),
        h in prop::collection::vec(-1.5f64..1.5, 4),
        s in prop::collection::vec(-1.0f64..1.0, 4),
        q in prop::collection::vec(-1.5f64..1.5, 4),
    ) {
        let params = model(2, &a, &h, &s);
        let sigma0 = CovMatrix::new(spd(2, &q, 0.05)).unwrap();
        let grid = TimeGrid::new(2.0, 1e-3).unwrap();
        let path = integrate_dre(&sigma0, &params, &grid).unwrap();
        for node in path.as_slice() {
            prop_assert!(min_sym_eigenvalue(node) > 0.0);
        }
    }

    #[test]
    fn w2_is_a_metric_on_scalar_gaussians(
        m in prop::collection::vec(-5.0f64..5.0, 3),
        v in prop::collection::vec(0.0f64..4.0, 3),
    ) {
        let g = |i: usize| (Vector::from_element(1, m[i]), Mat::from_element(1, 1, v[i]));
        let w = |i: usize, j: usize| {
            let (a, b) = (g(i), g(j));
            gaussian_w2(&a.0, &a.1, &b.0, &b.1).unwrap()
        };
        prop_assert!(w(0, 2) <= w(0, 1) + w(1, 2) + 1e-12);
        prop_assert!((w(0, 1) - w(1, 0)).abs() <= 1e-12);
        let closed = ((m[0] - m[1]).powi(2) + (v[0].sqrt() - v[1].sqrt()).powi(2)).sqrt();
        prop_assert!((w(0, 1) - closed).abs() <= 1e-10);
    }

    #[test]
    fn w2_is_symmetric_for_matrices(
        m1 in prop::collection::vec(-3.0f64..3.0, 3),
        m2 in prop::collection::vec(-3.0f64..3.0, 3),
        q1 in prop::collection::vec(-1.0f64..1.0, 9),
        q2 in prop::collection::vec(-1.0f64..1.0, 9),
    ) {
        let (a, b) = (Vector::from_vec(m1), Vector::from_vec(m2));
        let (s1, s2) = (spd(3, &q1, 0.0), spd(3, &q2, 0.0));
        let ab = gaussian_w2(&a, &s1, &b, &s2).unwrap();
        let ba = gaussian_w2(&b, &s2, &a, &s1).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-8 * (1.0 + ab));
        prop_assert!(gaussian_w2(&a, &s1, &a, &s1).unwrap() <= 1e-6);
    }

    #[test]
    fn power_laws_are_recovered(c in 0.01f64..100.0, k in -2.0f64..1.0) {
        let pts: Vec<(usize, f64)> = [50usize, 100, 200, 400, 800]
            .iter()
            .map(|&n| (n, c * (n as f64).powf(k)))
            .collect();
        let fit = rate_fit(&pts).unwrap();
        prop_assert!((fit.slope - k).abs() <= 1e-10);
        prop_assert!((0.0..=1.0).contains(&fit.r_squared));
    }

    #[test]
    fn double_factorial_recursion(n in 2u64..30) {
        prop_assert_eq!(double_factorial(n), n * double_factorial(n - 2));
    }

    #[test]
    fn larger_prior_variance_gives_larger_constants(s0 in 0.01f64..5.0, ds in 0.01f64..5.0) {
        let base = ModelParams::acceptance();
        let at = |s: f64| {
            let p = base
                .with_prior(Vector::zeros(1), Mat::from_element(1, 1, s))
                .unwrap();
            let c = solve_are(&p).unwrap();
            theoretical_bounds(&p, &c, 1).unwrap()
        };
        let (lo, hi) = (at(s0), at(s0 + ds));
        prop_assert!(hi.c1 > lo.c1);
        prop_assert!(hi.c3 > lo.c3);
        prop_assert!(hi.c4 > lo.c4);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ensemble_statistics_stay_valid_for_every_variant(
        seed in any::<u64>(),
        g1 in prop::sample::select(vec![0.0, 0.5, 1.0]),
        g2 in prop::sample::select(vec![0.0, 0.5, 1.0]),
    ) {
        let params = ModelParams::acceptance();
        let variant = VariantParams::new(g1, g2).unwrap();
        let mut ens = init_ensemble(&params, 50, variant, &NoiseBundle::new(seed, StreamRole::Particle(0))).unwrap();
        let dz = Vector::from_element(1, 0.01);
        for _ in 0..200 {
            let s = empirical_stats(&ens);
            prop_assert!(min_sym_eigenvalue(&s.cov) >= -1e-10);
            prop_assert!(s.errors.column(0).sum().abs() <= 1e-12 * (1.0 + s.errors.amax()) * 50.0);
            ens.step(&dz, 1e-2, &params).unwrap();
        }
    }

    #[test]
    fn relabelling_particles_relabels_trajectories(
        seed in any::<u64>(),
        perm in Just((0..8usize).collect::<Vec<_>>()).prop_shuffle(),
        variant in prop::sample::select(vec![
            VariantParams::STOCHASTIC_FPF,
            VariantParams::PERTURBED_OBSERVATION,
            VariantParams::DETERMINISTIC_FPF,
        ]),
    ) {
        let params = ModelParams::acceptance();
        let noise = NoiseBundle::new(seed, StreamRole::Particle(0));
        let mut a = init_ensemble(&params, 8, variant, &noise).unwrap();
        let mut b = a.clone();
        b.permute(&perm);
        let dz = Vector::from_element(1, -0.02);
        for _ in 0..100 {
            a.step(&dz, 1e-2, &params).unwrap();
            b.step(&dz, 1e-2, &params).unwrap();
        }
        for (i, &p) in perm.iter().enumerate() {
            prop_assert!((b.states()[(i, 0)] - a.states()[(p, 0)]).abs() <= 1e-10);
        }
    }
}
