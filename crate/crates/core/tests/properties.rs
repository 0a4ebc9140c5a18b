use proptest::prelude::*;

use fshe_core::bounds::{simplex_integral, simplex_integral_oracle, thm1_curve, BoundParams};
use fshe_core::covariance::{dalang_check, eta, kappa, SpatialKernel, TemporalKernel};
use fshe_core::noise::{build_space_cov, NoiseGrid};
use fshe_core::rng::StreamKey;
use fshe_core::solver::SigmaSpec;
use fshe_core::spectral::{eigenvalue, Grid, SpectralBasis};
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kappa_eta_monotone_and_ordered(h in 0.51f64..0.99, t in 0.01f64..10.0, dt in 0.001f64..1.0) {
        let k = TemporalKernel::fbm(h).unwrap();
        let (k1, k2) = (kappa(&k, t).unwrap(), kappa(&k, t + dt).unwrap());
        let (e1, e2) = (eta(&k, t).unwrap(), eta(&k, t + dt).unwrap());
        prop_assert!(k2 > k1 && e2 > e1);
        prop_assert!(e1 <= 0.5 * k1 * (1.0 + 1e-14));
    }

    #[test]
    fn dalang_flips_at_alpha(alpha in 0.05f64..2.0, beta in 0.01f64..0.99) {
        let k = SpatialKernel::riesz(beta, 1).unwrap();
        prop_assert_eq!(dalang_check(&k, alpha, 1).holds, beta < alpha);
    }

    #[test]
    fn heat_kernel_is_symmetric(t in 0.01f64..2.0, x in -0.99f64..0.99, y in -0.99f64..0.99, alpha in 0.5f64..2.0) {
        let b = SpectralBasis::new(alpha, 48, 96).unwrap();
        let a = b.heat_kernel(t, x, y).unwrap();
        let c = b.heat_kernel(t, y, x).unwrap();
        prop_assert!((a - c).abs() <= 1e-13 * a.abs().max(1.0));
    }

    #[test]
    fn propagation_is_a_semigroup(t in 0.0f64..1.0, s in 0.0f64..1.0, alpha in 0.5f64..2.0) {
        let b = SpectralBasis::new(alpha, 16, 32).unwrap();
        let c = b.project_function(|x| 1.0 - x * x);
        let two = b.propagate(t, &b.propagate(s, &c));
        let one = b.propagate(t + s, &c);
        prop_assert!((two - one).amax() < 1e-14);
    }

    #[test]
    fn eigenvalues_increase(alpha in 0.1f64..2.0, n in 1usize..500) {
        prop_assert!(eigenvalue(alpha, n + 1) > eigenvalue(alpha, n));
    }

    #[test]
    fn sigma_respects_declared_bounds(lambda in -0.99f64..0.99, x in -50.0f64..50.0) {
        for s in [SigmaSpec::Identity, SigmaSpec::sine_perturbed(lambda).unwrap(), SigmaSpec::linear(lambda + 2.0).unwrap()] {
            let (l, u) = s.bounds();
            let v = s.apply(x).abs();
            prop_assert!(v >= l * x.abs() * (1.0 - 1e-12) - 1e-300);
            prop_assert!(v <= u * x.abs() * (1.0 + 1e-12) + 1e-300);
        }
    }

    #[test]
    fn space_covariance_is_symmetric_psd(beta in 0.05f64..0.95, m in 4usize..24) {
        let grid = NoiseGrid::from_grid(&Grid::uniform_interior(m).unwrap(), 0.01, 1).unwrap();
        let f = build_space_cov(&grid, &SpatialKernel::riesz(beta, 1).unwrap()).unwrap();
        prop_assert!((&f.target - f.target.transpose()).amax() == 0.0);
        prop_assert!(f.reconstruction_error() < 1e-10 * f.target.amax());
    }

    #[test]
    fn streams_are_reproducible(seed in any::<u64>(), rep in any::<u32>(), step in any::<u32>()) {
        let a: f64 = StreamKey::new(seed, rep as u64).step(step as u64).random();
        let b: f64 = StreamKey::new(seed, rep as u64).step(step as u64).random();
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn thm1_bounds_are_positive_and_ordered(
        xi in 0.0f64..5.0,
        p in 2.0f64..6.0,
        beta in 0.05f64..0.95,
        t in 0.01f64..5.0,
    ) {
        let mu1 = eigenvalue(2.0, 1);
        let curve = thm1_curve(&BoundParams::new(2.0, beta, 1, mu1, p, xi).unwrap()).unwrap();
        let (lo, hi) = (curve.log_lower(t).unwrap(), curve.log_upper(t).unwrap());
        prop_assert!(lo.is_finite() && hi.is_finite());
        prop_assert!(curve.lower(t).unwrap() >= 0.0);
        prop_assert!(lo <= hi);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn simplex_formula_matches_quadrature(n in 1usize..=3, zeta in -0.9f64..0.5, a in 0.0f64..2.0, len in 0.1f64..3.0) {
        let exact = simplex_integral(n, zeta, a, a + len).unwrap();
        let oracle = simplex_integral_oracle(n, zeta, a, a + len).unwrap();
        prop_assert!((exact - oracle).abs() < 1e-8 * oracle, "{} {}", exact, oracle);
    }
}
