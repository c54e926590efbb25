//! Property tests for the numerical substrate.

use bsfr_core::calibration::quantile;
use bsfr_core::kernel::{CovKernel, KernelFamily};
use bsfr_core::mvn::chol_with_jitter;
use bsfr_core::sblue::binorm_orthant;
use bsfr_core::warp::{Affine, WarpSpec};
use proptest::prelude::*;

fn kernel_strategy() -> impl Strategy<Value = CovKernel> {
    (
        prop_oneof![
            Just(KernelFamily::SquaredExponential),
            Just(KernelFamily::Matern12),
            Just(KernelFamily::Matern52)
        ],
        0.1..3.0_f64,
        0.1..3.0_f64,
    )
        .prop_map(|(family, s, l)| CovKernel::new(family, s, l).unwrap())
}

fn warp_strategy() -> impl Strategy<Value = WarpSpec> {
    prop_oneof![
        Just(WarpSpec::Identity),
        (-0.3..0.3_f64, 0.0..0.5_f64, -2.0..2.0_f64, 0.2..3.0_f64)
            .prop_map(|(g, h, loc, scale)| WarpSpec::TukeyGh { g, h, loc, scale }),
        (0.5..60.0_f64, 0.05..3.0_f64, prop_oneof![Just(1.0), Just(-1.0)], -5.0..10.0_f64)
            .prop_map(|(shape, scale, c1, c0)| WarpSpec::Gamma {
                shape,
                scale,
                post: Affine { c0, c1 },
            }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_is_symmetric_and_bounded_by_variance(
        kernel in kernel_strategy(),
        a in prop::array::uniform2(-10.0..10.0_f64),
        b in prop::array::uniform2(-10.0..10.0_f64),
    ) {
        let ab = kernel.eval(&a, &b);
        let ba = kernel.eval(&b, &a);
        prop_assert_eq!(ab, ba);
        prop_assert!(ab <= kernel.eval_dist(0.0) + 1e-12);
    }

    #[test]
    fn gram_of_distinct_points_factors_within_the_ladder(
        kernel in kernel_strategy(),
        xs in prop::collection::vec(-20.0..20.0_f64, 2..24),
    ) {
        // Deduplicate so points are distinct.
        let mut xs = xs;
        xs.sort_by(f64::total_cmp);
        xs.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
        let gram = kernel.gram_times(&xs);
        let (_, jitter) = chol_with_jitter(&gram).expect("gram must factor");
        prop_assert!(jitter <= 1e-6);
    }

    #[test]
    fn warp_round_trip_and_monotonicity(
        warp in warp_strategy(),
        z in -5.0..5.0_f64,
        dz in 1e-4..1.0_f64,
    ) {
        let v = warp.forward(z);
        let back = warp.inverse(v).unwrap();
        prop_assert!((back - z).abs() <= 1e-8, "roundtrip {} -> {} -> {}", z, v, back);

        let v2 = warp.forward(z + dz);
        if warp.is_increasing() {
            prop_assert!(v2 > v);
        } else {
            prop_assert!(v2 < v);
        }
    }

    #[test]
    fn warp_log_derivative_tracks_finite_differences(
        warp in warp_strategy(),
        z in -3.0..3.0_f64,
    ) {
        let v = warp.forward(z);
        let h = 1e-6;
        if let (Ok(gp), Ok(gm)) = (warp.inverse(v + h), warp.inverse(v - h)) {
            let fd = ((gp - gm) / (2.0 * h)).abs().ln();
            let got = warp.log_dg(v).unwrap();
            prop_assert!((got - fd).abs() < 1e-4, "log dG {} vs fd {}", got, fd);
        }
    }

    #[test]
    fn quantile_is_monotone_and_within_range(
        mut xs in prop::collection::vec(-100.0..100.0_f64, 1..200),
        p1 in 0.0..1.0_f64,
        p2 in 0.0..1.0_f64,
    ) {
        xs.sort_by(f64::total_cmp);
        let (lo, hi) = (p1.min(p2), p1.max(p2));
        let qlo = quantile(&xs, lo);
        let qhi = quantile(&xs, hi);
        prop_assert!(qlo <= qhi);
        prop_assert!(qlo >= xs[0] && qhi <= xs[xs.len() - 1]);
    }

    #[test]
    fn orthant_quadrants_always_sum_to_one(
        rho in -0.999..0.999_f64,
        c in -3.0..3.0_f64,
        mu in -2.0..2.0_f64,
        sigma in 0.2..3.0_f64,
    ) {
        let (pll, plg, pgl, pgg) = binorm_orthant(mu, mu, sigma, sigma, rho, c).unwrap();
        prop_assert!((pll + plg + pgl + pgg - 1.0).abs() < 1e-12);
        for p in [pll, plg, pgl, pgg] {
            prop_assert!((-1e-9..=1.0 + 1e-9).contains(&p));
        }
    }
}
