//! Algebraic invariants checked on random inputs.

use std::f64::consts::PI;

use proptest::prelude::*;

use tgf_cda::analysis::{drift_bound_M, fit_decay_rate, kappa_window, nd_ratio, WindowInputs};
use tgf_cda::grid::{inner, make_grid, norm_l2, random_solenoidal, DomainSpec, VelocityField};
use tgf_cda::interpolant::InterpolantSpec;
use tgf_cda::io::{decode_snapshot, encode_snapshot};
use tgf_cda::operators::{advect, leray_project, stokes, trilinear};
use tgf_cda::stochastic::PathRng;

fn grid() -> DomainSpec {
    make_grid(16, 2.0 * PI).unwrap()
}

fn field(seed: u64, stream: u64) -> VelocityField {
    let mut rng = PathRng::new(seed, stream);
    random_solenoidal(grid(), 5.0, 0.5, &mut rng)
}

fn window(nd: f64, m: f64, varpi: f64) -> (f64, f64) {
    let w = kappa_window(&WindowInputs {
        nd,
        m,
        beta: 1.0,
        lambda1: 1.0,
        nu: 1.0,
        epsilon0: 0.5,
        lipschitz: 0.1,
        c0: 0.8,
        varpi,
    })
    .unwrap();
    (w.kappa_min, w.kappa_max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nd_ratio_is_scale_invariant(seed in any::<u64>(), c in 1e-3f64..1e3) {
        let f = field(seed, 0);
        let r = nd_ratio(&f).unwrap();
        let rc = nd_ratio(&(&f * c)).unwrap();
        prop_assert!((r - rc).abs() <= 1e-12 * r);
    }

    #[test]
    fn decay_fit_is_scale_invariant(rate in -5.0f64..5.0, c in 1e-6f64..1e6, wiggle in 0.0f64..0.3) {
        let series: Vec<(f64, f64)> = (0..50)
            .map(|i| {
                let t = 0.1 * i as f64;
                (t, (rate * t).exp() * (1.0 + wiggle * (7.0 * t).sin()))
            })
            .collect();
        let scaled: Vec<(f64, f64)> = series.iter().map(|&(t, v)| (t, c * v)).collect();
        let a = fit_decay_rate(&series, 0.5).unwrap();
        let b = fit_decay_rate(&scaled, 0.5).unwrap();
        prop_assert!((a.slope - b.slope).abs() <= 1e-9 * (1.0 + a.slope.abs()));
        prop_assert!((b.intercept - a.intercept - c.ln()).abs() <= 1e-9 * (1.0 + b.intercept.abs()));
        if wiggle == 0.0 {
            prop_assert!((a.slope - rate).abs() <= 1e-9);
        }
    }

    #[test]
    fn window_is_monotone(nd in 0.1f64..3.0, m in 0.0f64..100.0, varpi in 0.01f64..2.0, bump in 1.0f64..2.0) {
        let (kmin, kmax) = window(nd, m, varpi);
        prop_assert!(window(nd * bump, m, varpi).0 >= kmin);
        prop_assert!(window(nd, m * bump, varpi).0 >= kmin);
        prop_assert!(window(nd, m, varpi / bump).1 >= kmax);
    }

    #[test]
    fn drift_bound_is_monotone(
        k in 0.0f64..10.0,
        kt in 0.0f64..10.0,
        alpha in -2.0f64..2.0,
        beta in 0.1f64..5.0,
        h in 0.0f64..10.0,
        dx in 0.0f64..1.0,
    ) {
        let base = drift_bound_M(k, kt, 1.0, 4.0, alpha, beta, h).unwrap();
        prop_assert!(drift_bound_M(k + dx, kt, 1.0, 4.0, alpha, beta, h).unwrap() >= base);
        prop_assert!(drift_bound_M(k, kt + dx, 1.0, 4.0, alpha, beta, h).unwrap() >= base);
        let a2 = alpha.signum() * (alpha.abs() + dx);
        prop_assert!(drift_bound_M(k, kt, 1.0, 4.0, a2, beta, h).unwrap() >= base);
        prop_assert!(drift_bound_M(k, kt, 1.0, 4.0, alpha, beta, h + dx).unwrap() >= base);
        prop_assert!(drift_bound_M(k, kt, 1.0, 4.0, alpha, beta + dx, h).unwrap() <= base);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn projection_is_idempotent_and_linear(seed in any::<u64>(), a in -3.0f64..3.0) {
        let mut rng = PathRng::new(seed, 1);
        let n = grid().points();
        let mut rough = || {
            let u = (0..n).map(|_| rng.standard_normal()).collect();
            let v = (0..n).map(|_| rng.standard_normal()).collect();
            VelocityField::from_components(grid(), u, v).unwrap()
        };
        let (f, g) = (rough(), rough());
        let pf = leray_project(&f);
        prop_assert!(norm_l2(&(&leray_project(&pf) - &pf)) <= 1e-13 * norm_l2(&f));
        let lhs = leray_project(&(&(&f * a) + &g));
        let rhs = &(&pf * a) + &leray_project(&g);
        prop_assert!(norm_l2(&(&lhs - &rhs)) <= 1e-13 * (norm_l2(&f) * a.abs() + norm_l2(&g)));
    }

    #[test]
    fn interpolants_are_linear_projections(seed in any::<u64>(), a in -3.0f64..3.0, ve in any::<bool>()) {
        let spec = if ve {
            InterpolantSpec::volume_element(PI / 4.0)
        } else {
            InterpolantSpec::fourier_modes(0.5)
        };
        let (f, g) = (field(seed, 2), field(seed, 3));
        let rf = spec.apply(&f).unwrap();
        prop_assert!(norm_l2(&(&spec.apply(&rf).unwrap() - &rf)) <= 1e-12 * norm_l2(&f));
        let lhs = spec.apply(&(&(&f * a) + &g)).unwrap();
        let rhs = &(&rf * a) + &spec.apply(&g).unwrap();
        prop_assert!(norm_l2(&(&lhs - &rhs)) <= 1e-12 * (norm_l2(&f) * a.abs() + norm_l2(&g)));
    }

    #[test]
    fn advection_is_skew(seed in any::<u64>()) {
        let (xi, z, u) = (field(seed, 4), field(seed, 5), field(seed, 6));
        let scale = xi.max_abs() * norm_l2(&z) * norm_l2(&u) * 10.0;
        let b_zu = trilinear(&xi, &z, &u).unwrap();
        prop_assert!((b_zu + trilinear(&xi, &u, &z).unwrap()).abs() <= 1e-12 * scale);
        // the weak form agrees with the projected operator
        prop_assert!((inner(&advect(&xi, &z).unwrap(), &u).unwrap() - b_zu).abs() <= 1e-12 * scale);
    }

    #[test]
    fn stokes_is_symmetric_positive(seed in any::<u64>()) {
        let (f, g) = (field(seed, 7), field(seed, 8));
        let fg = inner(&stokes(&f), &g).unwrap();
        let gf = inner(&f, &stokes(&g)).unwrap();
        prop_assert!((fg - gf).abs() <= 1e-12 * fg.abs().max(1.0));
        prop_assert!(inner(&stokes(&f), &f).unwrap() > 0.0);
    }

    #[test]
    fn snapshots_round_trip(seed in any::<u64>()) {
        let f = field(seed, 9);
        prop_assert_eq!(decode_snapshot(&encode_snapshot(&f)).unwrap(), f);
    }
}
