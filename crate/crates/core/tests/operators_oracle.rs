//! Hand-derived values for the spectral operators.

use std::f64::consts::PI;

use tgf_cda::analysis::nd_ratio;
use tgf_cda::grid::{inner, make_grid, norm_l2, norm_lp, relative_divergence, DomainSpec, VelocityField};
use tgf_cda::operators::{advect, grade2_stress, grade3_stress, leray_project, stokes, strain, trilinear};

fn torus(n: usize) -> DomainSpec {
    make_grid(n, 2.0 * PI).unwrap()
}

fn close(a: &VelocityField, b: &VelocityField, tol: f64) {
    let err = (a - b).max_abs();
    assert!(err <= tol, "max deviation {err:e} exceeds {tol:e}");
}

#[test]
fn advection_of_crossed_shears() {
    let d = torus(16);
    let xi = VelocityField::from_fn(d, |_, y| (y.sin(), 0.0));
    let zeta = VelocityField::from_fn(d, |x, _| (0.0, x.sin()));
    // (xi . grad) zeta = (0, sin y cos x); its solenoidal part:
    let want = VelocityField::from_fn(d, |x, y| (-0.5 * x.sin() * y.cos(), 0.5 * x.cos() * y.sin()));
    close(&advect(&xi, &zeta).unwrap(), &want, 1e-13);
    // a shear does not advect itself
    close(&advect(&xi, &xi).unwrap(), &VelocityField::zeros(d), 1e-14);
}

#[test]
fn taylor_green_self_advection_is_a_gradient() {
    let d = torus(32);
    let tg = VelocityField::from_fn(d, |x, y| (x.sin() * y.cos(), -x.cos() * y.sin()));
    close(&advect(&tg, &tg).unwrap(), &VelocityField::zeros(d), 1e-13);
    // Stokes eigenfunction with eigenvalue |k|^2 = 2
    close(&stokes(&tg), &(&tg * 2.0), 1e-13);
}

#[test]
fn strain_of_shears() {
    let d = torus(16);
    let a = 1.5;
    let e = strain(&VelocityField::from_fn(d, |_, y| (a * y.sin(), 0.0)));
    for k in 0..d.points() {
        let y = d.coord(k / d.n());
        assert!(e.entry(0, 0)[k].abs() < 1e-13);
        assert!(e.entry(1, 1)[k].abs() < 1e-13);
        assert!((e.entry(0, 1)[k] - a * y.cos()).abs() < 1e-13);
        assert!((e.entry(1, 0)[k] - a * y.cos()).abs() < 1e-13);
    }
    let e = strain(&VelocityField::from_fn(d, |x, _| (0.0, a * x.sin())));
    for k in 0..d.points() {
        let x = d.coord(k % d.n());
        assert!((e.entry(0, 1)[k] - a * x.cos()).abs() < 1e-13);
    }
}

#[test]
fn shear_stress_values() {
    let d = torus(32);
    for a in [0.5, 1.0, 2.0] {
        let xi = VelocityField::from_fn(d, |_, y| (a * y.sin(), 0.0));
        let e4 = norm_lp(&strain(&xi), 4).unwrap().powi(4);
        assert!((e4 - 6.0 * PI * PI * a.powi(4)).abs() <= 1e-12 * e4);
        let k = grade3_stress(&xi);
        let want = VelocityField::from_fn(d, |_, y| (6.0 * a.powi(3) * y.cos().powi(2) * y.sin(), 0.0));
        close(&k, &want, 1e-12 * want.max_abs());
        let pairing = inner(&xi, &k).unwrap();
        assert!((pairing - 3.0 * PI * PI * a.powi(4)).abs() <= 1e-12 * pairing);
        assert!(grade2_stress(&xi).max_abs() <= 1e-12 * a * a);
    }
}

#[test]
fn shear_sobolev_korn_ratio() {
    let d = torus(16);
    let xi = VelocityField::from_fn(d, |_, y| (2.0 * y.sin(), 0.0));
    let want = (6.0 * PI * PI).powf(-0.25);
    assert!((nd_ratio(&xi).unwrap() - want).abs() < 1e-12);
}

#[test]
fn projection_removes_gradients() {
    let d = torus(16);
    let grad = VelocityField::from_fn(d, |x, y| (x.cos() * (2.0 * y).sin(), 2.0 * x.sin() * (2.0 * y).cos()));
    assert!(norm_l2(&leray_project(&grad)) < 1e-13);
    let mixed = &grad + &VelocityField::from_fn(d, |_, y| (y.cos(), 0.0));
    let p = leray_project(&mixed);
    assert!(relative_divergence(&p) < 1e-13);
    close(&p, &VelocityField::from_fn(d, |_, y| (y.cos(), 0.0)), 1e-13);
}

#[test]
fn trilinear_matches_quadrature() {
    let d = torus(16);
    let xi = VelocityField::from_fn(d, |_, y| (y.sin(), 0.0));
    let zeta = VelocityField::from_fn(d, |x, _| (0.0, x.sin()));
    let ups = VelocityField::from_fn(d, |x, y| (-0.5 * x.sin() * y.cos(), 0.5 * x.cos() * y.sin()));
    // 1/2 int sin^2 y cos^2 x = pi^2 / 2
    assert!((trilinear(&xi, &zeta, &ups).unwrap() - 0.5 * PI * PI).abs() < 1e-12);
}
