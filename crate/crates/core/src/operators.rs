//! Spectral realizations of the fluid operators on the periodic torus:
//! Leray projection, Stokes operator, advection, strain, and the grade-2 and
//! grade-3 stresses.
//!
//! Quadratic products are dealiased on the `3n/2` grid and cubic products on
//! the `2n` grid, so the integration-by-parts identities hold to roundoff for
//! fields without Nyquist content.

use crate::error::{invalid, Error, Result};
use crate::fft::C64;
use crate::grid::{relative_divergence, DomainSpec, TensorField, VelocityField};

const I: C64 = C64::new(0.0, 1.0);

/// Relative divergence accepted for arguments that must be solenoidal.
pub const DIVERGENCE_TOLERANCE: f64 = 1e-9;

/// Viscosity and the two material moduli of the third-grade fluid.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "RawFluidParams", into = "RawFluidParams")]
pub struct FluidParams {
    nu: f64,
    alpha: f64,
    beta: f64,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct RawFluidParams {
    nu: f64,
    alpha: f64,
    beta: f64,
}

impl TryFrom<RawFluidParams> for FluidParams {
    type Error = Error;
    fn try_from(r: RawFluidParams) -> Result<Self> {
        FluidParams::new(r.nu, r.alpha, r.beta)
    }
}

impl From<FluidParams> for RawFluidParams {
    fn from(p: FluidParams) -> Self {
        RawFluidParams {
            nu: p.nu,
            alpha: p.alpha,
            beta: p.beta,
        }
    }
}

impl FluidParams {
    /// Requires `nu > 0`, `beta > 0` and `|alpha| < sqrt(2 nu beta)`.
    pub fn new(nu: f64, alpha: f64, beta: f64) -> Result<Self> {
        epsilon0(nu, alpha, beta)?;
        Ok(Self { nu, alpha, beta })
    }

    /// Newtonian limit `alpha = beta = 0`, outside the third-grade
    /// restriction; used for linear checks of the time stepper.
    pub fn newtonian(nu: f64) -> Result<Self> {
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(Error::ParameterRestriction(format!("nu must be positive, got {nu}")));
        }
        Ok(Self { nu, alpha: 0.0, beta: 0.0 })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Dissipation margin `1 - sqrt(alpha^2 / (2 beta nu))`, always in (0, 1].
    pub fn epsilon0(&self) -> f64 {
        if self.alpha == 0.0 {
            return 1.0;
        }
        1.0 - (self.alpha * self.alpha / (2.0 * self.beta * self.nu)).sqrt()
    }
}

/// `1 - sqrt(alpha^2 / (2 beta nu))`, rejecting parameters outside the
/// admissible set.
pub fn epsilon0(nu: f64, alpha: f64, beta: f64) -> Result<f64> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::ParameterRestriction(format!("nu must be positive, got {nu}")));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::ParameterRestriction(format!("beta must be positive, got {beta}")));
    }
    if !alpha.is_finite() {
        return Err(invalid("alpha", "must be finite"));
    }
    let bound = (2.0 * nu * beta).sqrt();
    if alpha.abs() >= bound {
        return Err(Error::ParameterRestriction(format!(
            "|alpha| = {} must be strictly below sqrt(2 nu beta) = {bound}",
            alpha.abs()
        )));
    }
    Ok(1.0 - (alpha * alpha / (2.0 * beta * nu)).sqrt())
}

pub(crate) fn project_hat(d: &DomainSpec, hat: &mut [Vec<C64>; 2]) {
    let n = d.n();
    for iy in 0..n {
        let ky = d.diff_wavenumber(iy);
        let nyq_y = iy == n / 2;
        for ix in 0..n {
            let k = iy * n + ix;
            let kx = d.diff_wavenumber(ix);
            let k2 = kx * kx + ky * ky;
            if k2 == 0.0 || nyq_y || ix == n / 2 {
                hat[0][k] = C64::new(0.0, 0.0);
                hat[1][k] = C64::new(0.0, 0.0);
                continue;
            }
            let dot = (hat[0][k] * kx + hat[1][k] * ky) / k2;
            hat[0][k] -= dot * kx;
            hat[1][k] -= dot * ky;
        }
    }
}

/// Spectral gradient coefficients `[du/dx, du/dy, dv/dx, dv/dy]`.
pub(crate) fn gradient_hats(d: &DomainSpec, hat: &[Vec<C64>; 2]) -> [Vec<C64>; 4] {
    let n = d.n();
    let zero = vec![C64::new(0.0, 0.0); n * n];
    let mut out = [zero.clone(), zero.clone(), zero.clone(), zero];
    for iy in 0..n {
        let ky = d.diff_wavenumber(iy);
        for ix in 0..n {
            let kx = d.diff_wavenumber(ix);
            let k = iy * n + ix;
            for c in 0..2 {
                let ik = I * hat[c][k];
                out[2 * c][k] = ik * kx;
                out[2 * c + 1][k] = ik * ky;
            }
        }
    }
    out
}

/// Samples several native spectra on an `m`-grid, two at a time.
pub(crate) fn sample_padded(d: &DomainSpec, hats: &[&[C64]], m: usize) -> Vec<Vec<f64>> {
    let sp = d.spectral();
    let mut out = Vec::with_capacity(hats.len());
    for pair in hats.chunks(2) {
        if pair.len() == 2 {
            let (x, y) = sp.inverse_pair_padded(pair[0], pair[1], m);
            out.push(x);
            out.push(y);
        } else {
            out.push(sp.inverse_m(&sp.pad(pair[0], m), m));
        }
    }
    out
}

/// Native coefficients of `div S` for a symmetric tensor given on an
/// `m`-grid by `(s11, s12, s22)`: `(div S)_i = d_j S_ij`.
pub(crate) fn symmetric_divergence_hat(
    d: &DomainSpec,
    s11: &[f64],
    s12: &[f64],
    s22: &[f64],
    m: usize,
) -> [Vec<C64>; 2] {
    let sp = d.spectral();
    let (t11, t12) = sp.forward_pair_truncated(s11, s12, m);
    let t22 = sp.forward_truncated(s22, m);
    let n = d.n();
    let mut out = [vec![C64::new(0.0, 0.0); n * n], vec![C64::new(0.0, 0.0); n * n]];
    for iy in 0..n {
        let ky = d.diff_wavenumber(iy);
        for ix in 0..n {
            let kx = d.diff_wavenumber(ix);
            let k = iy * n + ix;
            out[0][k] = I * (t11[k] * kx + t12[k] * ky);
            out[1][k] = I * (t12[k] * kx + t22[k] * ky);
        }
    }
    out
}

fn check_solenoidal(xi: &VelocityField) -> Result<()> {
    let rel = relative_divergence(xi);
    if rel > DIVERGENCE_TOLERANCE {
        return Err(Error::NotDivergenceFree(rel));
    }
    Ok(())
}

/// Leray projection onto mean-zero, divergence-free fields.
pub fn leray_project(u: &VelocityField) -> VelocityField {
    let d = *u.domain();
    let mut hat = u.spectral();
    project_hat(&d, &mut hat);
    VelocityField::from_spectral(d, &hat)
}

/// Strain rate `E = grad xi + (grad xi)^T`, exactly symmetric.
pub fn strain(xi: &VelocityField) -> TensorField {
    let d = *xi.domain();
    let g = gradient_hats(&d, &xi.spectral());
    let n = d.n();
    let e12: Vec<C64> = g[1].iter().zip(&g[2]).map(|(a, b)| a + b).collect();
    let e11: Vec<C64> = g[0].iter().map(|a| a * 2.0).collect();
    let e22: Vec<C64> = g[3].iter().map(|a| a * 2.0).collect();
    let sp = d.spectral();
    let (p11, p22) = sp.inverse_pair_m(&e11, &e22, n);
    let p12 = sp.inverse(&e12);
    TensorField::new(d, [p11, p12.clone(), p12, p22], true).expect("consistent lengths")
}

/// Stokes operator `-P Laplacian`.
pub fn stokes(xi: &VelocityField) -> VelocityField {
    let d = *xi.domain();
    let n = d.n();
    let mut hat = xi.spectral();
    for iy in 0..n {
        let ky = d.diff_wavenumber(iy);
        for ix in 0..n {
            let kx = d.diff_wavenumber(ix);
            let k2 = kx * kx + ky * ky;
            let k = iy * n + ix;
            hat[0][k] *= k2;
            hat[1][k] *= k2;
        }
    }
    project_hat(&d, &mut hat);
    VelocityField::from_spectral(d, &hat)
}

/// Advection `B(xi, zeta) = P[1/2 (xi . grad) zeta + 1/2 div(xi (x) zeta)]`,
/// the skew-symmetric form dealiased on the `3n/2` grid.
pub fn advect(xi: &VelocityField, zeta: &VelocityField) -> Result<VelocityField> {
    if xi.domain() != zeta.domain() {
        return Err(Error::GridMismatch);
    }
    check_solenoidal(xi)?;
    let d = *xi.domain();
    let sp = d.spectral();
    let m = sp.quad_size();
    let xh = xi.spectral();
    let zh = zeta.spectral();
    let gz = gradient_hats(&d, &zh);
    let phys = sample_padded(
        &d,
        &[&xh[0], &xh[1], &zh[0], &zh[1], &gz[0], &gz[1], &gz[2], &gz[3]],
        m,
    );
    let (a, b, p, q) = (&phys[0], &phys[1], &phys[2], &phys[3]);
    let (zxx, zxy, zyx, zyy) = (&phys[4], &phys[5], &phys[6], &phys[7]);
    let mm = m * m;
    let mut conv_x = vec![0.0; mm];
    let mut conv_y = vec![0.0; mm];
    // flux F_ji = xi_j zeta_i
    let mut f_xx = vec![0.0; mm];
    let mut f_yx = vec![0.0; mm];
    let mut f_xy = vec![0.0; mm];
    let mut f_yy = vec![0.0; mm];
    for k in 0..mm {
        conv_x[k] = a[k] * zxx[k] + b[k] * zxy[k];
        conv_y[k] = a[k] * zyx[k] + b[k] * zyy[k];
        f_xx[k] = a[k] * p[k];
        f_yx[k] = b[k] * p[k];
        f_xy[k] = a[k] * q[k];
        f_yy[k] = b[k] * q[k];
    }
    let (cx, cy) = sp.forward_pair_truncated(&conv_x, &conv_y, m);
    let (hxx, hyx) = sp.forward_pair_truncated(&f_xx, &f_yx, m);
    let (hxy, hyy) = sp.forward_pair_truncated(&f_xy, &f_yy, m);
    let n = d.n();
    let mut out = [vec![C64::new(0.0, 0.0); n * n], vec![C64::new(0.0, 0.0); n * n]];
    for iy in 0..n {
        let ky = d.diff_wavenumber(iy);
        for ix in 0..n {
            let kx = d.diff_wavenumber(ix);
            let k = iy * n + ix;
            let div_x = I * (hxx[k] * kx + hyx[k] * ky);
            let div_y = I * (hxy[k] * kx + hyy[k] * ky);
            out[0][k] = (cx[k] + div_x) * 0.5;
            out[1][k] = (cy[k] + div_y) * 0.5;
        }
    }
    project_hat(&d, &mut out);
    Ok(VelocityField::from_spectral(d, &out))
}

/// Trilinear form `b(xi, zeta, ups) = int (xi . grad) zeta . ups`, exact for
/// band-limited fields (quadrature on the `3n/2` grid).
pub fn trilinear(xi: &VelocityField, zeta: &VelocityField, ups: &VelocityField) -> Result<f64> {
    if xi.domain() != zeta.domain() || xi.domain() != ups.domain() {
        return Err(Error::GridMismatch);
    }
    check_solenoidal(xi)?;
    let d = *xi.domain();
    let m = d.spectral().quad_size();
    let xh = xi.spectral();
    let uh = ups.spectral();
    let gz = gradient_hats(&d, &zeta.spectral());
    let p = sample_padded(
        &d,
        &[&xh[0], &xh[1], &uh[0], &uh[1], &gz[0], &gz[1], &gz[2], &gz[3]],
        m,
    );
    let mut s = 0.0;
    for k in 0..m * m {
        let cx = p[0][k] * p[4][k] + p[1][k] * p[5][k];
        let cy = p[0][k] * p[6][k] + p[1][k] * p[7][k];
        s += cx * p[2][k] + cy * p[3][k];
    }
    Ok(s * d.area() / (m * m) as f64)
}

/// Strain entries `(E11, E12, E22)` of the trigonometric interpolant on an `m`-grid.
pub(crate) fn strain_on(d: &DomainSpec, hat: &[Vec<C64>; 2], m: usize) -> [Vec<f64>; 3] {
    let g = gradient_hats(d, hat);
    let e11: Vec<C64> = g[0].iter().map(|a| a * 2.0).collect();
    let e22: Vec<C64> = g[3].iter().map(|a| a * 2.0).collect();
    let e12: Vec<C64> = g[1].iter().zip(&g[2]).map(|(a, b)| a + b).collect();
    let p = sample_padded(d, &[&e11, &e22, &e12], m);
    let [a, b, c]: [Vec<f64>; 3] = p.try_into().expect("three entries");
    [a, c, b]
}

/// Grade-2 stress `J(xi) = -P div(E^2)` with the matrix product `E E`.
pub fn grade2_stress(xi: &VelocityField) -> VelocityField {
    let d = *xi.domain();
    let m = d.spectral().quad_size();
    let [e11, e12, e22] = strain_on(&d, &xi.spectral(), m);
    let mm = m * m;
    let mut s11 = vec![0.0; mm];
    let mut s12 = vec![0.0; mm];
    let mut s22 = vec![0.0; mm];
    for k in 0..mm {
        s11[k] = e11[k] * e11[k] + e12[k] * e12[k];
        s12[k] = e12[k] * (e11[k] + e22[k]);
        s22[k] = e12[k] * e12[k] + e22[k] * e22[k];
    }
    let mut div = symmetric_divergence_hat(&d, &s11, &s12, &s22, m);
    div.iter_mut().flatten().for_each(|c| *c = -*c);
    project_hat(&d, &mut div);
    VelocityField::from_spectral(d, &div)
}

/// Grade-3 stress `K(xi) = -P div(|E|^2 E)`, dealiased on the `2n` grid.
pub fn grade3_stress(xi: &VelocityField) -> VelocityField {
    let d = *xi.domain();
    let m = d.spectral().cubic_size();
    let [e11, e12, e22] = strain_on(&d, &xi.spectral(), m);
    let mm = m * m;
    let mut s11 = vec![0.0; mm];
    let mut s12 = vec![0.0; mm];
    let mut s22 = vec![0.0; mm];
    for k in 0..mm {
        let mag = e11[k] * e11[k] + 2.0 * e12[k] * e12[k] + e22[k] * e22[k];
        s11[k] = mag * e11[k];
        s12[k] = mag * e12[k];
        s22[k] = mag * e22[k];
    }
    let mut div = symmetric_divergence_hat(&d, &s11, &s12, &s22, m);
    div.iter_mut().flatten().for_each(|c| *c = -*c);
    project_hat(&d, &mut div);
    VelocityField::from_spectral(d, &div)
}

/// Both sides of the monotonicity identity for the grade-3 stress:
/// `2 beta <z1 - z2, K(z1) - K(z2)>` against
/// `beta/2 int (|E1|^2 - |E2|^2)^2 + beta/2 int |E(z1 - z2)|^2 (|E1|^2 + |E2|^2)`.
/// The constant is the one consistent with `<xi, K(xi)> = 1/2 ||E(xi)||_4^4`.
pub fn grade3_difference_identity(
    z1: &VelocityField,
    z2: &VelocityField,
    beta: f64,
) -> Result<(f64, f64)> {
    if z1.domain() != z2.domain() {
        return Err(Error::GridMismatch);
    }
    let d = *z1.domain();
    let delta = z1 - z2;
    let dk = &grade3_stress(z1) - &grade3_stress(z2);
    let lhs = 2.0 * beta * crate::grid::inner(&delta, &dk)?;
    let m = d.spectral().cubic_size();
    let e1 = strain_on(&d, &z1.spectral(), m);
    let e2 = strain_on(&d, &z2.spectral(), m);
    let ed = strain_on(&d, &delta.spectral(), m);
    let mag = |e: &[Vec<f64>; 3], k: usize| e[0][k].powi(2) + 2.0 * e[1][k].powi(2) + e[2][k].powi(2);
    let mut a = 0.0;
    let mut b = 0.0;
    for k in 0..m * m {
        let m1 = mag(&e1, k);
        let m2 = mag(&e2, k);
        a += (m1 - m2).powi(2);
        b += mag(&ed, k) * (m1 + m2);
    }
    let cell = d.area() / (m * m) as f64;
    Ok((lhs, 0.5 * beta * (a + b) * cell))
}

/// Both sides of the grade-2 difference bound:
/// `|2 alpha <z1 - z2, J(z1) - J(z2)>|` against
/// `|alpha| int |E(z1 - z2)|^2 (|E1| + |E2|)`.
pub fn grade2_difference_bound(
    z1: &VelocityField,
    z2: &VelocityField,
    alpha: f64,
) -> Result<(f64, f64)> {
    if z1.domain() != z2.domain() {
        return Err(Error::GridMismatch);
    }
    let d = *z1.domain();
    let delta = z1 - z2;
    let dj = &grade2_stress(z1) - &grade2_stress(z2);
    let lhs = (2.0 * alpha * crate::grid::inner(&delta, &dj)?).abs();
    let m = d.spectral().cubic_size();
    let e1 = strain_on(&d, &z1.spectral(), m);
    let e2 = strain_on(&d, &z2.spectral(), m);
    let ed = strain_on(&d, &delta.spectral(), m);
    let mag = |e: &[Vec<f64>; 3], k: usize| e[0][k].powi(2) + 2.0 * e[1][k].powi(2) + e[2][k].powi(2);
    let mut s = 0.0;
    for k in 0..m * m {
        s += mag(&ed, k) * (mag(&e1, k).sqrt() + mag(&e2, k).sqrt());
    }
    let cell = d.area() / (m * m) as f64;
    Ok((lhs, alpha.abs() * s * cell))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{h1_seminorm, inner, make_grid, norm_l2, norm_lp, random_solenoidal};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn torus(n: usize) -> DomainSpec {
        make_grid(n, 2.0 * PI).unwrap()
    }

    fn rel_diff(a: &VelocityField, b: &VelocityField) -> f64 {
        norm_l2(&(a - b)) / norm_l2(b).max(1e-300)
    }

    #[test]
    fn epsilon0_examples() {
        assert_eq!(epsilon0(1.0, 0.0, 1.0).unwrap(), 1.0);
        assert!((epsilon0(2.0, 1.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(
            epsilon0(1.0, 2f64.sqrt(), 1.0),
            Err(Error::ParameterRestriction(_))
        ));
        assert!(FluidParams::new(0.0, 0.0, 1.0).is_err());
        assert!(FluidParams::new(1.0, 0.0, 0.0).is_err());
        let p = FluidParams::new(1.0, 0.5, 1.0).unwrap();
        assert!((p.epsilon0() - (1.0 - (0.125f64).sqrt())).abs() < 1e-15);
    }

    #[test]
    fn fluid_params_deserialization_enforces_restriction() {
        let ok: FluidParams = serde_json::from_str(r#"{"nu":1,"alpha":0.5,"beta":1}"#).unwrap();
        assert_eq!(ok.alpha(), 0.5);
        assert!(serde_json::from_str::<FluidParams>(r#"{"nu":1,"alpha":2,"beta":1}"#).is_err());
    }

    #[test]
    fn projection_examples() {
        let d = torus(32);
        // gradient of sin x sin y
        let grad = VelocityField::from_fn(d, |x, y| (x.cos() * y.sin(), x.sin() * y.cos()));
        assert!(norm_l2(&leray_project(&grad)) <= 1e-12 * norm_l2(&grad));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sol = random_solenoidal(d, 8.0, 1.0, &mut rng);
        assert!(rel_diff(&leray_project(&sol), &sol) <= 1e-13);
        let u = VelocityField::from_fn(d, |x, _| (x.sin(), 0.0));
        let pu = leray_project(&u);
        assert!(relative_divergence(&pu) <= 1e-12);
        // (sin x, 0) is a pure gradient
        assert!(norm_l2(&pu) < 1e-12);
    }

    #[test]
    fn projection_is_idempotent_and_self_adjoint() {
        let d = torus(32);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = VelocityField::from_fn(d, |x, y| ((x + 2.0 * y).sin() + 0.3, (3.0 * x).cos() * y.sin()));
        let pu = leray_project(&u);
        let ppu = leray_project(&pu);
        assert!(norm_l2(&(&ppu - &pu)) <= 1e-13 * norm_l2(&u));
        let v = random_solenoidal(d, 6.0, 0.5, &mut rng);
        let w = VelocityField::from_fn(d, |x, y| (y.cos() * x.sin(), (2.0 * x).sin()));
        let lhs = inner(&leray_project(&w), &v).unwrap();
        let rhs = inner(&w, &leray_project(&v)).unwrap();
        assert!((lhs - rhs).abs() <= 1e-13 * norm_l2(&w) * norm_l2(&v));
        let m = pu.mean();
        assert!(m[0].abs() <= 1e-13 * norm_l2(&pu) && m[1].abs() <= 1e-13 * norm_l2(&pu));
    }

    #[test]
    fn strain_examples() {
        let d = torus(32);
        let a = 1.3;
        let e = strain(&VelocityField::from_fn(d, |_, y| (a * y.sin(), 0.0)));
        assert!(e.is_symmetric());
        let n = d.n();
        for iy in 0..n {
            let y = d.coord(iy);
            for ix in 0..n {
                let k = iy * n + ix;
                assert!(e.entry(0, 0)[k].abs() < 1e-12);
                assert!(e.entry(1, 1)[k].abs() < 1e-12);
                assert!((e.entry(0, 1)[k] - a * y.cos()).abs() < 1e-12);
                assert_eq!(e.entry(0, 1)[k], e.entry(1, 0)[k]);
            }
        }
        let e = strain(&VelocityField::from_fn(d, |x, _| (0.0, a * x.sin())));
        for ix in 0..n {
            let x = d.coord(ix);
            assert!((e.entry(1, 0)[ix] - a * x.cos()).abs() < 1e-12);
        }
        let c = strain(&VelocityField::from_fn(d, |_, _| (2.0, 1.0)));
        assert!(norm_lp(&c, 2).unwrap() < 1e-12);
    }

    #[test]
    fn strain_trace_vanishes_for_solenoidal_input() {
        let d = torus(32);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = random_solenoidal(d, 8.0, 1.0, &mut rng);
        let e = strain(&f);
        let en = norm_lp(&e, 2).unwrap();
        let tr = e.trace();
        let s: f64 = tr.iter().map(|x| x * x).sum::<f64>() * d.cell_area();
        assert!(s.sqrt() <= 1e-12 * en);
    }

    #[test]
    fn stokes_examples() {
        let d = torus(32);
        let f = VelocityField::from_fn(d, |_, y| (y.sin(), 0.0));
        assert!(rel_diff(&stokes(&f), &f) < 1e-13);
        let f2 = VelocityField::from_fn(d, |_, y| ((2.0 * y).sin(), 0.0));
        assert!(rel_diff(&stokes(&f2), &(&f2 * 4.0)) < 1e-13);
        let c = VelocityField::from_fn(d, |_, _| (1.0, 1.0));
        assert!(norm_l2(&stokes(&c)) < 1e-12);
    }

    #[test]
    fn stokes_duality() {
        let d = torus(32);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let f = random_solenoidal(d, 10.0, 0.5, &mut rng);
            let lhs = inner(&f, &stokes(&f)).unwrap();
            let rhs = h1_seminorm(&f).powi(2);
            assert!((lhs - rhs).abs() / rhs < 1e-12);
        }
    }

    #[test]
    fn advection_of_shear_vanishes() {
        let d = torus(32);
        let f = VelocityField::from_fn(d, |_, y| (y.sin(), 0.0));
        assert!(norm_l2(&advect(&f, &f).unwrap()) < 1e-13);
    }

    #[test]
    fn advection_is_energy_neutral() {
        let d = torus(32);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xi = random_solenoidal(d, 10.0, 0.5, &mut rng);
        let zeta = random_solenoidal(d, 10.0, 0.5, &mut rng);
        let b = advect(&xi, &zeta).unwrap();
        assert!(inner(&b, &zeta).unwrap().abs() < 1e-13);
        assert!(trilinear(&xi, &zeta, &zeta).unwrap().abs() < 1e-13);
    }

    #[test]
    fn advection_rejects_compressible_transport() {
        let d = torus(16);
        let u = VelocityField::from_fn(d, |x, _| (x.sin(), 0.0));
        assert!(matches!(advect(&u, &u), Err(Error::NotDivergenceFree(_))));
        assert!(matches!(trilinear(&u, &u, &u), Err(Error::NotDivergenceFree(_))));
    }

    #[test]
    fn trilinear_antisymmetry_and_zero() {
        let d = torus(32);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let xi = random_solenoidal(d, 9.0, 0.5, &mut rng);
        let z = random_solenoidal(d, 9.0, 0.5, &mut rng);
        let u = random_solenoidal(d, 9.0, 0.5, &mut rng);
        let a = trilinear(&xi, &z, &u).unwrap();
        let b = trilinear(&xi, &u, &z).unwrap();
        assert!((a + b).abs() < 1e-13);
        let zero = VelocityField::zeros(d);
        assert_eq!(trilinear(&zero, &zero, &zero).unwrap(), 0.0);
    }

    #[test]
    fn grade3_shear_closed_form() {
        let d = torus(32);
        for a in [0.5, 1.0, 2.0] {
            let f = VelocityField::from_fn(d, |_, y| (a * y.sin(), 0.0));
            let k = grade3_stress(&f);
            let want = VelocityField::from_fn(d, |_, y| (6.0 * a.powi(3) * y.cos().powi(2) * y.sin(), 0.0));
            assert!(rel_diff(&k, &want) < 1e-12, "a = {a}");
            let pairing = inner(&f, &k).unwrap();
            let expect = 3.0 * PI * PI * a.powi(4);
            assert!((pairing - expect).abs() / expect < 1e-12);
        }
        assert_eq!(norm_l2(&grade3_stress(&VelocityField::zeros(d))), 0.0);
    }

    #[test]
    fn grade2_shear_vanishes_and_pairing_is_zero() {
        let d = torus(32);
        let f = VelocityField::from_fn(d, |_, y| (1.5 * y.sin(), 0.0));
        assert!(norm_l2(&grade2_stress(&f)) < 1e-12);
        assert_eq!(norm_l2(&grade2_stress(&VelocityField::zeros(d))), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let xi = random_solenoidal(d, 9.0, 0.5, &mut rng);
        // E^2 = |E|^2/2 I for traceless symmetric E, so div(E^2) is a gradient
        let scale = norm_lp(&strain(&xi), 4).unwrap().powi(2);
        assert!(norm_l2(&grade2_stress(&xi)) < 1e-12 * scale);
    }

    #[test]
    fn difference_identities_hold() {
        let d = torus(32);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let z1 = random_solenoidal(d, 8.0, 0.5, &mut rng);
        let z2 = &random_solenoidal(d, 8.0, 0.5, &mut rng) * 0.7;
        let (lhs, rhs) = grade3_difference_identity(&z1, &z2, 1.3).unwrap();
        assert!((lhs - rhs).abs() / rhs < 1e-10);
        let (lhs, rhs) = grade2_difference_bound(&z1, &z2, -0.4).unwrap();
        assert!(lhs <= rhs * (1.0 + 1e-9));
    }
}
