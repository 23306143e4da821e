//! Periodic computational domain, discrete vector/tensor fields, and the
//! norms and inner products used throughout the estimates.
//!
//! Fields are stored in physical space, row-major (`index = iy * n + ix`).
//! All quadratures use the rectangle rule on the uniform grid, which is exact
//! for trigonometric polynomials below the Nyquist limit. Quartic integrands
//! (`p = 4`) are evaluated on the trigonometric interpolant sampled on the
//! doubled grid so that they stay exact for band-limited fields.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fft::{is_nyquist, signed_index, Spectral, C64};

/// Square periodic domain `[0, L)^2` sampled on `n x n` points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainSpec {
    n: usize,
    length: f64,
}

/// Builds a validated grid description.
pub fn make_grid(n: usize, length: f64) -> Result<DomainSpec> {
    if n % 2 != 0 {
        return Err(Error::Grid("resolution must be even".into()));
    }
    if n < 8 {
        return Err(Error::Grid(format!("resolution must be at least 8, got {n}")));
    }
    if !(length > 0.0) || !length.is_finite() {
        return Err(Error::Grid(format!("side length must be positive, got {length}")));
    }
    Ok(DomainSpec { n, length })
}

impl DomainSpec {
    pub fn dimension(&self) -> usize {
        2
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn points(&self) -> usize {
        self.n * self.n
    }

    /// |D| = L^d.
    pub fn area(&self) -> f64 {
        self.length * self.length
    }

    /// First eigenvalue of the Stokes operator on mean-zero fields: (2 pi / L)^2.
    pub fn lambda1(&self) -> f64 {
        let k = 2.0 * PI / self.length;
        k * k
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn cell_area(&self) -> f64 {
        let h = self.spacing();
        h * h
    }

    pub fn coord(&self, i: usize) -> f64 {
        i as f64 * self.spacing()
    }

    /// Physical wavenumber at storage position `i` along one axis.
    pub fn wavenumber(&self, i: usize) -> f64 {
        2.0 * PI / self.length * signed_index(i, self.n) as f64
    }

    /// Physical wavenumber used for differentiation: zero at the Nyquist position.
    pub fn diff_wavenumber(&self, i: usize) -> f64 {
        if is_nyquist(i, self.n) {
            0.0
        } else {
            self.wavenumber(i)
        }
    }

    pub fn spectral(&self) -> Arc<Spectral> {
        Spectral::for_size(self.n)
    }
}

/// Two-component velocity field on a [`DomainSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    domain: DomainSpec,
    components: [Vec<f64>; 2],
}

impl VelocityField {
    pub fn zeros(domain: DomainSpec) -> Self {
        let p = domain.points();
        Self {
            domain,
            components: [vec![0.0; p], vec![0.0; p]],
        }
    }

    pub fn from_components(domain: DomainSpec, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.len() != domain.points() || v.len() != domain.points() {
            return Err(Error::Grid(format!(
                "expected {} samples per component",
                domain.points()
            )));
        }
        if u.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(Error::Grid("field contains non-finite samples".into()));
        }
        Ok(Self {
            domain,
            components: [u, v],
        })
    }

    /// Samples `f(x, y) -> (u, v)` at the grid points.
    pub fn from_fn(domain: DomainSpec, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        let n = domain.n();
        let mut u = vec![0.0; n * n];
        let mut v = vec![0.0; n * n];
        for iy in 0..n {
            let y = domain.coord(iy);
            for ix in 0..n {
                let (a, b) = f(domain.coord(ix), y);
                u[iy * n + ix] = a;
                v[iy * n + ix] = b;
            }
        }
        Self {
            domain,
            components: [u, v],
        }
    }

    pub(crate) fn from_spectral(domain: DomainSpec, hat: &[Vec<C64>; 2]) -> Self {
        let sp = domain.spectral();
        let (u, v) = sp.inverse_pair_m(&hat[0], &hat[1], domain.n());
        Self {
            domain,
            components: [u, v],
        }
    }

    pub(crate) fn spectral(&self) -> [Vec<C64>; 2] {
        let sp = self.domain.spectral();
        let (a, b) = sp.forward_pair_m(&self.components[0], &self.components[1], self.domain.n());
        [a, b]
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn component(&self, i: usize) -> &[f64] {
        &self.components[i]
    }

    pub fn u(&self) -> &[f64] {
        &self.components[0]
    }

    pub fn v(&self) -> &[f64] {
        &self.components[1]
    }

    pub fn into_components(self) -> [Vec<f64>; 2] {
        self.components
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().flatten().all(|x| x.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.components
            .iter()
            .flatten()
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// Spatial mean of each component.
    pub fn mean(&self) -> [f64; 2] {
        let p = self.domain.points() as f64;
        [
            self.components[0].iter().sum::<f64>() / p,
            self.components[1].iter().sum::<f64>() / p,
        ]
    }

    pub fn scaled(&self, a: f64) -> Self {
        self * a
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.domain, other.domain, "fields live on different grids");
        let mut out = self.clone();
        for c in 0..2 {
            for (o, &b) in out.components[c].iter_mut().zip(&other.components[c]) {
                *o = f(*o, b);
            }
        }
        out
    }

    /// Spectral divergence sampled on the grid.
    pub fn divergence(&self) -> Vec<f64> {
        let d = &self.domain;
        let n = d.n();
        let hat = self.spectral();
        let mut div = vec![C64::new(0.0, 0.0); n * n];
        for iy in 0..n {
            let ky = d.diff_wavenumber(iy);
            for ix in 0..n {
                let kx = d.diff_wavenumber(ix);
                let k = iy * n + ix;
                div[k] = C64::new(0.0, 1.0) * (hat[0][k] * kx + hat[1][k] * ky);
            }
        }
        d.spectral().inverse(&div)
    }

    /// Spectral gradient: entry `(i, j)` is `d u_i / d x_j`.
    pub fn gradient(&self) -> TensorField {
        let d = self.domain;
        let n = d.n();
        let hat = self.spectral();
        let mut parts: Vec<Vec<C64>> = vec![vec![C64::new(0.0, 0.0); n * n]; 4];
        for iy in 0..n {
            let ky = d.diff_wavenumber(iy);
            for ix in 0..n {
                let kx = d.diff_wavenumber(ix);
                let k = iy * n + ix;
                for c in 0..2 {
                    let ik = C64::new(0.0, 1.0) * hat[c][k];
                    parts[2 * c][k] = ik * kx;
                    parts[2 * c + 1][k] = ik * ky;
                }
            }
        }
        let sp = d.spectral();
        let (g00, g01) = sp.inverse_pair_m(&parts[0], &parts[1], n);
        let (g10, g11) = sp.inverse_pair_m(&parts[2], &parts[3], n);
        TensorField {
            domain: d,
            entries: [g00, g01, g10, g11],
            symmetric: false,
        }
    }
}

impl Add for &VelocityField {
    type Output = VelocityField;
    fn add(self, rhs: &VelocityField) -> VelocityField {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for &VelocityField {
    type Output = VelocityField;
    fn sub(self, rhs: &VelocityField) -> VelocityField {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl Mul<f64> for &VelocityField {
    type Output = VelocityField;
    fn mul(self, a: f64) -> VelocityField {
        let mut out = self.clone();
        out.components.iter_mut().flatten().for_each(|x| *x *= a);
        out
    }
}

impl Neg for &VelocityField {
    type Output = VelocityField;
    fn neg(self) -> VelocityField {
        self * -1.0
    }
}

/// 2x2 tensor field; entry `(i, j)` is stored at `entries[2 * i + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    domain: DomainSpec,
    entries: [Vec<f64>; 4],
    symmetric: bool,
}

impl TensorField {
    pub fn new(domain: DomainSpec, entries: [Vec<f64>; 4], symmetric: bool) -> Result<Self> {
        if entries.iter().any(|e| e.len() != domain.points()) {
            return Err(Error::Grid("tensor entry has wrong length".into()));
        }
        Ok(Self {
            domain,
            entries,
            symmetric,
        })
    }

    /// Constant tensor at every grid point.
    pub fn constant(domain: DomainSpec, value: [[f64; 2]; 2]) -> Self {
        let p = domain.points();
        let symmetric = value[0][1] == value[1][0];
        Self {
            domain,
            entries: [
                vec![value[0][0]; p],
                vec![value[0][1]; p],
                vec![value[1][0]; p],
                vec![value[1][1]; p],
            ],
            symmetric,
        }
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn entry(&self, i: usize, j: usize) -> &[f64] {
        &self.entries[2 * i + j]
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Pointwise trace.
    pub fn trace(&self) -> Vec<f64> {
        self.entries[0]
            .iter()
            .zip(&self.entries[3])
            .map(|(a, b)| a + b)
            .collect()
    }
}

/// Fields with a pointwise magnitude (Euclidean for vectors, Frobenius for
/// tensors).
pub trait PointwiseMagnitude {
    fn domain(&self) -> &DomainSpec;
    /// Squared magnitude at every native grid point.
    fn magnitude_sq(&self) -> Vec<f64>;
    /// Squared magnitude of the trigonometric interpolant on an `m`-grid.
    fn magnitude_sq_on(&self, m: usize) -> Vec<f64>;
}

fn sum_sq_upsampled(parts: &[&[f64]], d: &DomainSpec, m: usize) -> Vec<f64> {
    let sp = d.spectral();
    let mut acc = vec![0.0; m * m];
    for chunk in parts.chunks(2) {
        let (a, b) = if chunk.len() == 2 {
            let ah = sp.pad(&sp.forward(chunk[0]), m);
            let bh = sp.pad(&sp.forward(chunk[1]), m);
            sp.inverse_pair_m(&ah, &bh, m)
        } else {
            (sp.upsample(chunk[0], m), vec![0.0; m * m])
        };
        for ((s, x), y) in acc.iter_mut().zip(&a).zip(&b) {
            *s += x * x + y * y;
        }
    }
    acc
}

impl PointwiseMagnitude for VelocityField {
    fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    fn magnitude_sq(&self) -> Vec<f64> {
        self.components[0]
            .iter()
            .zip(&self.components[1])
            .map(|(a, b)| a * a + b * b)
            .collect()
    }

    fn magnitude_sq_on(&self, m: usize) -> Vec<f64> {
        sum_sq_upsampled(&[&self.components[0], &self.components[1]], &self.domain, m)
    }
}

impl PointwiseMagnitude for TensorField {
    fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    fn magnitude_sq(&self) -> Vec<f64> {
        (0..self.domain.points())
            .map(|k| self.entries.iter().map(|e| e[k] * e[k]).sum())
            .collect()
    }

    fn magnitude_sq_on(&self, m: usize) -> Vec<f64> {
        let parts: Vec<&[f64]> = self.entries.iter().map(|e| e.as_slice()).collect();
        sum_sq_upsampled(&parts, &self.domain, m)
    }
}

/// L2 norm by rectangle-rule quadrature.
pub fn norm_l2(f: &VelocityField) -> f64 {
    let s: f64 = f.magnitude_sq().iter().sum();
    (s * f.domain.cell_area()).sqrt()
}

/// Lp norm for `p` in {2, 4}.
pub fn norm_lp<F: PointwiseMagnitude>(f: &F, p: u32) -> Result<f64> {
    let d = *f.domain();
    match p {
        2 => {
            let s: f64 = f.magnitude_sq().iter().sum();
            Ok((s * d.cell_area()).sqrt())
        }
        4 => {
            let m = 2 * d.n();
            let cell = d.area() / (m * m) as f64;
            let s: f64 = f.magnitude_sq_on(m).iter().map(|x| x * x).sum();
            Ok((s * cell).powf(0.25))
        }
        other => Err(Error::UnsupportedExponent(other)),
    }
}

/// L2 inner product.
pub fn inner(f: &VelocityField, g: &VelocityField) -> Result<f64> {
    if f.domain != g.domain {
        return Err(Error::GridMismatch);
    }
    let s: f64 = (0..2)
        .map(|c| {
            f.components[c]
                .iter()
                .zip(&g.components[c])
                .map(|(a, b)| a * b)
                .sum::<f64>()
        })
        .sum();
    Ok(s * f.domain.cell_area())
}

/// ||grad f||_2 through the spectral gradient.
pub fn h1_seminorm(f: &VelocityField) -> f64 {
    let g = f.gradient();
    let s: f64 = g.magnitude_sq().iter().sum();
    (s * f.domain.cell_area()).sqrt()
}

/// Dual (V*) norm realized spectrally: (|D| sum_{k != 0} |c_k|^2 / |k|^2)^{1/2}.
pub fn dual_norm(f: &VelocityField) -> Result<f64> {
    let d = f.domain;
    let scale = f.max_abs().max(f64::MIN_POSITIVE);
    let mean = f.mean();
    let rel = mean[0].abs().max(mean[1].abs()) / scale;
    if rel > 1e-10 {
        return Err(Error::NonzeroMean(rel));
    }
    let n = d.n();
    let hat = f.spectral();
    let mut s = 0.0;
    for iy in 0..n {
        let ky = d.wavenumber(iy);
        for ix in 0..n {
            if ix == 0 && iy == 0 {
                continue;
            }
            let kx = d.wavenumber(ix);
            let k2 = kx * kx + ky * ky;
            let k = iy * n + ix;
            s += (hat[0][k].norm_sqr() + hat[1][k].norm_sqr()) / k2;
        }
    }
    Ok((s * d.area()).sqrt())
}

/// Energy computed from spectral coefficients: |D| sum_k |c_k|^2.
pub fn spectral_energy(f: &VelocityField) -> f64 {
    let hat = f.spectral();
    let s: f64 = hat.iter().flatten().map(|c| c.norm_sqr()).sum();
    s * f.domain.area()
}

/// ||div f||_2 relative to ||f||_2 / L.
pub fn relative_divergence(f: &VelocityField) -> f64 {
    let div = f.divergence();
    let d = f.domain;
    let s: f64 = div.iter().map(|x| x * x).sum();
    let dn = (s * d.cell_area()).sqrt();
    let scale = norm_l2(f) / d.length();
    if scale == 0.0 {
        dn
    } else {
        dn / scale
    }
}

/// Random band-limited, mean-zero, divergence-free field built from a random
/// stream function with modes `0 < |k| <= k_max` (index units) and amplitude
/// decay `|k|^(-decay)`. The result is rescaled to unit L2 norm.
pub fn random_solenoidal<R: Rng + ?Sized>(
    domain: DomainSpec,
    k_max: f64,
    decay: f64,
    rng: &mut R,
) -> VelocityField {
    let n = domain.n();
    let mut psi = vec![C64::new(0.0, 0.0); n * n];
    let kcap = (k_max.floor() as i64).min(n as i64 / 2 - 1);
    for ky in -kcap..=kcap {
        for kx in -kcap..=kcap {
            // one representative per +/- pair
            if ky < 0 || (ky == 0 && kx <= 0) {
                continue;
            }
            let kk = ((kx * kx + ky * ky) as f64).sqrt();
            if kk > k_max {
                continue;
            }
            let amp = kk.powf(-decay);
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let c = C64::new(re, im) * amp;
            let ix = kx.rem_euclid(n as i64) as usize;
            let iy = ky.rem_euclid(n as i64) as usize;
            let jx = (-kx).rem_euclid(n as i64) as usize;
            let jy = (-ky).rem_euclid(n as i64) as usize;
            psi[iy * n + ix] = c;
            psi[jy * n + jx] = c.conj();
        }
    }
    let mut uh = vec![C64::new(0.0, 0.0); n * n];
    let mut vh = vec![C64::new(0.0, 0.0); n * n];
    for iy in 0..n {
        let ky = domain.diff_wavenumber(iy);
        for ix in 0..n {
            let kx = domain.diff_wavenumber(ix);
            let k = iy * n + ix;
            // u = d psi / dy, v = -d psi / dx
            uh[k] = C64::new(0.0, ky) * psi[k];
            vh[k] = C64::new(0.0, -kx) * psi[k];
        }
    }
    let f = VelocityField::from_spectral(domain, &[uh, vh]);
    let nrm = norm_l2(&f);
    if nrm > 0.0 {
        &f * (1.0 / nrm)
    } else {
        f
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn torus(n: usize) -> DomainSpec {
        make_grid(n, 2.0 * PI).unwrap()
    }

    #[test]
    fn grid_construction() {
        let g = make_grid(64, 2.0 * PI).unwrap();
        assert!((g.lambda1() - 1.0).abs() < 1e-15);
        assert!((g.area() - 4.0 * PI * PI).abs() < 1e-12);
        let g = make_grid(8, 1.0).unwrap();
        assert!((g.lambda1() - 4.0 * PI * PI).abs() < 1e-12);
        let err = make_grid(7, 1.0).unwrap_err();
        assert!(err.to_string().contains("resolution must be even"));
        assert!(make_grid(6, 1.0).is_err());
        assert!(make_grid(8, 0.0).is_err());
        assert!(make_grid(8, -1.0).is_err());
    }

    #[test]
    fn l2_norm_examples() {
        let d = torus(32);
        let f = VelocityField::from_fn(d, |_, y| (y.sin(), 0.0));
        assert!((norm_l2(&f) - (2.0 * PI * PI).sqrt()).abs() < 1e-12);
        assert_eq!(norm_l2(&VelocityField::zeros(d)), 0.0);
        let c = VelocityField::from_fn(d, |_, _| (3.0, 0.0));
        assert!((norm_l2(&c) - 3.0 * 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn lp_norm_examples() {
        let d = torus(32);
        let a = 1.7;
        let f = VelocityField::from_fn(d, |_, y| (a * y.sin(), 0.0));
        let e = crate::operators::strain(&f);
        let n4 = norm_lp(&e, 4).unwrap().powi(4);
        let expect = 6.0 * PI * PI * a.powi(4);
        assert!((n4 - expect).abs() / expect < 1e-12);
        assert_eq!(norm_lp(&VelocityField::zeros(d), 4).unwrap(), 0.0);
        assert_eq!(norm_lp(&VelocityField::zeros(d), 2).unwrap(), 0.0);
        let t = TensorField::constant(d, [[1.0, 2.0], [2.0, -1.0]]);
        let m = 10.0f64.sqrt();
        for p in [2u32, 4] {
            let got = norm_lp(&t, p).unwrap();
            let want = m * d.area().powf(1.0 / p as f64);
            assert!((got - want).abs() / want < 1e-12, "p={p}");
        }
        assert!(matches!(norm_lp(&t, 3), Err(Error::UnsupportedExponent(3))));
    }

    #[test]
    fn inner_examples() {
        let d = torus(16);
        let f = VelocityField::from_fn(d, |_, y| (y.sin(), 0.0));
        assert!((inner(&f, &f).unwrap() - 2.0 * PI * PI).abs() < 1e-12);
        assert!((inner(&f, &f).unwrap() - norm_l2(&f).powi(2)).abs() < 1e-12);
        let g = VelocityField::from_fn(d, |x, y| ((2.0 * y).cos(), (x + y).sin()));
        assert!(inner(&f, &g).unwrap().abs() < 1e-13 * norm_l2(&f) * norm_l2(&g));
        let other = VelocityField::zeros(torus(8));
        assert!(matches!(inner(&f, &other), Err(Error::GridMismatch)));
    }

    #[test]
    fn h1_seminorm_examples() {
        let d = torus(32);
        let f = VelocityField::from_fn(d, |_, y| (y.sin(), 0.0));
        let s1 = h1_seminorm(&f);
        assert!((s1 - (2.0 * PI * PI).sqrt()).abs() < 1e-12);
        let c = VelocityField::from_fn(d, |_, _| (1.0, -2.0));
        assert!(h1_seminorm(&c) < 1e-12);
        let f2 = VelocityField::from_fn(d, |_, y| ((2.0 * y).sin(), 0.0));
        assert!((h1_seminorm(&f2) - 2.0 * s1).abs() < 1e-12);
    }

    #[test]
    fn dual_norm_examples() {
        let d = torus(32);
        let f = VelocityField::from_fn(d, |_, y| (y.sin(), 0.0));
        let v = dual_norm(&f).unwrap();
        assert!((v - (2.0 * PI * PI).sqrt()).abs() < 1e-12);
        assert_eq!(dual_norm(&VelocityField::zeros(d)).unwrap(), 0.0);
        let f2 = VelocityField::from_fn(d, |_, y| ((2.0 * y).sin(), 0.0));
        assert!((dual_norm(&f2).unwrap() - (2.0 * PI * PI).sqrt() / 2.0).abs() < 1e-12);
        let c = VelocityField::from_fn(d, |_, y| (1.0 + y.sin(), 0.0));
        assert!(matches!(dual_norm(&c), Err(Error::NonzeroMean(_))));
    }

    #[test]
    fn random_fields_are_solenoidal_and_normalized() {
        let d = make_grid(32, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_solenoidal(d, 6.0, 1.0, &mut rng);
        assert!((norm_l2(&f) - 1.0).abs() < 1e-12);
        assert!(relative_divergence(&f) < 1e-12);
        let m = f.mean();
        assert!(m[0].abs() < 1e-14 && m[1].abs() < 1e-14);
    }
}
