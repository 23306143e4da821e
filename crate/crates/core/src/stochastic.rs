//! G-Wiener process on the divergence-free subspace and the noise
//! coefficient `Phi`.
//!
//! The covariance is diagonal in a real Fourier basis: each wavevector `k`
//! with `0 < |k| <= k_max` (one per `+/-k` pair) contributes a cosine and a
//! sine field `q = sqrt(2/|D|) k_perp/|k| cos(k.x)` (resp. `sin`), both with
//! eigenvalue `mu_k = a |k_phys|^(-2s)`. Increments are
//! `dW = sum_j sqrt(mu_j dt) g_j q_j` with independent standard normals.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fft::C64;
use crate::grid::{DomainSpec, VelocityField};

/// Reproducible random stream for one Monte-Carlo path.
#[derive(Debug, Clone)]
pub struct PathRng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl PathRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }
}

impl RngCore for PathRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Cos,
    Sin,
}

/// One real basis field of the noise covariance.
#[derive(Debug, Clone)]
pub struct NoiseMode {
    pub kx: i64,
    pub ky: i64,
    pub phase: Phase,
    pub eigenvalue: f64,
    /// Storage positions of `+k` and `-k` on the native grid.
    plus: usize,
    minus: usize,
    /// Coefficient vector at `+k`; the `-k` entry is its conjugate.
    coeff: [C64; 2],
}

/// Truncated G-Wiener covariance in the divergence-free Fourier basis.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    domain: DomainSpec,
    k_max: usize,
    amplitude: f64,
    decay: f64,
    modes: Vec<NoiseMode>,
}

pub fn build_noise(k_max: usize, amplitude: f64, decay: f64, grid: &DomainSpec) -> Result<NoiseModel> {
    if k_max < 1 {
        return Err(invalid("noise.k_max", "must be at least 1"));
    }
    if k_max >= grid.n() / 2 {
        return Err(invalid(
            "noise.k_max",
            format!("{k_max} reaches the Nyquist limit of an n = {} grid", grid.n()),
        ));
    }
    if !(amplitude > 0.0) || !amplitude.is_finite() {
        return Err(invalid("noise.amplitude", "must be positive"));
    }
    if !(decay > 1.0) {
        return Err(invalid("noise.decay", "must exceed d/2 = 1"));
    }
    let n = grid.n() as i64;
    let kk = k_max as i64;
    let c = (2.0 / grid.area()).sqrt();
    let kunit = 2.0 * std::f64::consts::PI / grid.length();
    let mut modes = Vec::new();
    for ky in 0..=kk {
        for kx in -kk..=kk {
            if ky == 0 && kx <= 0 {
                continue;
            }
            let k2 = (kx * kx + ky * ky) as f64;
            if k2 > (kk * kk) as f64 {
                continue;
            }
            let kabs = k2.sqrt();
            let mu = amplitude * (kunit * kabs).powf(-2.0 * decay);
            let e = [-(ky as f64) / kabs, kx as f64 / kabs];
            let plus = (ky.rem_euclid(n) * n + kx.rem_euclid(n)) as usize;
            let minus = ((-ky).rem_euclid(n) * n + (-kx).rem_euclid(n)) as usize;
            let half = 0.5 * c;
            modes.push(NoiseMode {
                kx,
                ky,
                phase: Phase::Cos,
                eigenvalue: mu,
                plus,
                minus,
                coeff: [C64::new(half * e[0], 0.0), C64::new(half * e[1], 0.0)],
            });
            modes.push(NoiseMode {
                kx,
                ky,
                phase: Phase::Sin,
                eigenvalue: mu,
                plus,
                minus,
                coeff: [C64::new(0.0, -half * e[0]), C64::new(0.0, -half * e[1])],
            });
        }
    }
    Ok(NoiseModel {
        domain: *grid,
        k_max,
        amplitude,
        decay,
        modes,
    })
}

impl NoiseModel {
    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn modes(&self) -> &[NoiseMode] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    /// Tr G = sum of eigenvalues over the retained basis.
    pub fn trace(&self) -> f64 {
        self.modes.iter().map(|m| m.eigenvalue).sum()
    }

    pub fn mu_max(&self) -> f64 {
        self.modes.iter().map(|m| m.eigenvalue).fold(0.0, f64::max)
    }

    /// Basis field `q_j` sampled on the grid.
    pub fn basis_field(&self, j: usize) -> VelocityField {
        let hat = self.synthesize_hat(|i| if i == j { 1.0 } else { 0.0 });
        VelocityField::from_spectral(self.domain, &hat)
    }

    /// Spectral coefficients of `sum_j weight(j) q_j`.
    pub(crate) fn synthesize_hat(&self, weight: impl Fn(usize) -> f64) -> [Vec<C64>; 2] {
        let p = self.domain.points();
        let mut hat = [vec![C64::new(0.0, 0.0); p], vec![C64::new(0.0, 0.0); p]];
        for (j, m) in self.modes.iter().enumerate() {
            let w = weight(j);
            if w == 0.0 {
                continue;
            }
            for c in 0..2 {
                hat[c][m.plus] += m.coeff[c] * w;
                hat[c][m.minus] += m.coeff[c].conj() * w;
            }
        }
        hat
    }

    /// `(f, q_j)` for every basis field, from native spectral coefficients.
    pub(crate) fn project_coefficients(&self, hat: &[Vec<C64>; 2]) -> Vec<f64> {
        let area = self.domain.area();
        self.modes
            .iter()
            .map(|m| {
                let s: f64 = (0..2)
                    .map(|c| (hat[c][m.plus] * m.coeff[c].conj()).re)
                    .sum();
                2.0 * area * s
            })
            .collect()
    }

    /// `(f, q_j)` for every basis field.
    pub fn coefficients_of(&self, f: &VelocityField) -> Result<Vec<f64>> {
        if f.domain() != &self.domain {
            return Err(Error::NoiseMismatch("field lives on a different grid".into()));
        }
        Ok(self.project_coefficients(&f.spectral()))
    }

    /// Draws `sqrt(mu_j dt) g_j` for every basis field, in basis order.
    pub fn sample_coefficients(&self, dt: f64, rng: &mut PathRng) -> Vec<f64> {
        self.modes
            .iter()
            .map(|m| (m.eigenvalue * dt).sqrt() * rng.standard_normal())
            .collect()
    }

    pub fn field_from_coefficients(&self, w: &[f64]) -> VelocityField {
        VelocityField::from_spectral(self.domain, &self.synthesize_hat(|j| w[j]))
    }
}

/// Wiener increment over a step of length `dt`.
pub fn sample_increment(model: &NoiseModel, dt: f64, rng: &mut PathRng) -> Result<VelocityField> {
    if !(dt > 0.0) {
        return Err(invalid("dt", "must be positive"));
    }
    let w = model.sample_coefficients(dt, rng);
    Ok(model.field_from_coefficients(&w))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Additive,
    DiagonalMultiplicative,
}

/// `Phi(xi) q_j = (sigma0 + sigma1 (xi, q_j)) q_j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseCoefficient {
    pub kind: NoiseKind,
    pub sigma0: f64,
    #[serde(default)]
    pub sigma1: f64,
}

impl NoiseCoefficient {
    pub fn additive(sigma0: f64) -> Self {
        Self {
            kind: NoiseKind::Additive,
            sigma0,
            sigma1: 0.0,
        }
    }

    pub fn multiplicative(sigma0: f64, sigma1: f64) -> Self {
        Self {
            kind: NoiseKind::DiagonalMultiplicative,
            sigma0,
            sigma1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma0 >= 0.0) || !self.sigma0.is_finite() {
            return Err(invalid("noise.sigma0", "must be non-negative"));
        }
        if !(self.sigma1 >= 0.0) || !self.sigma1.is_finite() {
            return Err(invalid("noise.sigma1", "must be non-negative"));
        }
        if self.kind == NoiseKind::Additive && self.sigma1 != 0.0 {
            return Err(invalid("noise.sigma1", "must be zero for additive noise"));
        }
        Ok(())
    }

    fn state_gain(&self) -> f64 {
        match self.kind {
            NoiseKind::Additive => 0.0,
            NoiseKind::DiagonalMultiplicative => self.sigma1,
        }
    }

    /// Linear-growth constant `K = 2 sigma0^2 Tr G`.
    pub fn k_const(&self, model: &NoiseModel) -> f64 {
        2.0 * self.sigma0 * self.sigma0 * model.trace()
    }

    /// Linear-growth slope `K~ = 2 sigma1^2 mu_max`.
    pub fn k_tilde(&self, model: &NoiseModel) -> f64 {
        let s = self.state_gain();
        2.0 * s * s * model.mu_max()
    }

    /// Lipschitz constant `L = 2 sigma1^2 mu_max`.
    pub fn lipschitz(&self, model: &NoiseModel) -> f64 {
        self.k_tilde(model)
    }

    /// Per-basis gains `sigma0 + sigma1 (xi, q_j)` given the projections of `xi`.
    pub(crate) fn gains(&self, projections: &[f64]) -> Vec<f64> {
        let s1 = self.state_gain();
        projections.iter().map(|p| self.sigma0 + s1 * p).collect()
    }
}

/// `Phi(xi) dW`.
pub fn apply_coefficient(
    coeff: &NoiseCoefficient,
    model: &NoiseModel,
    xi: &VelocityField,
    dw: &VelocityField,
) -> Result<VelocityField> {
    if dw.domain() != model.domain() {
        return Err(Error::NoiseMismatch("increment lives on a different grid".into()));
    }
    match coeff.kind {
        NoiseKind::Additive => Ok(dw * coeff.sigma0),
        NoiseKind::DiagonalMultiplicative => {
            let p = model.coefficients_of(xi)?;
            let w = model.coefficients_of(dw)?;
            let g = coeff.gains(&p);
            Ok(model.field_from_coefficients(&g.iter().zip(&w).map(|(a, b)| a * b).collect::<Vec<_>>()))
        }
    }
}

/// `||Phi(xi)||^2_{L_G} = sum_j mu_j ||Phi(xi) q_j||^2`.
pub fn hs_norm(coeff: &NoiseCoefficient, model: &NoiseModel, xi: &VelocityField) -> Result<f64> {
    let p = model.coefficients_of(xi)?;
    let g = coeff.gains(&p);
    Ok(model
        .modes
        .iter()
        .zip(&g)
        .map(|(m, gj)| m.eigenvalue * gj * gj)
        .sum())
}

/// `||Phi(xi1) - Phi(xi2)||^2_{L_G}`.
pub fn hs_norm_difference(
    coeff: &NoiseCoefficient,
    model: &NoiseModel,
    xi1: &VelocityField,
    xi2: &VelocityField,
) -> Result<f64> {
    let p = model.coefficients_of(&(xi1 - xi2))?;
    let s1 = coeff.state_gain();
    Ok(model
        .modes
        .iter()
        .zip(&p)
        .map(|(m, pj)| m.eigenvalue * (s1 * pj).powi(2))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{inner, make_grid, norm_l2, random_solenoidal, relative_divergence};
    use std::f64::consts::PI;

    fn torus(n: usize) -> DomainSpec {
        make_grid(n, 2.0 * PI).unwrap()
    }

    #[test]
    fn trace_by_enumeration() {
        let g = torus(16);
        let m = build_noise(1, 1.0, 2.0, &g).unwrap();
        // full-plane enumeration of 0 < |k| <= 1
        let mut brute = 0.0;
        for ky in -1i64..=1 {
            for kx in -1i64..=1 {
                let k2 = (kx * kx + ky * ky) as f64;
                if k2 > 0.0 && k2 <= 1.0 {
                    brute += k2.sqrt().powf(-4.0);
                }
            }
        }
        assert!((m.trace() - brute).abs() < 1e-14);
        let m2 = build_noise(1, 2.0, 2.0, &g).unwrap();
        assert!((m2.trace() - 2.0 * m.trace()).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_parameters() {
        let g = torus(16);
        assert!(build_noise(1, 0.0, 2.0, &g).is_err());
        assert!(build_noise(0, 1.0, 2.0, &g).is_err());
        assert!(build_noise(8, 1.0, 2.0, &g).is_err());
        assert!(build_noise(2, 1.0, 1.0, &g).is_err());
    }

    #[test]
    fn basis_is_orthonormal_and_solenoidal() {
        let g = make_grid(16, 3.0).unwrap();
        let m = build_noise(2, 1.0, 2.0, &g).unwrap();
        let q: Vec<_> = (0..m.len()).map(|j| m.basis_field(j)).collect();
        for i in 0..q.len() {
            assert!(relative_divergence(&q[i]) < 1e-12);
            let mean = q[i].mean();
            assert!(mean[0].abs() < 1e-14 && mean[1].abs() < 1e-14);
            for j in 0..q.len() {
                let ip = inner(&q[i], &q[j]).unwrap();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((ip - want).abs() < 1e-12, "({i},{j}) -> {ip}");
            }
        }
        let coeffs = m.coefficients_of(&q[3]).unwrap();
        for (j, c) in coeffs.iter().enumerate() {
            let want = if j == 3 { 1.0 } else { 0.0 };
            assert!((c - want).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_streams_reproduce_bit_exactly() {
        let g = torus(16);
        let m = build_noise(3, 1.0, 2.0, &g).unwrap();
        let a = sample_increment(&m, 0.01, &mut PathRng::new(7, 3)).unwrap();
        let b = sample_increment(&m, 0.01, &mut PathRng::new(7, 3)).unwrap();
        assert_eq!(a, b);
        let c = sample_increment(&m, 0.01, &mut PathRng::new(7, 4)).unwrap();
        assert_ne!(a, c);
        assert!(sample_increment(&m, 0.0, &mut PathRng::new(7, 3)).is_err());
    }

    #[test]
    fn additive_coefficient_examples() {
        let g = torus(16);
        let m = build_noise(2, 1.0, 2.0, &g).unwrap();
        let dw = sample_increment(&m, 0.1, &mut PathRng::new(1, 0)).unwrap();
        let xi = VelocityField::from_fn(g, |_, y| (y.sin(), 0.0));
        let out = apply_coefficient(&NoiseCoefficient::additive(1.0), &m, &xi, &dw).unwrap();
        assert_eq!(out, dw);
        let hs = hs_norm(&NoiseCoefficient::additive(0.3), &m, &xi).unwrap();
        assert!((hs - 0.09 * m.trace()).abs() < 1e-14);
    }

    #[test]
    fn multiplicative_coefficient_examples() {
        let g = torus(16);
        let m = build_noise(2, 1.0, 2.0, &g).unwrap();
        let dw = sample_increment(&m, 0.1, &mut PathRng::new(2, 0)).unwrap();
        let zero = VelocityField::zeros(g);
        let c = NoiseCoefficient::multiplicative(0.0, 0.8);
        let out = apply_coefficient(&c, &m, &zero, &dw).unwrap();
        assert_eq!(norm_l2(&out), 0.0);
        let c = NoiseCoefficient::multiplicative(0.4, 0.8);
        let hs = hs_norm(&c, &m, &zero).unwrap();
        assert!((hs - 0.16 * m.trace()).abs() < 1e-14);
        // mismatched grids
        let other = build_noise(2, 1.0, 2.0, &torus(32)).unwrap();
        assert!(apply_coefficient(&c, &other, &zero, &dw).is_err());
    }

    #[test]
    fn growth_and_lipschitz_constants_hold() {
        let g = torus(16);
        let m = build_noise(2, 1.0, 2.0, &g).unwrap();
        let c = NoiseCoefficient::multiplicative(0.5, 0.9);
        let mut rng = PathRng::new(11, 0);
        for _ in 0..50 {
            let a = &random_solenoidal(g, 5.0, 0.5, &mut rng) * (1.0 + 3.0 * rng.standard_normal().abs());
            let b = &random_solenoidal(g, 5.0, 0.5, &mut rng) * 2.0;
            let hs = hs_norm(&c, &m, &a).unwrap();
            assert!(hs <= c.k_const(&m) + c.k_tilde(&m) * norm_l2(&a).powi(2));
            let lip = hs_norm_difference(&c, &m, &a, &b).unwrap();
            assert!(lip <= c.lipschitz(&m) * norm_l2(&(&a - &b)).powi(2));
        }
        let add = NoiseCoefficient::additive(0.5);
        assert_eq!(add.lipschitz(&m), 0.0);
        assert!(NoiseCoefficient { kind: NoiseKind::Additive, sigma0: 1.0, sigma1: 0.1 }
            .validate()
            .is_err());
    }
}
