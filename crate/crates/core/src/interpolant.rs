//! Observation operators at length scale `varpi`: cell averages over a
//! uniform partition (volume elements) and orthogonal projection onto the
//! Fourier modes with `|k| <= 1/varpi`, plus empirical certification of the
//! approximation constant `c0` in `||f - R f||^2 <= c0 varpi^2 ||f||_{H^1}^2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::C64;
use crate::grid::{h1_seminorm, norm_l2, random_solenoidal, DomainSpec, VelocityField};
use crate::stochastic::PathRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpolantKind {
    VolumeElement,
    FourierModes,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpolantSpec {
    pub kind: InterpolantKind,
    pub varpi: f64,
}

impl InterpolantSpec {
    pub fn volume_element(varpi: f64) -> Self {
        Self {
            kind: InterpolantKind::VolumeElement,
            varpi,
        }
    }

    pub fn fourier_modes(varpi: f64) -> Self {
        Self {
            kind: InterpolantKind::FourierModes,
            varpi,
        }
    }

    pub fn validate(&self, grid: &DomainSpec) -> Result<()> {
        if !(self.varpi > 0.0) || !(self.varpi < grid.length()) {
            return Err(Error::Interpolant(format!(
                "varpi = {} must lie in (0, L = {})",
                self.varpi,
                grid.length()
            )));
        }
        Ok(())
    }

    /// Cells per axis: `ceil(L / varpi)` snapped up to a divisor of `n`.
    pub fn cells_per_axis(&self, grid: &DomainSpec) -> Result<usize> {
        self.validate(grid)?;
        let n = grid.n();
        let want = (grid.length() / self.varpi).ceil() as usize;
        if want > n {
            return Err(Error::Interpolant(format!(
                "{want} cells per axis exceed the {n} grid points"
            )));
        }
        Ok((want.max(1)..=n).find(|c| n % c == 0).unwrap_or(n))
    }

    /// Physical wavenumber cutoff `1 / varpi`.
    pub fn cutoff(&self) -> f64 {
        1.0 / self.varpi
    }

    pub fn apply(&self, f: &VelocityField) -> Result<VelocityField> {
        match self.kind {
            InterpolantKind::VolumeElement => volume_element(f, self),
            InterpolantKind::FourierModes => fourier_modes(f, self),
        }
    }
}

/// Piecewise-constant field of cell means (rectangle rule on the samples).
pub fn volume_element(f: &VelocityField, spec: &InterpolantSpec) -> Result<VelocityField> {
    if spec.kind != InterpolantKind::VolumeElement {
        return Err(Error::Interpolant("spec is not a volume-element interpolant".into()));
    }
    let d = *f.domain();
    let cells = spec.cells_per_axis(&d)?;
    let n = d.n();
    let b = n / cells;
    let mut out = [vec![0.0; n * n], vec![0.0; n * n]];
    for (c, o) in out.iter_mut().enumerate() {
        let src = f.component(c);
        for cy in 0..cells {
            for cx in 0..cells {
                let idx = |j: usize| (cy * b + j / b) * n + cx * b + j % b;
                let first = src[idx(0)];
                // constant blocks map to themselves bit-exactly
                let mean = if (0..b * b).all(|j| src[idx(j)] == first) {
                    first
                } else {
                    (0..b * b).map(|j| src[idx(j)]).sum::<f64>() / (b * b) as f64
                };
                (0..b * b).for_each(|j| o[idx(j)] = mean);
            }
        }
    }
    let [u, v] = out;
    VelocityField::from_components(d, u, v)
}

/// Retained-mode mask of the Fourier interpolant on the native grid.
pub(crate) fn fourier_mask(d: &DomainSpec, spec: &InterpolantSpec) -> Vec<bool> {
    let n = d.n();
    let cut2 = spec.cutoff().powi(2);
    let mut mask = vec![false; n * n];
    for iy in 0..n {
        let ky = d.wavenumber(iy);
        for ix in 0..n {
            let kx = d.wavenumber(ix);
            mask[iy * n + ix] = kx * kx + ky * ky <= cut2;
        }
    }
    mask
}

/// Orthogonal projection onto the modes with `|k_phys| <= 1/varpi`.
pub fn fourier_modes(f: &VelocityField, spec: &InterpolantSpec) -> Result<VelocityField> {
    if spec.kind != InterpolantKind::FourierModes {
        return Err(Error::Interpolant("spec is not a Fourier-mode interpolant".into()));
    }
    let d = *f.domain();
    spec.validate(&d)?;
    let mask = fourier_mask(&d, spec);
    let mut hat = f.spectral();
    for h in hat.iter_mut() {
        for (c, keep) in h.iter_mut().zip(&mask) {
            if !keep {
                *c = C64::new(0.0, 0.0);
            }
        }
    }
    Ok(VelocityField::from_spectral(d, &hat))
}

/// Empirical approximation constant of an interpolant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C0Certificate {
    pub interpolant: InterpolantSpec,
    pub c0_hat: f64,
    pub ensemble_size: usize,
    pub random_fields: usize,
    pub adversarial_modes: usize,
    /// Band limits (index units) of the random fields.
    pub k_max_range: [f64; 2],
    /// Spectral decay exponents of the random fields.
    pub decay_range: [f64; 2],
    pub max_ratio: f64,
    pub mean_ratio: f64,
    /// Snapped cell count for volume elements.
    pub cells_per_axis: Option<usize>,
}

/// `||f - R f||^2 / (varpi^2 ||f||_{H^1}^2)` with the full H1 norm.
pub fn approximation_ratio(f: &VelocityField, spec: &InterpolantSpec) -> Result<f64> {
    let r = spec.apply(f)?;
    let res = norm_l2(&(f - &r)).powi(2);
    let h1 = norm_l2(f).powi(2) + h1_seminorm(f).powi(2);
    if h1 == 0.0 {
        return Ok(0.0);
    }
    Ok(res / (spec.varpi * spec.varpi * h1))
}

fn certify(
    spec: &InterpolantSpec,
    grid: &DomainSpec,
    ratios: &[f64],
    random_fields: usize,
    k_max_range: [f64; 2],
    decay_range: [f64; 2],
) -> Result<C0Certificate> {
    let max = ratios.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) || !max.is_finite() {
        return Err(Error::DegenerateEnsemble(format!(
            "all {} approximation ratios vanish",
            ratios.len()
        )));
    }
    let cells = match spec.kind {
        InterpolantKind::VolumeElement => Some(spec.cells_per_axis(grid)?),
        InterpolantKind::FourierModes => None,
    };
    Ok(C0Certificate {
        interpolant: *spec,
        c0_hat: max,
        ensemble_size: ratios.len(),
        random_fields,
        adversarial_modes: ratios.len() - random_fields,
        k_max_range,
        decay_range,
        max_ratio: max,
        mean_ratio: ratios.iter().sum::<f64>() / ratios.len() as f64,
        cells_per_axis: cells,
    })
}

/// Certificate over a caller-supplied ensemble.
pub fn estimate_c0_over(spec: &InterpolantSpec, fields: &[VelocityField]) -> Result<C0Certificate> {
    let first = fields
        .first()
        .ok_or_else(|| Error::DegenerateEnsemble("empty ensemble".into()))?;
    let grid = *first.domain();
    let ratios = fields
        .iter()
        .map(|f| {
            if f.domain() != &grid {
                return Err(Error::GridMismatch);
            }
            approximation_ratio(f, spec)
        })
        .collect::<Result<Vec<_>>>()?;
    certify(spec, &grid, &ratios, fields.len(), [0.0, 0.0], [0.0, 0.0])
}

/// Single divergence-free modes `k_perp/|k| cos(k.x + phase)` used as
/// adversarial ensemble members.
fn single_mode(grid: DomainSpec, kx: i64, ky: i64, phase: f64) -> VelocityField {
    let kk = ((kx * kx + ky * ky) as f64).sqrt();
    let unit = 2.0 * std::f64::consts::PI / grid.length();
    let (ex, ey) = (-(ky as f64) / kk, kx as f64 / kk);
    VelocityField::from_fn(grid, |x, y| {
        let s = (unit * (kx as f64 * x + ky as f64 * y) + phase).cos();
        (ex * s, ey * s)
    })
}

/// Maximizes the approximation ratio over random smooth divergence-free
/// fields and single modes straddling the interpolant's resolution.
pub fn estimate_c0(
    spec: &InterpolantSpec,
    grid: &DomainSpec,
    samples: usize,
    rng: &mut PathRng,
) -> Result<C0Certificate> {
    if samples < 50 {
        return Err(Error::InsufficientData(format!(
            "c0 estimation needs at least 50 samples, got {samples}"
        )));
    }
    spec.validate(grid)?;
    let nyq = (grid.n() / 2 - 1) as f64;
    let k_range = [2.0_f64.min(nyq), (grid.n() as f64 / 4.0).max(2.0).min(nyq)];
    let decay_range = [0.5, 3.0];
    let mut ratios = Vec::with_capacity(samples + 16);
    for _ in 0..samples {
        let u: f64 = rand::Rng::random(rng);
        let w: f64 = rand::Rng::random(rng);
        let k_max = k_range[0] + u * (k_range[1] - k_range[0]);
        let decay = decay_range[0] + w * (decay_range[1] - decay_range[0]);
        let f = random_solenoidal(*grid, k_max, decay, rng);
        ratios.push(approximation_ratio(&f, spec)?);
    }
    // adversarial modes: index wavenumbers around the resolution scale L / varpi
    let scale = grid.length() / (2.0 * std::f64::consts::PI * spec.varpi);
    let top = (grid.n() / 2 - 1) as i64;
    let ks: Vec<i64> = (1..=top)
        .filter(|&k| (k as f64) <= 4.0 * scale + 2.0)
        .collect();
    for &k in &ks {
        for &(kx, ky) in &[(k, 0), (0, k), (k, k)] {
            if kx.max(ky) > top {
                continue;
            }
            ratios.push(approximation_ratio(&single_mode(*grid, kx, ky, 0.3), spec)?);
        }
    }
    certify(spec, grid, &ratios, samples, k_range, decay_range)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{inner, make_grid};
    use std::f64::consts::PI;

    fn torus(n: usize) -> DomainSpec {
        make_grid(n, 2.0 * PI).unwrap()
    }

    #[test]
    fn cell_counts_snap_to_divisors() {
        let g = make_grid(48, 1.0).unwrap();
        assert_eq!(InterpolantSpec::volume_element(0.25).cells_per_axis(&g).unwrap(), 4);
        assert_eq!(InterpolantSpec::volume_element(0.2).cells_per_axis(&g).unwrap(), 6);
        assert_eq!(InterpolantSpec::volume_element(1.0 / 7.0).cells_per_axis(&g).unwrap(), 8);
        assert!(InterpolantSpec::volume_element(1.5).cells_per_axis(&g).is_err());
        assert!(InterpolantSpec::volume_element(0.0).cells_per_axis(&g).is_err());
    }

    #[test]
    fn volume_element_examples() {
        let g = torus(64);
        let c = VelocityField::from_fn(g, |_, _| (1.25, -0.5));
        let spec = InterpolantSpec::volume_element(PI);
        assert_eq!(volume_element(&c, &spec).unwrap(), c);
        let f = VelocityField::from_fn(g, |x, _| (x.sin(), 0.0));
        let r = volume_element(&f, &spec).unwrap();
        assert!((r.u()[0] - 2.0 / PI).abs() < 1e-3);
        assert!((r.u()[40] + 2.0 / PI).abs() < 1e-3);
        let rr = volume_element(&r, &spec).unwrap();
        assert_eq!(rr, r);
        assert!(fourier_modes(&f, &spec).is_err());
    }

    #[test]
    fn fourier_examples() {
        let g = torus(32);
        let spec = InterpolantSpec::fourier_modes(1.0 / 3.5);
        let inside = VelocityField::from_fn(g, |x, y| ((2.0 * y).sin() + 0.2, (3.0 * x).cos()));
        let out = fourier_modes(&inside, &spec).unwrap();
        let err = norm_l2(&(&out - &inside));
        assert!(err < 1e-13);
        let outside = VelocityField::from_fn(g, |x, y| ((4.0 * y + x).sin(), 0.0));
        assert!(norm_l2(&fourier_modes(&outside, &spec).unwrap()) < 1e-13);
        let mut rng = PathRng::new(4, 0);
        let f = random_solenoidal(g, 10.0, 0.5, &mut rng);
        let p = fourier_modes(&f, &spec).unwrap();
        let res = &f - &p;
        assert!(inner(&p, &res).unwrap().abs() < 1e-13);
        let pyth = norm_l2(&p).powi(2) + norm_l2(&res).powi(2);
        assert!((pyth - norm_l2(&f).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn certificates() {
        let g = torus(32);
        let mut rng = PathRng::new(5, 0);
        let spec = InterpolantSpec::fourier_modes(0.5);
        let cert = estimate_c0(&spec, &g, 50, &mut rng).unwrap();
        assert!(cert.c0_hat <= 1.0 && cert.c0_hat > 0.1);
        assert!(estimate_c0(&spec, &g, 10, &mut rng).is_err());
        let ve = InterpolantSpec::volume_element(PI / 2.0);
        let constants: Vec<_> = (0..5)
            .map(|i| VelocityField::from_fn(g, move |_, _| (i as f64, 1.0)))
            .collect();
        assert!(matches!(
            estimate_c0_over(&ve, &constants),
            Err(Error::DegenerateEnsemble(_))
        ));
        let json = serde_json::to_string(&cert).unwrap();
        let back: C0Certificate = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cert);
    }
}
