//! Two-dimensional FFT machinery on square periodic grids.
//!
//! Spectral coefficients are normalized so that a physical sample is
//! `f(x_j) = sum_k c_k exp(i k . x_j)`, i.e. `c = DFT(f) / n^2`. Arrays are
//! row-major with the row index running over `y` and the column over `x`.
//!
//! Besides the native grid of side `n`, every workspace owns plans for the
//! two dealiasing grids: `3n/2` (quadratic products) and `2n` (cubic
//! products and quartic quadrature).

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub type C64 = Complex64;

/// Signed wavenumber index of storage position `i` on an `n`-point axis.
/// The Nyquist position `n/2` maps to `-n/2`.
#[inline]
pub fn signed_index(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

#[inline]
pub fn is_nyquist(i: usize, n: usize) -> bool {
    i == n / 2
}

#[inline]
fn wrap(k: i64, m: usize) -> usize {
    k.rem_euclid(m as i64) as usize
}

struct Fft2 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch_len: usize,
    /// `(native index, kx-major padded index, weight)` of the zero-padding.
    pad_map: Vec<(usize, usize, f64)>,
    /// `(native index, kx-major index, kx-major index of -k)` of truncation.
    keep_map: Vec<(usize, usize, usize)>,
}

impl Fft2 {
    /// Plans for side `m` together with the padding and truncation maps
    /// from a native side `native`.
    fn new(planner: &mut FftPlanner<f64>, m: usize, native: usize) -> Self {
        let fwd = planner.plan_fft_forward(m);
        let inv = planner.plan_fft_inverse(m);
        let scratch_len = fwd
            .get_inplace_scratch_len()
            .max(inv.get_inplace_scratch_len());
        let n = native;
        let targets = |i: usize| -> Vec<(i64, f64)> {
            if is_nyquist(i, n) {
                vec![((n / 2) as i64, 0.5), (-((n / 2) as i64), 0.5)]
            } else {
                vec![(signed_index(i, n), 1.0)]
            }
        };
        let mut pad_map = Vec::with_capacity(n * n);
        let mut keep_map = Vec::with_capacity(n * n);
        for iy in 0..n {
            for ix in 0..n {
                let k = iy * n + ix;
                for &(ky, wy) in &targets(iy) {
                    for &(kx, wx) in &targets(ix) {
                        pad_map.push((k, wrap(kx, m) * m + wrap(ky, m), wy * wx));
                    }
                }
                if !is_nyquist(iy, n) && !is_nyquist(ix, n) {
                    let (ky, kx) = (signed_index(iy, n), signed_index(ix, n));
                    keep_map.push((k, wrap(kx, m) * m + wrap(ky, m), wrap(-kx, m) * m + wrap(-ky, m)));
                }
            }
        }
        Self {
            n: m,
            fwd,
            inv,
            scratch_len,
            pad_map,
            keep_map,
        }
    }

    fn run(&self, buf: &mut [C64], plan: &Arc<dyn Fft<f64>>) {
        debug_assert_eq!(buf.len(), self.n * self.n);
        let mut scratch = vec![C64::new(0.0, 0.0); self.scratch_len];
        plan.process_with_scratch(buf, &mut scratch);
        transpose(buf, self.n);
        plan.process_with_scratch(buf, &mut scratch);
        transpose(buf, self.n);
    }

    /// Row transforms over a slice holding whole rows.
    fn rows(&self, rows: &mut [C64], inverse: bool) {
        if rows.is_empty() {
            return;
        }
        let plan = if inverse { &self.inv } else { &self.fwd };
        let mut scratch = vec![C64::new(0.0, 0.0); self.scratch_len];
        plan.process_with_scratch(rows, &mut scratch);
    }

    /// Row transforms restricted to the band `|k| <= half`, i.e. rows
    /// `0..=half` and `m-half..m`.
    fn band_rows(&self, buf: &mut [C64], half: usize, inverse: bool) {
        let m = self.n;
        let lo = (half + 1).min(m);
        let hi_start = (m - half).max(lo);
        let (head, tail) = buf.split_at_mut(lo * m);
        self.rows(head, inverse);
        self.rows(&mut tail[(hi_start - lo) * m..], inverse);
    }

    fn forward(&self, buf: &mut [C64]) {
        self.run(buf, &self.fwd);
    }

    fn inverse(&self, buf: &mut [C64]) {
        self.run(buf, &self.inv);
    }
}

/// In-place square transpose, tiled for cache locality.
fn transpose(buf: &mut [C64], n: usize) {
    const TILE: usize = 16;
    for r0 in (0..n).step_by(TILE) {
        for c0 in (r0..n).step_by(TILE) {
            for r in r0..(r0 + TILE).min(n) {
                let start = if c0 == r0 { r + 1 } else { c0 };
                for c in start..(c0 + TILE).min(n) {
                    buf.swap(r * n + c, c * n + r);
                }
            }
        }
    }
}

/// FFT workspace for one native resolution. Immutable and shareable.
pub struct Spectral {
    n: usize,
    native: Fft2,
    quad: Fft2,
    cubic: Fft2,
}

impl Spectral {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            native: Fft2::new(&mut planner, n, n),
            quad: Fft2::new(&mut planner, 3 * n / 2, n),
            cubic: Fft2::new(&mut planner, 2 * n, n),
        }
    }

    /// Shared, cached workspace for resolution `n`.
    pub fn for_size(n: usize) -> Arc<Spectral> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Spectral>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("fft cache poisoned");
        guard
            .entry(n)
            .or_insert_with(|| Arc::new(Spectral::new(n)))
            .clone()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Side of the grid used for quadratic products.
    pub fn quad_size(&self) -> usize {
        3 * self.n / 2
    }

    /// Side of the grid used for cubic products.
    pub fn cubic_size(&self) -> usize {
        2 * self.n
    }

    fn plan(&self, m: usize) -> &Fft2 {
        if m == self.n {
            &self.native
        } else if m == self.quad.n {
            &self.quad
        } else if m == self.cubic.n {
            &self.cubic
        } else {
            panic!("no FFT plan for size {m} in workspace of size {}", self.n)
        }
    }

    /// Normalized coefficients of a real field sampled on an `m`-grid.
    pub fn forward_m(&self, f: &[f64], m: usize) -> Vec<C64> {
        let mut buf: Vec<C64> = f.iter().map(|&x| C64::new(x, 0.0)).collect();
        self.plan(m).forward(&mut buf);
        let scale = 1.0 / (m * m) as f64;
        buf.iter_mut().for_each(|c| *c *= scale);
        buf
    }

    /// Real samples on an `m`-grid from Hermitian coefficients.
    pub fn inverse_m(&self, c: &[C64], m: usize) -> Vec<f64> {
        let mut buf = c.to_vec();
        self.plan(m).inverse(&mut buf);
        buf.into_iter().map(|z| z.re).collect()
    }

    pub fn forward(&self, f: &[f64]) -> Vec<C64> {
        self.forward_m(f, self.n)
    }

    pub fn inverse(&self, c: &[C64]) -> Vec<f64> {
        self.inverse_m(c, self.n)
    }

    /// Transforms two real fields with a single complex FFT.
    pub fn forward_pair_m(&self, a: &[f64], b: &[f64], m: usize) -> (Vec<C64>, Vec<C64>) {
        let mut z: Vec<C64> = a
            .iter()
            .zip(b)
            .map(|(&x, &y)| C64::new(x, y))
            .collect();
        self.plan(m).forward(&mut z);
        let scale = 0.5 / (m * m) as f64;
        let mut ah = vec![C64::new(0.0, 0.0); m * m];
        let mut bh = vec![C64::new(0.0, 0.0); m * m];
        for iy in 0..m {
            let jy = (m - iy) % m;
            for ix in 0..m {
                let jx = (m - ix) % m;
                let zk = z[iy * m + ix];
                let zc = z[jy * m + jx].conj();
                ah[iy * m + ix] = (zk + zc) * scale;
                // (zk - zc) / (2i)
                let d = (zk - zc) * scale;
                bh[iy * m + ix] = C64::new(d.im, -d.re);
            }
        }
        (ah, bh)
    }

    /// Inverse of two Hermitian spectra with a single complex FFT.
    pub fn inverse_pair_m(&self, ah: &[C64], bh: &[C64], m: usize) -> (Vec<f64>, Vec<f64>) {
        let mut z: Vec<C64> = ah
            .iter()
            .zip(bh)
            .map(|(&a, &b)| a + C64::new(-b.im, b.re))
            .collect();
        self.plan(m).inverse(&mut z);
        let a = z.iter().map(|c| c.re).collect();
        let b = z.iter().map(|c| c.im).collect();
        (a, b)
    }

    /// Zero-pads native coefficients onto an `m`-grid (`m >= n`). The Nyquist
    /// coefficient is split evenly between `+n/2` and `-n/2`, so the padded
    /// spectrum is the trigonometric interpolant of the native samples.
    pub fn pad(&self, c: &[C64], m: usize) -> Vec<C64> {
        if m == self.n {
            return c.to_vec();
        }
        let mut out = vec![C64::new(0.0, 0.0); m * m];
        for &(k, t, w) in &self.plan(m).pad_map {
            out[(t % m) * m + t / m] += c[k] * w;
        }
        out
    }

    /// `inverse_pair_m(pad(ah), pad(bh))` without the intermediate spectra.
    /// The `y` pass runs only over the `n` occupied `kx` rows.
    pub fn inverse_pair_padded(&self, ah: &[C64], bh: &[C64], m: usize) -> (Vec<f64>, Vec<f64>) {
        let plan = self.plan(m);
        let mut z = vec![C64::new(0.0, 0.0); m * m];
        for &(k, t, w) in &plan.pad_map {
            let (a, b) = (ah[k], bh[k]);
            z[t] += C64::new(a.re - b.im, a.im + b.re) * w;
        }
        plan.band_rows(&mut z, self.n / 2, true);
        transpose(&mut z, m);
        plan.rows(&mut z, true);
        (z.iter().map(|c| c.re).collect(), z.iter().map(|c| c.im).collect())
    }

    /// Forward transform leaving the result `kx`-major, with the `y` pass
    /// restricted to the native `kx` band.
    fn forward_band(&self, z: &mut [C64], m: usize) {
        let plan = self.plan(m);
        plan.rows(z, false);
        transpose(z, m);
        plan.band_rows(z, self.n / 2 - 1, false);
    }

    /// `truncate(forward_pair_m(a, b))` for both fields, unpacking only the
    /// native modes.
    pub fn forward_pair_truncated(&self, a: &[f64], b: &[f64], m: usize) -> (Vec<C64>, Vec<C64>) {
        let mut z: Vec<C64> = a.iter().zip(b).map(|(&x, &y)| C64::new(x, y)).collect();
        self.forward_band(&mut z, m);
        let scale = 0.5 / (m * m) as f64;
        let nn = self.n * self.n;
        let mut ah = vec![C64::new(0.0, 0.0); nn];
        let mut bh = vec![C64::new(0.0, 0.0); nn];
        for &(k, p, q) in &self.plan(m).keep_map {
            let zk = z[p];
            let zc = z[q].conj();
            ah[k] = (zk + zc) * scale;
            let d = (zk - zc) * scale;
            bh[k] = C64::new(d.im, -d.re);
        }
        (ah, bh)
    }

    /// `truncate(forward_m(a))`.
    pub fn forward_truncated(&self, a: &[f64], m: usize) -> Vec<C64> {
        let mut z: Vec<C64> = a.iter().map(|&x| C64::new(x, 0.0)).collect();
        self.forward_band(&mut z, m);
        let scale = 1.0 / (m * m) as f64;
        let mut out = vec![C64::new(0.0, 0.0); self.n * self.n];
        for &(k, p, _) in &self.plan(m).keep_map {
            out[k] = z[p] * scale;
        }
        out
    }

    /// Keeps the native modes of an `m`-grid spectrum, discarding everything
    /// else. Native Nyquist positions are set to zero.
    pub fn truncate(&self, cm: &[C64], m: usize) -> Vec<C64> {
        let n = self.n;
        let mut out = vec![C64::new(0.0, 0.0); n * n];
        for iy in 0..n {
            if is_nyquist(iy, n) {
                continue;
            }
            let ky = signed_index(iy, n);
            for ix in 0..n {
                if is_nyquist(ix, n) {
                    continue;
                }
                let kx = signed_index(ix, n);
                out[iy * n + ix] = cm[wrap(ky, m) * m + wrap(kx, m)];
            }
        }
        out
    }

    /// Samples of the trigonometric interpolant of native samples on an `m`-grid.
    pub fn upsample(&self, f: &[f64], m: usize) -> Vec<f64> {
        if m == self.n {
            return f.to_vec();
        }
        let c = self.forward(f);
        self.inverse_m(&self.pad(&c, m), m)
    }
}
