//! Time integration of the truth system and the nudged assimilation system.
//!
//! Semi-implicit Euler–Maruyama in spectral space: the deterministic drift
//! `P[-1/2 (xi.grad) xi + div(alpha E^2 + beta |E|^2 E - 1/2 xi (x) xi)] + h`
//! and the noise are explicit, viscosity is implicit per mode. The whole drift
//! is evaluated on the `2n` grid, which dealiases every product exactly and
//! yields `||E(xi)||_4^4` for the running quadrature at no extra cost.
//!
//! Nudging with Fourier-mode observations is implicit in the assimilated
//! field: on every retained mode `X_new = (X + dt (N + h) + Phi dW + kappa dt xi_new)
//! / (1 + nu |k|^2 dt + kappa dt)`, written as a correction of the un-nudged
//! predictor so that `kappa = 0` and `X = xi` reproduce the truth bit-exactly.
//! Volume-element nudging is explicit and guarded by `dt kappa <= 0.5`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fft::{Spectral, C64};
use crate::grid::{DomainSpec, VelocityField};
use crate::interpolant::{fourier_mask, volume_element, InterpolantKind, InterpolantSpec};
use crate::operators::{gradient_hats, project_hat, sample_padded, strain_on, FluidParams};
use crate::stochastic::{NoiseCoefficient, NoiseKind, NoiseModel, PathRng};

/// Advective CFL number above which a run is aborted.
pub const CFL_LIMIT: f64 = 0.5;

/// Largest `dt kappa` accepted for explicit nudging.
pub const EXPLICIT_NUDGING_LIMIT: f64 = 0.5;

/// Nudging gain and observation operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CdaParams {
    pub kappa: f64,
    pub interpolant: InterpolantSpec,
}

impl CdaParams {
    pub fn disabled(interpolant: InterpolantSpec) -> Self {
        Self {
            kappa: 0.0,
            interpolant,
        }
    }
}

/// Noise covariance together with the coefficient `Phi`.
#[derive(Debug, Clone)]
pub struct NoiseSetup {
    pub model: NoiseModel,
    pub coefficient: NoiseCoefficient,
}

/// Fully resolved run description.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub grid: DomainSpec,
    pub fluid: FluidParams,
    pub noise: Option<NoiseSetup>,
    /// Steady forcing; projected by [`RunConfig::new`].
    pub forcing: VelocityField,
    pub cda: CdaParams,
    pub dt: f64,
    pub t_final: f64,
    pub seed: u64,
    /// Record every this many steps (the final step is always recorded).
    pub output_every: usize,
    pub xi0: VelocityField,
    pub x0: VelocityField,
    /// Sobolev–Korn constant used for the pathwise envelope column.
    pub envelope_nd: Option<f64>,
    /// Times at which field snapshots are kept.
    pub snapshot_times: Vec<f64>,
}

impl RunConfig {
    /// Builds a validated configuration, projecting the forcing and both
    /// initial conditions onto mean-zero divergence-free fields.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: DomainSpec,
        fluid: FluidParams,
        noise: Option<NoiseSetup>,
        forcing: VelocityField,
        cda: CdaParams,
        dt: f64,
        t_final: f64,
        seed: u64,
        xi0: VelocityField,
        x0: VelocityField,
    ) -> Result<Self> {
        let cfg = Self {
            grid,
            fluid,
            noise,
            forcing: crate::operators::leray_project(&forcing),
            cda,
            dt,
            t_final,
            seed,
            output_every: 1,
            xi0: crate::operators::leray_project(&xi0),
            x0: crate::operators::leray_project(&x0),
            envelope_nd: None,
            snapshot_times: Vec::new(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(invalid("dt", "must be positive"));
        }
        if !(self.t_final >= self.dt) {
            return Err(invalid("t_final", "must be at least dt"));
        }
        let steps = self.t_final / self.dt;
        if (steps - steps.round()).abs() > 1e-6 * steps.max(1.0) {
            return Err(invalid("t_final", "must be an integer multiple of dt"));
        }
        if self.output_every == 0 {
            return Err(invalid("output_every", "must be at least 1"));
        }
        if !(self.cda.kappa >= 0.0) || !self.cda.kappa.is_finite() {
            return Err(invalid("cda.kappa", "must be non-negative"));
        }
        self.cda.interpolant.validate(&self.grid)?;
        if self.cda.interpolant.kind == InterpolantKind::VolumeElement {
            self.cda.interpolant.cells_per_axis(&self.grid)?;
            if self.dt * self.cda.kappa > EXPLICIT_NUDGING_LIMIT {
                return Err(invalid(
                    "cda.kappa",
                    format!(
                        "dt * kappa = {} exceeds {EXPLICIT_NUDGING_LIMIT} for explicit volume-element nudging",
                        self.dt * self.cda.kappa
                    ),
                ));
            }
        }
        for (key, f) in [("forcing", &self.forcing), ("initial.truth", &self.xi0), ("initial.assimilated", &self.x0)] {
            if f.domain() != &self.grid {
                return Err(invalid(key, "field lives on a different grid"));
            }
            if !f.is_finite() {
                return Err(invalid(key, "field is not finite"));
            }
        }
        if let Some(noise) = &self.noise {
            if noise.model.domain() != &self.grid {
                return Err(Error::NoiseMismatch("noise model lives on a different grid".into()));
            }
            noise.coefficient.validate()?;
        }
        if let Some(nd) = self.envelope_nd {
            if !(nd > 0.0) {
                return Err(invalid("constants.nd", "must be positive"));
            }
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    /// Whether the pathwise envelope applies (no state-dependent noise).
    pub fn is_additive(&self) -> bool {
        match &self.noise {
            None => true,
            Some(n) => n.coefficient.kind == NoiseKind::Additive,
        }
    }

    fn envelope_rate(&self) -> Option<f64> {
        let nd = self.envelope_nd?;
        if !self.is_additive() {
            return None;
        }
        let eps0 = self.fluid.epsilon0();
        let nu = self.fluid.nu();
        Some(27.0 * nd.powi(4) / (16.0 * self.grid.lambda1() * nu.powi(3) * eps0.powi(3)))
    }
}

/// Truth, assimilated field and the running `int ||E(xi)||_4^4`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinState {
    pub t: f64,
    pub truth: VelocityField,
    pub assimilated: VelocityField,
    pub accum: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub e_truth: f64,
    pub e_assim: f64,
    pub err_sq: f64,
    pub grad_sq: f64,
    pub strain_l4_4: f64,
    pub accum: f64,
    pub envelope: Option<f64>,
}

/// Output of a twin run. A numerical abort keeps the records produced so far.
#[derive(Debug)]
pub struct TwinRun {
    pub records: Vec<DiagnosticsRecord>,
    pub final_state: TwinState,
    pub snapshots: Vec<TwinState>,
    pub abort: Option<Error>,
}

impl TwinRun {
    pub fn into_result(self) -> Result<TwinRun> {
        match self.abort {
            Some(e) => Err(e),
            None => Ok(self),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub t: f64,
    pub e_truth: f64,
    pub grad_sq: f64,
    pub strain_l4_4: f64,
    pub accum: f64,
}

#[derive(Debug)]
pub struct TruthRun {
    pub records: Vec<TruthRecord>,
    pub final_truth: VelocityField,
    pub accum: f64,
    pub abort: Option<Error>,
}

type Hat = [Vec<C64>; 2];

struct Drift {
    hat: Hat,
    strain4: f64,
    max_speed: f64,
}

enum Nudging {
    Off,
    Fourier { gain: Vec<f64> },
    Volume { spec: InterpolantSpec, kappa: f64 },
}

/// Precomputed per-mode factors for one configuration.
struct Stepper<'a> {
    cfg: &'a RunConfig,
    d: DomainSpec,
    sp: Arc<Spectral>,
    divisor: Vec<f64>,
    forcing: Hat,
    nudging: Nudging,
}

impl<'a> Stepper<'a> {
    fn new(cfg: &'a RunConfig) -> Self {
        let d = cfg.grid;
        let n = d.n();
        let nu_dt = cfg.fluid.nu() * cfg.dt;
        let mut divisor = vec![1.0; n * n];
        let mut k2 = vec![0.0; n * n];
        for iy in 0..n {
            let ky = d.diff_wavenumber(iy);
            for ix in 0..n {
                let kx = d.diff_wavenumber(ix);
                k2[iy * n + ix] = kx * kx + ky * ky;
                divisor[iy * n + ix] = 1.0 + nu_dt * (kx * kx + ky * ky);
            }
        }
        let mut forcing = cfg.forcing.spectral();
        project_hat(&d, &mut forcing);
        let kappa = cfg.cda.kappa;
        let nudging = if kappa == 0.0 {
            Nudging::Off
        } else {
            match cfg.cda.interpolant.kind {
                InterpolantKind::FourierModes => {
                    let mask = fourier_mask(&d, &cfg.cda.interpolant);
                    let kdt = kappa * cfg.dt;
                    let gain = mask
                        .iter()
                        .zip(&divisor)
                        .map(|(&keep, &div)| if keep { kdt / (div + kdt) } else { 0.0 })
                        .collect();
                    Nudging::Fourier { gain }
                }
                InterpolantKind::VolumeElement => Nudging::Volume {
                    spec: cfg.cda.interpolant,
                    kappa,
                },
            }
        };
        Self {
            cfg,
            d,
            sp: d.spectral(),
            divisor,
            forcing,
            nudging,
        }
    }

    fn drift(&self, hat: &Hat) -> Drift {
        let d = &self.d;
        let m = 2 * d.n();
        let alpha = self.cfg.fluid.alpha();
        let beta = self.cfg.fluid.beta();
        let g = gradient_hats(d, hat);
        let s = sample_padded(d, &[&hat[0], &hat[1], &g[0], &g[1], &g[2], &g[3]], m);
        let (u, v, ux, uy, vx, vy) = (&s[0], &s[1], &s[2], &s[3], &s[4], &s[5]);
        let mm = m * m;
        let mut ax = vec![0.0; mm];
        let mut ay = vec![0.0; mm];
        let mut s11 = vec![0.0; mm];
        let mut s12 = vec![0.0; mm];
        let mut s22 = vec![0.0; mm];
        let mut strain4 = 0.0;
        let mut speed2: f64 = 0.0;
        for k in 0..mm {
            let (uu, vv) = (u[k], v[k]);
            let e11 = 2.0 * ux[k];
            let e22 = 2.0 * vy[k];
            let e12 = uy[k] + vx[k];
            let mag = e11 * e11 + 2.0 * e12 * e12 + e22 * e22;
            strain4 += mag * mag;
            speed2 = speed2.max(uu * uu + vv * vv);
            ax[k] = -0.5 * (uu * ux[k] + vv * uy[k]);
            ay[k] = -0.5 * (uu * vx[k] + vv * vy[k]);
            s11[k] = alpha * (e11 * e11 + e12 * e12) + beta * mag * e11 - 0.5 * uu * uu;
            s12[k] = alpha * e12 * (e11 + e22) + beta * mag * e12 - 0.5 * uu * vv;
            s22[k] = alpha * (e12 * e12 + e22 * e22) + beta * mag * e22 - 0.5 * vv * vv;
        }
        let (tx, ty) = self.sp.forward_pair_truncated(&ax, &ay, m);
        let mut out = crate::operators::symmetric_divergence_hat(d, &s11, &s12, &s22, m);
        for k in 0..out[0].len() {
            out[0][k] += tx[k];
            out[1][k] += ty[k];
        }
        project_hat(d, &mut out);
        Drift {
            hat: out,
            strain4: strain4 * d.area() / mm as f64,
            max_speed: speed2.sqrt(),
        }
    }

    fn noise_hat(&self, hat: &Hat, w: Option<&[f64]>) -> Option<Hat> {
        let noise = self.cfg.noise.as_ref()?;
        let w = w?;
        let gains = match noise.coefficient.kind {
            NoiseKind::Additive => vec![noise.coefficient.sigma0; w.len()],
            NoiseKind::DiagonalMultiplicative => noise
                .coefficient
                .gains(&noise.model.project_coefficients(hat)),
        };
        Some(noise.model.synthesize_hat(|j| gains[j] * w[j]))
    }

    /// Un-nudged semi-implicit step; returns the new spectrum and the
    /// left-endpoint `||E||_4^4`.
    fn predict(&self, hat: &Hat, w: Option<&[f64]>, extra: Option<&Hat>, step: usize) -> Result<(Hat, f64)> {
        let dr = self.drift(hat);
        let dt = self.cfg.dt;
        let t = step as f64 * dt;
        let cfl = dr.max_speed * dt / self.d.spacing();
        if !cfl.is_finite() {
            return Err(Error::NumericalAbort {
                step,
                time: t,
                reason: "non-finite velocity".into(),
            });
        }
        if cfl > CFL_LIMIT {
            return Err(Error::NumericalAbort {
                step,
                time: t,
                reason: format!("advective CFL number {cfl:.3} exceeds {CFL_LIMIT}"),
            });
        }
        let noise = self.noise_hat(hat, w);
        let mut out = dr.hat;
        for c in 0..2 {
            for k in 0..out[c].len() {
                let mut rhs = hat[c][k] + (out[c][k] + self.forcing[c][k]) * dt;
                if let Some(nz) = &noise {
                    rhs += nz[c][k];
                }
                if let Some(e) = extra {
                    rhs += e[c][k];
                }
                out[c][k] = rhs / self.divisor[k];
            }
        }
        project_hat(&self.d, &mut out);
        if out.iter().flatten().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NumericalAbort {
                step: step + 1,
                time: t + dt,
                reason: "non-finite spectral coefficients".into(),
            });
        }
        Ok((out, dr.strain4))
    }

    fn step_truth(&self, hat: &Hat, w: Option<&[f64]>, step: usize) -> Result<(Hat, f64)> {
        self.predict(hat, w, None, step)
    }

    fn step_assim(&self, x: &Hat, xi: &Hat, xi_next: &Hat, w: Option<&[f64]>, step: usize) -> Result<Hat> {
        match &self.nudging {
            Nudging::Off => Ok(self.predict(x, w, None, step)?.0),
            Nudging::Volume { spec, kappa } => {
                let diff: Hat = [
                    x[0].iter().zip(&xi[0]).map(|(a, b)| a - b).collect(),
                    x[1].iter().zip(&xi[1]).map(|(a, b)| a - b).collect(),
                ];
                let field = VelocityField::from_spectral(self.d, &diff);
                let obs = volume_element(&field, spec)?;
                let mut term = obs.spectral();
                project_hat(&self.d, &mut term);
                let scale = -kappa * self.cfg.dt;
                term.iter_mut().flatten().for_each(|z| *z *= scale);
                Ok(self.predict(x, w, Some(&term), step)?.0)
            }
            Nudging::Fourier { gain } => {
                let (mut pred, _) = self.predict(x, w, None, step)?;
                for c in 0..2 {
                    for k in 0..pred[c].len() {
                        if gain[k] != 0.0 {
                            let p = pred[c][k];
                            pred[c][k] = p - (p - xi_next[c][k]) * gain[k];
                        }
                    }
                }
                Ok(pred)
            }
        }
    }

    fn energy(&self, hat: &Hat) -> f64 {
        hat.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>() * self.d.area()
    }

    fn grad_sq(&self, hat: &Hat) -> f64 {
        let n = self.d.n();
        let mut s = 0.0;
        for iy in 0..n {
            let ky = self.d.diff_wavenumber(iy);
            for ix in 0..n {
                let kx = self.d.diff_wavenumber(ix);
                let k = iy * n + ix;
                s += (kx * kx + ky * ky) * (hat[0][k].norm_sqr() + hat[1][k].norm_sqr());
            }
        }
        s * self.d.area()
    }

    fn strain4(&self, hat: &Hat) -> f64 {
        let m = 2 * self.d.n();
        let [e11, e12, e22] = strain_on(&self.d, hat, m);
        let s: f64 = (0..m * m)
            .map(|k| {
                let mag = e11[k] * e11[k] + 2.0 * e12[k] * e12[k] + e22[k] * e22[k];
                mag * mag
            })
            .sum();
        s * self.d.area() / (m * m) as f64
    }

    fn initial_hat(&self, f: &VelocityField) -> Hat {
        let mut h = f.spectral();
        project_hat(&self.d, &mut h);
        h
    }
}

fn is_recorded(step: usize, total: usize, every: usize) -> bool {
    step % every == 0 || step == total
}

fn is_snapshot(cfg: &RunConfig, step: usize) -> bool {
    cfg.snapshot_times
        .iter()
        .any(|&ts| (ts / cfg.dt).round() as usize == step)
}

fn draw(cfg: &RunConfig, rng: &mut PathRng) -> Option<Vec<f64>> {
    cfg.noise
        .as_ref()
        .map(|n| n.model.sample_coefficients(cfg.dt, rng))
}

fn noise_weights(cfg: &RunConfig, dw: &VelocityField) -> Result<Option<Vec<f64>>> {
    match &cfg.noise {
        None => Ok(None),
        Some(n) => Ok(Some(n.model.coefficients_of(dw)?)),
    }
}

fn check_grid(cfg: &RunConfig, f: &VelocityField) -> Result<()> {
    if f.domain() != &cfg.grid {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

/// One step of the truth system driven by the increment `dw`.
pub fn step_truth(state: &VelocityField, cfg: &RunConfig, dw: &VelocityField) -> Result<VelocityField> {
    check_grid(cfg, state)?;
    let st = Stepper::new(cfg);
    let w = noise_weights(cfg, dw)?;
    let (hat, _) = st.step_truth(&st.initial_hat(state), w.as_deref(), 0)?;
    Ok(VelocityField::from_spectral(cfg.grid, &hat))
}

/// One step of the assimilation system. Observations are taken from the
/// truth at both ends of the step: `truth` for explicit nudging and
/// `truth_next` for the implicit Fourier-mode solve.
pub fn step_assimilated(
    state: &VelocityField,
    truth: &VelocityField,
    truth_next: &VelocityField,
    cfg: &RunConfig,
    dw: &VelocityField,
) -> Result<VelocityField> {
    for f in [state, truth, truth_next] {
        check_grid(cfg, f)?;
    }
    let st = Stepper::new(cfg);
    let w = noise_weights(cfg, dw)?;
    let hat = st.step_assim(
        &st.initial_hat(state),
        &st.initial_hat(truth),
        &st.initial_hat(truth_next),
        w.as_deref(),
        0,
    )?;
    Ok(VelocityField::from_spectral(cfg.grid, &hat))
}

/// Integrates the truth system alone with the stream of path 0.
pub fn run_truth(cfg: &RunConfig) -> Result<TruthRun> {
    run_truth_path(cfg, 0)
}

pub fn run_truth_path(cfg: &RunConfig, path: u64) -> Result<TruthRun> {
    cfg.validate()?;
    let st = Stepper::new(cfg);
    let mut rng = PathRng::new(cfg.seed, path);
    let total = cfg.n_steps();
    let mut xi = st.initial_hat(&cfg.xi0);
    let mut accum = 0.0;
    let mut records = Vec::new();
    let record = |xi: &Hat, step: usize, accum: f64| TruthRecord {
        t: step as f64 * cfg.dt,
        e_truth: st.energy(xi),
        grad_sq: st.grad_sq(xi),
        strain_l4_4: st.strain4(xi),
        accum,
    };
    records.push(record(&xi, 0, accum));
    for step in 0..total {
        let w = draw(cfg, &mut rng);
        match st.step_truth(&xi, w.as_deref(), step) {
            Ok((next, e4)) => {
                xi = next;
                accum += e4 * cfg.dt;
            }
            Err(e) => {
                return Ok(TruthRun {
                    records,
                    final_truth: VelocityField::from_spectral(cfg.grid, &xi),
                    accum,
                    abort: Some(e),
                })
            }
        }
        if is_recorded(step + 1, total, cfg.output_every) {
            records.push(record(&xi, step + 1, accum));
        }
    }
    Ok(TruthRun {
        records,
        final_truth: VelocityField::from_spectral(cfg.grid, &xi),
        accum,
        abort: None,
    })
}

/// Integrates truth and assimilation systems on one shared Wiener path.
pub fn run_twin(cfg: &RunConfig) -> Result<TwinRun> {
    run_twin_path(cfg, 0)
}

/// As [`run_twin`] with the random stream of Monte-Carlo path `path`.
pub fn run_twin_path(cfg: &RunConfig, path: u64) -> Result<TwinRun> {
    cfg.validate()?;
    let st = Stepper::new(cfg);
    let mut rng = PathRng::new(cfg.seed, path);
    let total = cfg.n_steps();
    let rate = cfg.envelope_rate();
    let mut xi = st.initial_hat(&cfg.xi0);
    let mut x = st.initial_hat(&cfg.x0);
    let diff_energy = |a: &Hat, b: &Hat| -> f64 {
        (0..2)
            .map(|c| a[c].iter().zip(&b[c]).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>())
            .sum::<f64>()
            * cfg.grid.area()
    };
    let err0 = diff_energy(&x, &xi);
    let kappa = cfg.cda.kappa;
    let record = |xi: &Hat, x: &Hat, step: usize, accum: f64| {
        let t = step as f64 * cfg.dt;
        DiagnosticsRecord {
            t,
            e_truth: st.energy(xi),
            e_assim: st.energy(x),
            err_sq: diff_energy(x, xi),
            grad_sq: st.grad_sq(xi),
            strain_l4_4: st.strain4(xi),
            accum,
            envelope: rate.map(|r| {
                let v = err0 * (-kappa * t + r * accum).exp();
                if v.is_finite() {
                    v
                } else {
                    f64::MAX
                }
            }),
        }
    };
    let state = |xi: &Hat, x: &Hat, step: usize, accum: f64| TwinState {
        t: step as f64 * cfg.dt,
        truth: VelocityField::from_spectral(cfg.grid, xi),
        assimilated: VelocityField::from_spectral(cfg.grid, x),
        accum,
    };
    let mut accum = 0.0;
    let mut records = vec![record(&xi, &x, 0, accum)];
    let mut snapshots = Vec::new();
    if is_snapshot(cfg, 0) {
        snapshots.push(state(&xi, &x, 0, accum));
    }
    for step in 0..total {
        let w = draw(cfg, &mut rng);
        let result = st
            .step_truth(&xi, w.as_deref(), step)
            .and_then(|(xi_next, e4)| {
                let x_next = st.step_assim(&x, &xi, &xi_next, w.as_deref(), step)?;
                Ok((xi_next, x_next, e4))
            });
        match result {
            Ok((xi_next, x_next, e4)) => {
                xi = xi_next;
                x = x_next;
                accum += e4 * cfg.dt;
            }
            Err(e) => {
                return Ok(TwinRun {
                    records,
                    final_state: state(&xi, &x, step, accum),
                    snapshots,
                    abort: Some(e),
                })
            }
        }
        if is_recorded(step + 1, total, cfg.output_every) {
            records.push(record(&xi, &x, step + 1, accum));
        }
        if is_snapshot(cfg, step + 1) {
            snapshots.push(state(&xi, &x, step + 1, accum));
        }
    }
    Ok(TwinRun {
        records,
        final_state: state(&xi, &x, total, accum),
        snapshots,
        abort: None,
    })
}

/// Outcome of one Monte-Carlo path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathOutcome {
    pub path: u64,
    pub records: Vec<DiagnosticsRecord>,
    pub excluded: bool,
    pub reason: Option<String>,
}

/// Ensemble statistics per record time over the retained paths.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub times: Vec<f64>,
    pub mean_err_sq: Vec<f64>,
    pub se_err_sq: Vec<f64>,
    /// `E ||xi(t)||_2^4`.
    pub mean_truth_4: Vec<f64>,
    pub se_truth_4: Vec<f64>,
    pub paths: Vec<PathOutcome>,
    pub retained: usize,
    pub excluded: usize,
    /// Set when fewer than two paths are retained (standard errors are zero).
    pub zero_width_bands: bool,
}

/// Worker count: `TGF_CDA_THREADS` if set, otherwise the rayon default.
pub fn worker_threads() -> usize {
    std::env::var("TGF_CDA_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(rayon::current_num_threads)
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs `n_paths` independent twin paths (stream `p` for path `p`) in
/// parallel and aggregates them in path order.
pub fn run_monte_carlo(cfg: &RunConfig, n_paths: usize) -> Result<MonteCarloSummary> {
    if n_paths == 0 {
        return Err(invalid("paths", "must be at least 1"));
    }
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_threads())
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let runs: Vec<Result<TwinRun>> =
        pool.install(|| (0..n_paths as u64).into_par_iter().map(|p| run_twin_path(cfg, p)).collect());
    let mut paths = Vec::with_capacity(n_paths);
    for (p, run) in runs.into_iter().enumerate() {
        let run = run?;
        paths.push(PathOutcome {
            path: p as u64,
            excluded: run.abort.is_some(),
            reason: run.abort.map(|e| e.to_string()),
            records: run.records,
        });
    }
    let excluded = paths.iter().filter(|p| p.excluded).count();
    if excluded * 10 > n_paths {
        return Err(Error::TooManyExclusions {
            excluded,
            total: n_paths,
        });
    }
    let kept: Vec<&PathOutcome> = paths.iter().filter(|p| !p.excluded).collect();
    let times: Vec<f64> = kept[0].records.iter().map(|r| r.t).collect();
    let mut summary = MonteCarloSummary {
        times: times.clone(),
        mean_err_sq: Vec::with_capacity(times.len()),
        se_err_sq: Vec::with_capacity(times.len()),
        mean_truth_4: Vec::with_capacity(times.len()),
        se_truth_4: Vec::with_capacity(times.len()),
        retained: kept.len(),
        excluded,
        zero_width_bands: kept.len() < 2,
        paths: Vec::new(),
    };
    for i in 0..times.len() {
        let err: Vec<f64> = kept.iter().map(|p| p.records[i].err_sq).collect();
        let e4: Vec<f64> = kept.iter().map(|p| p.records[i].e_truth.powi(2)).collect();
        let (m, s) = mean_se(&err);
        summary.mean_err_sq.push(m);
        summary.se_err_sq.push(s);
        let (m, s) = mean_se(&e4);
        summary.mean_truth_4.push(m);
        summary.se_truth_4.push(s);
    }
    summary.paths = paths;
    Ok(summary)
}
