//! Theorem layer: drift constant `M`, admissible nudging windows, empirical
//! Sobolev–Korn constant, decay-rate fits and the pathwise envelope audit.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::{DiagnosticsRecord, RunConfig};
use crate::error::{invalid, Error, Result};
use crate::grid::{dual_norm, norm_lp, random_solenoidal, DomainSpec, VelocityField};
use crate::operators::{strain, FluidParams};
use crate::stochastic::{NoiseKind, PathRng};

/// Safety factor applied to the empirical `N_d` before it enters a window.
pub const ND_MARGIN: f64 = 1.25;

/// Floor substituted for non-positive values in log fits.
pub const LOG_FLOOR: f64 = 1e-300;

/// Fraction of envelope samples that must comply.
pub const ENVELOPE_COMPLIANCE: f64 = 0.99;

/// `M = K + (K~/lambda1 + 1)^2 |D| / (4 beta) + 27 alpha^4 |D| / (4 beta^3) + ||h||_{V*}^2`.
#[allow(non_snake_case)]
pub fn drift_bound_M(
    k: f64,
    k_tilde: f64,
    lambda1: f64,
    area: f64,
    alpha: f64,
    beta: f64,
    h_dual_norm: f64,
) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(invalid("beta", "must be positive"));
    }
    if !(lambda1 > 0.0) {
        return Err(invalid("lambda1", "must be positive"));
    }
    if !(area >= 0.0) {
        return Err(invalid("area", "must be non-negative"));
    }
    Ok(k + (k_tilde / lambda1 + 1.0).powi(2) * area / (4.0 * beta)
        + 27.0 * alpha.powi(4) * area / (4.0 * beta.powi(3))
        + h_dual_norm * h_dual_norm)
}

/// Bracket of the pathwise condition for state-independent noise:
/// `||Phi||_{L_G}^2 + (1/(4 beta) + 27 alpha^4 / (4 beta^3)) |D| + ||h||_{V*}^2`.
pub fn pathwise_bracket(phi_hs_sq: f64, alpha: f64, beta: f64, area: f64, h_dual_norm: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(invalid("beta", "must be positive"));
    }
    Ok(phi_hs_sq
        + (1.0 / (4.0 * beta) + 27.0 * alpha.powi(4) / (4.0 * beta.powi(3))) * area
        + h_dual_norm * h_dual_norm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowInputs {
    pub nd: f64,
    /// `M` for the mean-square window, the pathwise bracket otherwise.
    pub m: f64,
    pub beta: f64,
    pub lambda1: f64,
    pub nu: f64,
    pub epsilon0: f64,
    /// Lipschitz constant of the noise coefficient (zero for additive noise).
    pub lipschitz: f64,
    pub c0: f64,
    pub varpi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaWindow {
    pub kappa_min: f64,
    pub kappa_max: f64,
    pub nonempty: bool,
}

impl KappaWindow {
    /// `kappa_min < kappa <= kappa_max`.
    pub fn contains(&self, kappa: f64) -> bool {
        self.kappa_min < kappa && kappa <= self.kappa_max
    }
}

/// `27 N_d^4 M / (4 beta lambda1 nu^3 eps0^3) + L < kappa <= nu eps0 / (c0 varpi^2)`.
pub fn kappa_window(w: &WindowInputs) -> Result<KappaWindow> {
    if !(w.epsilon0 > 0.0 && w.epsilon0 <= 1.0) {
        return Err(invalid("epsilon0", format!("{} lies outside (0, 1]", w.epsilon0)));
    }
    if !(w.varpi > 0.0) {
        return Err(invalid("varpi", "must be positive"));
    }
    if !(w.c0 > 0.0) {
        return Err(invalid("c0", "must be positive"));
    }
    for (key, v) in [("nd", w.nd), ("beta", w.beta), ("lambda1", w.lambda1), ("nu", w.nu)] {
        if !(v > 0.0) {
            return Err(invalid(key, "must be positive"));
        }
    }
    if !(w.m >= 0.0) || !(w.lipschitz >= 0.0) {
        return Err(invalid("M", "drift constant and Lipschitz constant must be non-negative"));
    }
    let kappa_min = 27.0 * w.nd.powi(4) * w.m
        / (4.0 * w.beta * w.lambda1 * w.nu.powi(3) * w.epsilon0.powi(3))
        + w.lipschitz;
    let kappa_max = w.nu * w.epsilon0 / w.c0 / w.varpi / w.varpi;
    Ok(KappaWindow {
        kappa_min,
        kappa_max,
        nonempty: kappa_min < kappa_max,
    })
}

/// `||u||_inf / ||E(u)||_4` with the sup taken over the `2n` interpolant grid.
pub fn nd_ratio(f: &VelocityField) -> Result<f64> {
    use crate::grid::PointwiseMagnitude;
    let m = 2 * f.domain().n();
    let sup = f
        .magnitude_sq_on(m)
        .iter()
        .fold(0.0_f64, |a, &b| a.max(b))
        .sqrt();
    let e4 = norm_lp(&strain(f), 4)?;
    if e4 == 0.0 {
        return Err(Error::DegenerateEnsemble("field has vanishing strain".into()));
    }
    Ok(sup / e4)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NdEstimate {
    /// Largest observed ratio (a lower bound on the true constant).
    pub nd_hat: f64,
    /// `nd_hat` times the safety margin.
    pub nd_used: f64,
    pub margin: f64,
    pub iterations: usize,
}

/// Maximizes `||u||_inf / ||E(u)||_4` over random smooth divergence-free
/// fields, alternating fresh draws with perturbations of the incumbent.
/// The candidate sequence depends only on the stream, so more iterations
/// never lower the estimate.
pub fn estimate_nd(grid: &DomainSpec, iterations: usize, rng: &mut PathRng) -> Result<NdEstimate> {
    if iterations < 100 {
        return Err(Error::InsufficientData(format!(
            "N_d estimation needs at least 100 iterations, got {iterations}"
        )));
    }
    let top = (grid.n() / 4).max(2) as f64;
    let mut best: Option<(f64, VelocityField)> = None;
    for i in 0..iterations {
        let u: f64 = rand::Rng::random(rng);
        let w: f64 = rand::Rng::random(rng);
        let k_max = 1.0 + u * (top - 1.0);
        let decay = 0.5 + 2.5 * w;
        let fresh = random_solenoidal(*grid, k_max, decay, rng);
        let candidate = match (&best, i % 2) {
            (Some((_, inc)), 1) => {
                let step: f64 = 0.05 + 0.3 * rand::Rng::random::<f64>(rng);
                inc + &(&fresh * step)
            }
            _ => fresh,
        };
        let r = match nd_ratio(&candidate) {
            Ok(r) => r,
            Err(Error::DegenerateEnsemble(_)) => continue,
            Err(e) => return Err(e),
        };
        if best.as_ref().map_or(true, |(b, _)| r > *b) {
            best = Some((r, candidate));
        }
    }
    let nd_hat = best
        .map(|(r, _)| r)
        .ok_or_else(|| Error::DegenerateEnsemble("no admissible field".into()))?;
    Ok(NdEstimate {
        nd_hat,
        nd_used: nd_hat * ND_MARGIN,
        margin: ND_MARGIN,
        iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    pub t_range: [f64; 2],
    pub r_squared: f64,
    pub points: usize,
    /// Number of values clamped to [`LOG_FLOOR`].
    pub clamped: usize,
}

/// Least-squares line `y = slope t + intercept`; returns `(slope, intercept, R^2)`.
pub fn fit_linear(t: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if t.len() != y.len() || t.len() < 2 {
        return Err(Error::InsufficientData("a line fit needs at least two points".into()));
    }
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let stt: f64 = t.iter().map(|a| (a - tm).powi(2)).sum();
    if stt == 0.0 {
        return Err(Error::InsufficientData("all abscissae coincide".into()));
    }
    let sty: f64 = t.iter().zip(y).map(|(a, b)| (a - tm) * (b - ym)).sum();
    let slope = sty / stt;
    let intercept = ym - slope * tm;
    let syy: f64 = y.iter().map(|b| (b - ym).powi(2)).sum();
    let sse: f64 = t
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    Ok((slope, intercept, r2))
}

/// Log-linear fit over the points with `t >= burn_in`.
pub fn fit_decay_rate(series: &[(f64, f64)], burn_in: f64) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = series.iter().copied().filter(|(t, _)| *t >= burn_in).collect();
    if pts.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "decay fit needs at least 10 points after burn-in, got {}",
            pts.len()
        )));
    }
    let mut clamped = 0;
    let t: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pts
        .iter()
        .map(|&(_, v)| {
            if v > LOG_FLOOR {
                v.ln()
            } else {
                clamped += 1;
                LOG_FLOOR.ln()
            }
        })
        .collect();
    let (slope, intercept, r_squared) = fit_linear(&t, &y)?;
    Ok(DecayFit {
        slope,
        intercept,
        t_range: [t[0], t[t.len() - 1]],
        r_squared,
        points: t.len(),
        clamped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Analytic,
    Estimated,
    Override,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceNote {
    pub source: Provenance,
    pub note: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    /// Mean-square window with the drift constant `M` and Lipschitz shift `L`.
    MeanSquare,
    /// Pathwise window with the additive-noise bracket.
    Pathwise,
}

/// Constants entering the theorem windows, each with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsLedger {
    pub lambda1: f64,
    pub area: f64,
    pub nu: f64,
    pub alpha: f64,
    pub beta: f64,
    pub epsilon0: f64,
    pub nd_hat: f64,
    pub nd_used: f64,
    pub c0_hat: f64,
    pub varpi: f64,
    pub noise_k: f64,
    pub noise_k_tilde: f64,
    pub lipschitz: f64,
    pub phi_hs_sq: f64,
    pub h_dual_norm: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub pathwise_bracket: f64,
    pub window_kind: WindowKind,
    pub kappa_min: f64,
    pub kappa_max: f64,
    pub window_nonempty: bool,
    /// Set when an estimated constant enters the verdict.
    pub advisory: bool,
    pub provenance: BTreeMap<String, ProvenanceNote>,
}

/// Source of an empirical constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConstantSource {
    Estimated(f64),
    Override(f64),
}

impl ConstantSource {
    fn value(&self) -> f64 {
        match *self {
            ConstantSource::Estimated(v) | ConstantSource::Override(v) => v,
        }
    }

    fn note(&self, what: &str) -> ProvenanceNote {
        match self {
            ConstantSource::Estimated(_) => ProvenanceNote {
                source: Provenance::Estimated,
                note: format!("{what}: empirical maximum over a random ensemble (lower bound)"),
            },
            ConstantSource::Override(_) => ProvenanceNote {
                source: Provenance::Override,
                note: format!("{what}: supplied by the configuration"),
            },
        }
    }
}

fn analytic(note: &str) -> ProvenanceNote {
    ProvenanceNote {
        source: Provenance::Analytic,
        note: note.to_string(),
    }
}

/// Assembles every constant for `cfg`. `nd` is the raw Sobolev–Korn
/// estimate; an estimated value is inflated by [`ND_MARGIN`], an override
/// is used as given. The window kind follows the noise: additive (or no)
/// noise uses the pathwise bracket, state-dependent noise the mean-square `M`.
/// `m_override` replaces whichever of the two enters the window.
pub fn build_ledger(
    cfg: &RunConfig,
    nd: ConstantSource,
    c0: ConstantSource,
    m_override: Option<f64>,
) -> Result<ConstantsLedger> {
    let d = cfg.grid;
    let fluid: FluidParams = cfg.fluid;
    let (k, kt, lip, phi_hs) = match &cfg.noise {
        None => (0.0, 0.0, 0.0, 0.0),
        Some(n) => {
            let c = &n.coefficient;
            let hs = match c.kind {
                NoiseKind::Additive => c.sigma0 * c.sigma0 * n.model.trace(),
                NoiseKind::DiagonalMultiplicative => f64::NAN,
            };
            (c.k_const(&n.model), c.k_tilde(&n.model), c.lipschitz(&n.model), hs)
        }
    };
    let h = dual_norm(&cfg.forcing)?;
    let m = drift_bound_M(k, kt, d.lambda1(), d.area(), fluid.alpha(), fluid.beta(), h)?;
    let additive = cfg.is_additive();
    let bracket = if additive {
        pathwise_bracket(phi_hs, fluid.alpha(), fluid.beta(), d.area(), h)?
    } else {
        f64::NAN
    };
    let nd_used = match nd {
        ConstantSource::Estimated(v) => v * ND_MARGIN,
        ConstantSource::Override(v) => v,
    };
    let (kind, m_used, lip_used) = if additive {
        (WindowKind::Pathwise, m_override.unwrap_or(bracket), 0.0)
    } else {
        (WindowKind::MeanSquare, m_override.unwrap_or(m), lip)
    };
    if let Some(v) = m_override {
        if !(v.is_finite() && v >= 0.0) {
            return Err(invalid("constants.M", "must be finite and non-negative"));
        }
    }
    let window = kappa_window(&WindowInputs {
        nd: nd_used,
        m: m_used,
        beta: fluid.beta(),
        lambda1: d.lambda1(),
        nu: fluid.nu(),
        epsilon0: fluid.epsilon0(),
        lipschitz: lip_used,
        c0: c0.value(),
        varpi: cfg.cda.interpolant.varpi,
    })?;
    let mut provenance = BTreeMap::new();
    provenance.insert("lambda1".into(), analytic("(2 pi / L)^2 on the torus"));
    provenance.insert("epsilon0".into(), analytic("1 - sqrt(alpha^2 / (2 beta nu))"));
    provenance.insert(
        "M".into(),
        match m_override {
            Some(_) => ProvenanceNote {
                source: Provenance::Override,
                note: "M: supplied by the configuration".into(),
            },
            None => analytic("closed form in K, K~, lambda1, |D|, alpha, beta, ||h||_V*"),
        },
    );
    provenance.insert("noise".into(), analytic("K = 2 sigma0^2 Tr G, K~ = L = 2 sigma1^2 mu_max"));
    let mut nd_note = nd.note("N_d");
    if let ConstantSource::Estimated(_) = nd {
        nd_note.note.push_str(&format!("; inflated by {ND_MARGIN}"));
    }
    provenance.insert("nd".into(), nd_note);
    provenance.insert("c0".into(), c0.note("c0"));
    Ok(ConstantsLedger {
        lambda1: d.lambda1(),
        area: d.area(),
        nu: fluid.nu(),
        alpha: fluid.alpha(),
        beta: fluid.beta(),
        epsilon0: fluid.epsilon0(),
        nd_hat: nd.value(),
        nd_used,
        c0_hat: c0.value(),
        varpi: cfg.cda.interpolant.varpi,
        noise_k: k,
        noise_k_tilde: kt,
        lipschitz: lip,
        phi_hs_sq: phi_hs,
        h_dual_norm: h,
        m: if additive { m } else { m_used },
        pathwise_bracket: if additive { m_used } else { bracket },
        window_kind: kind,
        kappa_min: window.kappa_min,
        kappa_max: window.kappa_max,
        window_nonempty: window.nonempty,
        advisory: matches!(nd, ConstantSource::Estimated(_)) || matches!(c0, ConstantSource::Estimated(_)),
        provenance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub samples: usize,
    pub violations: usize,
    pub compliance: f64,
    /// Largest `err_sq / envelope` observed.
    pub max_ratio: f64,
    pub passed: bool,
}

/// Compares each `||Upsilon(t)||^2` against
/// `||Upsilon(0)||^2 exp(-kappa t + 27 N_d^4 / (16 lambda1 nu^3 eps0^3) int ||E||_4^4)`.
pub fn envelope_audit(records: &[DiagnosticsRecord], kappa: f64, ledger: &ConstantsLedger) -> Result<EnvelopeReport> {
    let first = records
        .first()
        .ok_or_else(|| Error::InsufficientData("no records to audit".into()))?;
    if records.iter().any(|r| !r.accum.is_finite()) || first.accum != 0.0 {
        return Err(Error::InsufficientData("accumulator column missing or malformed".into()));
    }
    let rate = 27.0 * ledger.nd_used.powi(4)
        / (16.0 * ledger.lambda1 * ledger.nu.powi(3) * ledger.epsilon0.powi(3));
    let err0 = first.err_sq;
    let floor = 1e-24 * first.e_truth.max(1.0);
    let mut violations = 0;
    let mut max_ratio: f64 = 0.0;
    for r in records {
        let env = err0 * (-kappa * r.t + rate * r.accum).exp();
        let ok = r.err_sq <= env * (1.0 + 1e-12) + floor;
        if !ok {
            violations += 1;
        }
        if env > 0.0 {
            max_ratio = max_ratio.max(r.err_sq / env);
        } else if r.err_sq > floor {
            max_ratio = f64::INFINITY;
        }
    }
    let compliance = 1.0 - violations as f64 / records.len() as f64;
    Ok(EnvelopeReport {
        samples: records.len(),
        violations,
        compliance,
        max_ratio,
        passed: compliance >= ENVELOPE_COMPLIANCE,
    })
}
