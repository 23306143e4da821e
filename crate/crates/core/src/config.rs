//! JSON scenario files and their resolution into a [`RunConfig`].
//!
//! ```json
//! {
//!   "grid": { "n": 64, "length": 6.283185307179586 },
//!   "fluid": { "nu": 1.0, "alpha": 0.5, "beta": 1.0 },
//!   "noise": { "k_max": 4, "amplitude": 1.0, "decay": 1.5,
//!              "kind": "additive", "sigma0": 0.05 },
//!   "forcing": { "type": "steady" },
//!   "cda": { "kappa": 2.0, "interpolant": { "kind": "fourier_modes", "varpi": 0.5 } },
//!   "dt": 0.001, "t_final": 10.0, "seed": 1, "output_every": 100,
//!   "initial": {
//!     "truth": { "type": "random", "k_max": 2.5, "decay": 2.0, "norm": 1.0, "seed": 3 },
//!     "assimilated": { "type": "zero" }
//!   }
//! }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::{CdaParams, NoiseSetup, RunConfig};
use crate::error::{invalid, Error, Result};
use crate::grid::{make_grid, random_solenoidal, DomainSpec, VelocityField};
use crate::io::read_snapshot;
use crate::operators::{advect, grade2_stress, grade3_stress, stokes, FluidParams};
use crate::stochastic::{build_noise, NoiseCoefficient, NoiseKind, PathRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    pub length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub k_max: usize,
    pub amplitude: f64,
    pub decay: f64,
    pub kind: NoiseKind,
    pub sigma0: f64,
    #[serde(default)]
    pub sigma1: f64,
}

/// Named analytic initial conditions, or a snapshot file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldPreset {
    Zero,
    /// `(A sin(2 pi m y / L), 0)`.
    Shear { amplitude: f64, mode: u32 },
    /// `A (sin(q x) cos(q y), -cos(q x) sin(q y))` with `q = 2 pi m / L`.
    TaylorGreen { amplitude: f64, mode: u32 },
    /// Random band-limited divergence-free field with L2 norm `norm`.
    Random {
        k_max: f64,
        decay: f64,
        norm: f64,
        seed: u64,
    },
    Snapshot { path: PathBuf },
}

/// Steady forcing presets. `steady` makes the truth initial condition an
/// equilibrium of the deterministic dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingPreset {
    Zero,
    Shear { amplitude: f64, mode: u32 },
    Steady,
    Snapshot { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub truth: FieldPreset,
    pub assimilated: FieldPreset,
}

/// Replacements for estimated constants.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantOverrides {
    /// Sobolev–Korn constant, used as given (no safety margin).
    pub nd: Option<f64>,
    /// Interpolant constant.
    pub c0: Option<f64>,
    /// Drift constant (or pathwise bracket for additive noise).
    #[serde(rename = "M")]
    pub m: Option<f64>,
    #[serde(default = "default_nd_iterations")]
    pub nd_iterations: usize,
    #[serde(default = "default_c0_samples")]
    pub c0_samples: usize,
}

fn default_nd_iterations() -> usize {
    200
}

fn default_c0_samples() -> usize {
    100
}

fn default_dt() -> f64 {
    1e-3
}

fn default_output_every() -> usize {
    10
}

fn default_forcing() -> ForcingPreset {
    ForcingPreset::Zero
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub grid: GridSpec,
    pub fluid: FluidParams,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    #[serde(default = "default_forcing")]
    pub forcing: ForcingPreset,
    pub cda: CdaParams,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub t_final: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_every")]
    pub output_every: usize,
    pub initial: InitialSpec,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default)]
    pub constants: Option<ConstantOverrides>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn overrides(&self) -> ConstantOverrides {
        self.constants.unwrap_or(ConstantOverrides {
            nd_iterations: default_nd_iterations(),
            c0_samples: default_c0_samples(),
            ..Default::default()
        })
    }

    pub fn domain(&self) -> Result<DomainSpec> {
        make_grid(self.grid.n, self.grid.length)
    }

    /// Builds the run configuration; relative snapshot paths resolve
    /// against `base_dir`.
    pub fn resolve(&self, base_dir: &Path) -> Result<RunConfig> {
        let d = self.domain()?;
        let noise = match &self.noise {
            None => None,
            Some(ns) => {
                let model = build_noise(ns.k_max, ns.amplitude, ns.decay, &d)?;
                let coefficient = NoiseCoefficient {
                    kind: ns.kind,
                    sigma0: ns.sigma0,
                    sigma1: ns.sigma1,
                };
                coefficient.validate()?;
                Some(NoiseSetup { model, coefficient })
            }
        };
        let xi0 = field_from_preset(&self.initial.truth, d, base_dir, "initial.truth")?;
        let x0 = field_from_preset(&self.initial.assimilated, d, base_dir, "initial.assimilated")?;
        let forcing = match &self.forcing {
            ForcingPreset::Zero => VelocityField::zeros(d),
            ForcingPreset::Shear { amplitude, mode } => shear(d, *amplitude, *mode),
            ForcingPreset::Steady => steady_forcing(&xi0, &self.fluid)?,
            ForcingPreset::Snapshot { path } => load_field(&base_dir.join(path), d, "forcing.path")?,
        };
        let mut cfg = RunConfig::new(
            d,
            self.fluid,
            noise,
            forcing,
            self.cda,
            self.dt,
            self.t_final,
            self.seed,
            xi0,
            x0,
        )?;
        cfg.output_every = self.output_every;
        cfg.snapshot_times = self.snapshot_times.clone();
        cfg.validate()?;
        Ok(cfg)
    }
}

fn shear(d: DomainSpec, amplitude: f64, mode: u32) -> VelocityField {
    let q = 2.0 * std::f64::consts::PI * mode as f64 / d.length();
    VelocityField::from_fn(d, |_, y| (amplitude * (q * y).sin(), 0.0))
}

fn load_field(path: &Path, d: DomainSpec, key: &str) -> Result<VelocityField> {
    let f = read_snapshot(path)?;
    if f.domain() != &d {
        return Err(invalid(key, format!("{} was written on a different grid", path.display())));
    }
    Ok(f)
}

/// Evaluates an initial-condition preset on `d`.
pub fn field_from_preset(p: &FieldPreset, d: DomainSpec, base_dir: &Path, key: &str) -> Result<VelocityField> {
    let two_pi = 2.0 * std::f64::consts::PI;
    Ok(match p {
        FieldPreset::Zero => VelocityField::zeros(d),
        FieldPreset::Shear { amplitude, mode } => shear(d, *amplitude, *mode),
        FieldPreset::TaylorGreen { amplitude, mode } => {
            let q = two_pi * *mode as f64 / d.length();
            let a = *amplitude;
            VelocityField::from_fn(d, |x, y| {
                (a * (q * x).sin() * (q * y).cos(), -a * (q * x).cos() * (q * y).sin())
            })
        }
        FieldPreset::Random {
            k_max,
            decay,
            norm,
            seed,
        } => {
            if !(*k_max >= 1.0) {
                return Err(invalid(key, "random preset needs k_max >= 1"));
            }
            let mut rng = PathRng::new(*seed, u64::MAX);
            &random_solenoidal(d, *k_max, *decay, &mut rng) * *norm
        }
        FieldPreset::Snapshot { path } => load_field(&base_dir.join(path), d, key)?,
    })
}

/// Forcing under which `xi0` is a steady state:
/// `h = nu A xi0 + B(xi0, xi0) + alpha J(xi0) + beta K(xi0)`.
pub fn steady_forcing(xi0: &VelocityField, fluid: &FluidParams) -> Result<VelocityField> {
    let a = &stokes(xi0) * fluid.nu();
    let b = advect(xi0, xi0)?;
    let j = &grade2_stress(xi0) * fluid.alpha();
    let k = &grade3_stress(xi0) * fluid.beta();
    Ok(&(&(&a + &b) + &j) + &k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::step_truth;
    use crate::grid::norm_l2;

    const SAMPLE: &str = r#"{
        "grid": { "n": 16, "length": 6.283185307179586 },
        "fluid": { "nu": 1.0, "alpha": 0.5, "beta": 1.0 },
        "forcing": { "type": "steady" },
        "cda": { "kappa": 2.0, "interpolant": { "kind": "fourier_modes", "varpi": 0.5 } },
        "t_final": 0.01,
        "initial": {
            "truth": { "type": "random", "k_max": 3.0, "decay": 1.0, "norm": 0.5, "seed": 3 },
            "assimilated": { "type": "zero" }
        }
    }"#;

    #[test]
    fn parses_and_resolves() {
        let sc = ScenarioConfig::from_json(SAMPLE).unwrap();
        assert_eq!(sc.dt, 1e-3);
        let cfg = sc.resolve(Path::new(".")).unwrap();
        assert_eq!(cfg.n_steps(), 10);
        assert!((norm_l2(&cfg.xi0) - 0.5).abs() < 1e-12);
        // steady forcing makes the truth initial condition a fixed point
        let dw = VelocityField::zeros(cfg.grid);
        let next = step_truth(&cfg.xi0, &cfg, &dw).unwrap();
        assert!(norm_l2(&(&next - &cfg.xi0)) < 1e-12);
    }

    #[test]
    fn rejects_bad_documents() {
        let bad = SAMPLE.replace("\"alpha\": 0.5", "\"alpha\": 5.0");
        assert!(ScenarioConfig::from_json(&bad).is_err());
        let bad = SAMPLE.replace("\"t_final\"", "\"t_finale\"");
        let err = ScenarioConfig::from_json(&bad).unwrap_err().to_string();
        assert!(err.contains("t_final"));
        let bad = SAMPLE.replace("\"varpi\": 0.5", "\"varpi\": 10.0");
        let sc = ScenarioConfig::from_json(&bad).unwrap();
        assert!(sc.resolve(Path::new(".")).is_err());
    }
}
