//! Operator identity suite: energy identities, skew-symmetry, stress
//! pairings and the monotonicity relations, evaluated on random
//! band-limited divergence-free fields.

use std::fmt::Write as _;

use rand::Rng;
use serde::Serialize;

use crate::grid::{h1_seminorm, inner, norm_l2, norm_lp, random_solenoidal, DomainSpec, VelocityField};
use crate::operators::{
    grade2_difference_bound, grade2_stress, grade3_difference_identity, grade3_stress, leray_project,
    stokes, strain, trilinear,
};
use crate::error::Result;
use crate::stochastic::PathRng;

/// Outcome of one identity over the whole ensemble.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub name: &'static str,
    /// How the residual is normalised.
    pub measure: &'static str,
    pub samples: usize,
    /// Largest normalised residual (for bounds: largest `lhs / rhs - 1`).
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl IdentityCheck {
    fn new(name: &'static str, measure: &'static str, tolerance: f64) -> Self {
        Self { name, measure, samples: 0, worst: 0.0, tolerance, passed: true }
    }

    fn record(&mut self, residual: f64) {
        self.samples += 1;
        if !(residual <= self.tolerance) {
            self.passed = false;
        }
        if residual.is_nan() || residual > self.worst {
            self.worst = residual;
        }
    }
}

fn sample_field(d: DomainSpec, rng: &mut PathRng) -> VelocityField {
    let k_max = rng.random_range(3.0..(d.n() as f64 / 3.0).max(4.0));
    let decay = rng.random_range(0.0..1.5);
    let amp = 10f64.powf(rng.random_range(-1.0..1.0));
    &random_solenoidal(d, k_max, decay, rng) * amp
}

/// Generic (not divergence-free) field with i.i.d. normal samples.
fn rough_field(d: DomainSpec, rng: &mut PathRng) -> Result<VelocityField> {
    let n = d.points();
    let u = (0..n).map(|_| rng.standard_normal()).collect();
    let v = (0..n).map(|_| rng.standard_normal()).collect();
    VelocityField::from_components(d, u, v)
}

/// Natural size of `b(xi, z, u)`: `||xi||_inf ||grad z||_2 ||u||_2`.
fn trilinear_scale(xi: &VelocityField, z: &VelocityField, u: &VelocityField) -> f64 {
    (xi.max_abs() * h1_seminorm(z) * norm_l2(u)).max(f64::MIN_POSITIVE)
}

/// Runs every identity over `samples` random fields on `grid`.
pub fn operator_suite(grid: &DomainSpec, samples: usize, seed: u64) -> Result<Vec<IdentityCheck>> {
    let d = *grid;
    let mut rng = PathRng::new(seed, 0);
    let mut stokes_c = IdentityCheck::new("stokes_duality", "|<xi,A xi> - ||grad xi||^2| / ||grad xi||^2", 1e-12);
    let mut skew = IdentityCheck::new("trilinear_vanishes", "|b(xi,z,z)| / (||xi||_inf ||grad z|| ||z||)", 1e-12);
    let mut anti = IdentityCheck::new(
        "trilinear_antisymmetry",
        "|b(xi,z,u) + b(xi,u,z)| / (||xi||_inf (||grad z|| ||u|| + ||grad u|| ||z||))",
        1e-12,
    );
    let mut k_pair = IdentityCheck::new("grade3_pairing", "|<xi,K> - 1/2 ||E||_4^4| / (1/2 ||E||_4^4)", 1e-10);
    let mut j_pair = IdentityCheck::new("grade2_pairing", "|<xi,J>| / (||E||_4^2 ||grad xi||)", 1e-10);
    let mut k_diff = IdentityCheck::new("grade3_difference_identity", "|lhs - rhs| / rhs", 1e-9);
    let mut j_diff = IdentityCheck::new("grade2_difference_bound", "max(0, lhs / rhs - 1)", 1e-9);
    let mut proj = IdentityCheck::new("leray_idempotent", "||P(Pu) - Pu|| / ||u||", 1e-13);
    let mut adj = IdentityCheck::new("leray_self_adjoint", "|<Pu,v> - <u,Pv>| / (||u|| ||v||)", 1e-13);

    for _ in 0..samples {
        let xi = sample_field(d, &mut rng);
        let z = sample_field(d, &mut rng);
        let u = sample_field(d, &mut rng);

        let g2 = h1_seminorm(&xi).powi(2);
        stokes_c.record((inner(&xi, &stokes(&xi))? - g2).abs() / g2);

        skew.record(trilinear(&xi, &z, &z)?.abs() / trilinear_scale(&xi, &z, &z));
        let scale = trilinear_scale(&xi, &z, &u) + trilinear_scale(&xi, &u, &z);
        anti.record((trilinear(&xi, &z, &u)? + trilinear(&xi, &u, &z)?).abs() / scale);

        let e4 = norm_lp(&strain(&xi), 4)?;
        let half = 0.5 * e4.powi(4);
        k_pair.record((inner(&xi, &grade3_stress(&xi))? - half).abs() / half);
        j_pair.record(inner(&xi, &grade2_stress(&xi))?.abs() / (e4 * e4 * h1_seminorm(&xi)));

        let beta = rng.random_range(0.1..2.0);
        let (lhs, rhs) = grade3_difference_identity(&xi, &z, beta)?;
        k_diff.record((lhs - rhs).abs() / rhs);
        let alpha = rng.random_range(-1.0..1.0);
        let (lhs, rhs) = grade2_difference_bound(&xi, &z, alpha)?;
        j_diff.record(if rhs > 0.0 { (lhs / rhs - 1.0).max(0.0) } else { lhs });

        let w = rough_field(d, &mut rng)?;
        let pw = leray_project(&w);
        proj.record(norm_l2(&(&leray_project(&pw) - &pw)) / norm_l2(&w));
        let r = rough_field(d, &mut rng)?;
        let pr = leray_project(&r);
        adj.record((inner(&pw, &r)? - inner(&w, &pr)?).abs() / (norm_l2(&w) * norm_l2(&r)));
    }
    Ok(vec![stokes_c, skew, anti, k_pair, j_pair, k_diff, j_diff, proj, adj])
}

/// Fixed-width pass/fail table.
pub fn render_table(checks: &[IdentityCheck]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<28} {:>8} {:>12} {:>10}  status", "identity", "samples", "worst", "tolerance");
    for c in checks {
        let _ = writeln!(
            s,
            "{:<28} {:>8} {:>12.3e} {:>10.0e}  {}",
            c.name,
            c.samples,
            c.worst,
            c.tolerance,
            if c.passed { "PASS" } else { "FAIL" }
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    #[test]
    fn suite_passes_on_small_grid() {
        let d = make_grid(16, 2.0 * std::f64::consts::PI).unwrap();
        let checks = operator_suite(&d, 10, 5).unwrap();
        assert_eq!(checks.len(), 9);
        for c in &checks {
            assert_eq!(c.samples, 10);
            assert!(c.passed, "{} worst {:e}", c.name, c.worst);
        }
        let table = render_table(&checks);
        assert_eq!(table.lines().count(), 10);
        assert!(!table.contains("FAIL"));
    }
}
