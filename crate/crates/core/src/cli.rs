//! Batch command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error (and a failing
//! `verify-ops`), 2 nudging gain outside the admissible window
//! (`check-params`), 3 numerical abort.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::analysis::{
    build_ledger, envelope_audit, estimate_nd, fit_decay_rate, ConstantSource, ConstantsLedger, NdEstimate,
};
use crate::config::ScenarioConfig;
use crate::engine::{run_monte_carlo, run_truth, run_twin, RunConfig};
use crate::error::{Error, Result};
use crate::grid::{make_grid, VelocityField};
use crate::interpolant::{estimate_c0, C0Certificate};
use crate::io::{diagnostics_csv, monte_carlo_csv, paths_csv, slice_csv, truth_csv, write_snapshot, Manifest};
use crate::stochastic::PathRng;
use crate::verify::{operator_suite, render_table};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_WINDOW: i32 = 2;
pub const EXIT_ABORT: i32 = 3;

/// Random streams reserved for constant estimation.
const ND_STREAM: u64 = u64::MAX - 1;
const C0_STREAM: u64 = u64::MAX - 2;

/// Burn-in before fitting the synchronisation rate.
const FIT_BURN_IN: f64 = 1.0;

#[derive(Debug, Parser)]
#[command(name = "tgf-cda", version, about = "Nudging data assimilation for the 2D stochastic third-grade fluid")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate the truth system alone.
    Simulate(Common),
    /// Twin experiment: truth plus nudged copy on one noise path.
    Assimilate(Common),
    /// Monte-Carlo ensemble of twin experiments.
    Mc(McArgs),
    /// Report the admissible nudging window and test the configured gain.
    CheckParams(Common),
    /// Estimate the Sobolev–Korn and interpolant constants.
    EstimateConstants(Common),
    /// Run the operator identity suite.
    VerifyOps(VerifyArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default `tgf-cda-out`; `check-params` writes
    /// only when given).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Suppress progress output.
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Args)]
struct McArgs {
    #[command(flatten)]
    common: Common,
    /// Number of sample paths.
    #[arg(long, default_value_t = 16)]
    paths: usize,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Scenario file; only its grid is used (default 64 points on [0, 2 pi)).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Writes `verify_ops.json` here when given.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of random fields.
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long)]
    quiet: bool,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let outcome = match cli.command {
        Command::Simulate(c) => simulate(&c),
        Command::Assimilate(c) => assimilate(&c),
        Command::Mc(m) => monte_carlo(&m),
        Command::CheckParams(c) => check_params(&c),
        Command::EstimateConstants(c) => estimate_constants(&c),
        Command::VerifyOps(v) => verify_ops(&v),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NumericalAbort { .. } | Error::TooManyExclusions { .. } => EXIT_ABORT,
        _ => EXIT_USAGE,
    }
}

struct Scenario {
    doc: ScenarioConfig,
    cfg: RunConfig,
}

fn load(c: &Common) -> Result<Scenario> {
    let mut doc = ScenarioConfig::load(&c.config)?;
    if let Some(seed) = c.seed {
        doc.seed = seed;
    }
    let base = c.config.parent().unwrap_or(Path::new("."));
    let cfg = doc.resolve(base)?;
    Ok(Scenario { doc, cfg })
}

fn out_dir(c: &Common) -> PathBuf {
    c.out.clone().unwrap_or_else(|| PathBuf::from("tgf-cda-out"))
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Config(format!("--out {}: {e}", dir.display())))
}

fn manifest(command: &str, s: &Scenario) -> Result<Manifest> {
    Ok(Manifest::new(command, s.doc.seed, serde_json::to_value(&s.doc)?))
}

fn write_text(dir: &Path, name: &str, text: &str, m: &mut Manifest) -> Result<()> {
    fs::write(dir.join(name), text)?;
    m.output(name);
    Ok(())
}

fn write_field(dir: &Path, name: &str, f: &VelocityField, m: &mut Manifest) -> Result<()> {
    write_snapshot(&dir.join(name), f)?;
    m.output(name);
    Ok(())
}

fn nd_source(s: &Scenario) -> Result<(ConstantSource, Option<NdEstimate>)> {
    let o = s.doc.overrides();
    match o.nd {
        Some(v) => Ok((ConstantSource::Override(v), None)),
        None => {
            let mut rng = PathRng::new(s.doc.seed, ND_STREAM);
            let est = estimate_nd(&s.cfg.grid, o.nd_iterations, &mut rng)?;
            Ok((ConstantSource::Estimated(est.nd_hat), Some(est)))
        }
    }
}

fn c0_source(s: &Scenario) -> Result<(ConstantSource, Option<C0Certificate>)> {
    let o = s.doc.overrides();
    match o.c0 {
        Some(v) => Ok((ConstantSource::Override(v), None)),
        None => {
            let mut rng = PathRng::new(s.doc.seed, C0_STREAM);
            let cert = estimate_c0(&s.cfg.cda.interpolant, &s.cfg.grid, o.c0_samples, &mut rng)?;
            Ok((ConstantSource::Estimated(cert.c0_hat), Some(cert)))
        }
    }
}

fn ledger(s: &Scenario) -> Result<(ConstantsLedger, Option<NdEstimate>, Option<C0Certificate>)> {
    let (nd, nd_est) = nd_source(s)?;
    let (c0, cert) = c0_source(s)?;
    let l = build_ledger(&s.cfg, nd, c0, s.doc.overrides().m)?;
    Ok((l, nd_est, cert))
}

fn abort_code(abort: &Option<Error>, quiet: bool) -> i32 {
    match abort {
        None => EXIT_OK,
        Some(e) => {
            if !quiet {
                eprintln!("error: {e}");
            }
            exit_code(e)
        }
    }
}

fn simulate(c: &Common) -> Result<i32> {
    let s = load(c)?;
    let out = out_dir(c);
    prepare_out(&out)?;
    let mut m = manifest("simulate", &s)?;
    let run = run_truth(&s.cfg)?;
    write_text(&out, "truth.csv", &truth_csv(&run.records), &mut m)?;
    write_field(&out, "final_truth.bin", &run.final_truth, &mut m)?;
    write_text(&out, "final_truth_slice.csv", &slice_csv(&run.final_truth, 0)?, &mut m)?;
    m.result("steps", &s.cfg.n_steps())?;
    m.result("accum", &run.accum)?;
    m.result("aborted", &run.abort.as_ref().map(|e| e.to_string()))?;
    m.write(&out.join("manifest.json"))?;
    if !c.quiet {
        let last = run.records.last().map(|r| r.e_truth).unwrap_or(f64::NAN);
        println!("simulate: {} records, final ||xi||^2 = {last:.6e}", run.records.len());
    }
    Ok(abort_code(&run.abort, c.quiet))
}

fn assimilate(c: &Common) -> Result<i32> {
    let mut s = load(c)?;
    let out = out_dir(c);
    prepare_out(&out)?;
    let mut m = manifest("assimilate", &s)?;
    let constants = if s.cfg.is_additive() {
        let (l, nd_est, cert) = ledger(&s)?;
        s.cfg.envelope_nd = Some(l.nd_used);
        Some((l, nd_est, cert))
    } else {
        None
    };
    let run = run_twin(&s.cfg)?;
    write_text(&out, "diagnostics.csv", &diagnostics_csv(&run.records), &mut m)?;
    write_field(&out, "final_truth.bin", &run.final_state.truth, &mut m)?;
    write_field(&out, "final_assimilated.bin", &run.final_state.assimilated, &mut m)?;
    let err = &run.final_state.truth - &run.final_state.assimilated;
    write_text(&out, "final_error_slice.csv", &slice_csv(&err, 0)?, &mut m)?;
    for (i, snap) in run.snapshots.iter().enumerate() {
        write_field(&out, &format!("snapshot_{i:03}_truth.bin"), &snap.truth, &mut m)?;
        write_field(&out, &format!("snapshot_{i:03}_assimilated.bin"), &snap.assimilated, &mut m)?;
    }
    let series: Vec<(f64, f64)> = run.records.iter().map(|r| (r.t, r.err_sq)).collect();
    let fit = fit_decay_rate(&series, FIT_BURN_IN).ok();
    m.result("decay_fit", &fit)?;
    if let Some((l, nd_est, cert)) = &constants {
        let audit = envelope_audit(&run.records, s.cfg.cda.kappa, l)?;
        m.result("envelope_audit", &audit)?;
        m.result("constants", l)?;
        m.result("nd_estimate", nd_est)?;
        m.result("c0_certificate", cert)?;
    }
    m.result("aborted", &run.abort.as_ref().map(|e| e.to_string()))?;
    m.write(&out.join("manifest.json"))?;
    if !c.quiet {
        let (e0, e1) = match (run.records.first(), run.records.last()) {
            (Some(a), Some(b)) => (a.err_sq, b.err_sq),
            _ => (f64::NAN, f64::NAN),
        };
        println!("assimilate: ||err||^2 {e0:.6e} -> {e1:.6e}");
        if let Some(f) = fit {
            println!("fitted log-slope {:.4} (R^2 = {:.3})", f.slope, f.r_squared);
        }
    }
    Ok(abort_code(&run.abort, c.quiet))
}

fn monte_carlo(a: &McArgs) -> Result<i32> {
    let c = &a.common;
    let s = load(c)?;
    let out = out_dir(c);
    prepare_out(&out)?;
    let mut m = manifest("mc", &s)?;
    let summary = run_monte_carlo(&s.cfg, a.paths)?;
    write_text(&out, "mc_summary.csv", &monte_carlo_csv(&summary), &mut m)?;
    write_text(&out, "paths.csv", &paths_csv(&summary), &mut m)?;
    let series: Vec<(f64, f64)> = summary.times.iter().copied().zip(summary.mean_err_sq.iter().copied()).collect();
    let fit = fit_decay_rate(&series, FIT_BURN_IN).ok();
    m.result("paths", &a.paths)?;
    m.result("retained", &summary.retained)?;
    m.result("excluded", &summary.excluded)?;
    m.result("zero_width_bands", &summary.zero_width_bands)?;
    let reasons: Vec<Value> = summary
        .paths
        .iter()
        .filter(|p| p.excluded)
        .map(|p| json!({ "path": p.path, "reason": p.reason }))
        .collect();
    m.result("exclusions", &reasons)?;
    m.result("decay_fit", &fit)?;
    m.write(&out.join("manifest.json"))?;
    if !c.quiet {
        println!("mc: {} of {} paths retained", summary.retained, a.paths);
        if let Some(f) = fit {
            println!("fitted log-slope of the mean square {:.4} (R^2 = {:.3})", f.slope, f.r_squared);
        }
    }
    Ok(EXIT_OK)
}

fn check_params(c: &Common) -> Result<i32> {
    let s = load(c)?;
    let (l, _, _) = ledger(&s)?;
    let kappa = s.cfg.cda.kappa;
    let inside = l.window_nonempty && kappa > l.kappa_min && kappa <= l.kappa_max;
    if !c.quiet {
        println!("({}, {}]", l.kappa_min, l.kappa_max);
        let tag = if l.advisory { " (advisory: estimated constants)" } else { "" };
        let verdict = match (l.window_nonempty, inside) {
            (false, _) => "window empty".to_string(),
            (true, true) => format!("kappa = {kappa} inside"),
            (true, false) => format!("kappa = {kappa} outside"),
        };
        println!("{verdict}{tag}");
    }
    if let Some(out) = &c.out {
        prepare_out(out)?;
        let mut m = manifest("check-params", &s)?;
        m.result("constants", &l)?;
        m.result("kappa", &kappa)?;
        m.result("inside", &inside)?;
        m.write(&out.join("manifest.json"))?;
    }
    Ok(if inside { EXIT_OK } else { EXIT_WINDOW })
}

fn estimate_constants(c: &Common) -> Result<i32> {
    let s = load(c)?;
    let out = out_dir(c);
    prepare_out(&out)?;
    let o = s.doc.overrides();
    let mut rng = PathRng::new(s.doc.seed, ND_STREAM);
    let nd = estimate_nd(&s.cfg.grid, o.nd_iterations, &mut rng)?;
    let mut rng = PathRng::new(s.doc.seed, C0_STREAM);
    let cert = estimate_c0(&s.cfg.cda.interpolant, &s.cfg.grid, o.c0_samples, &mut rng)?;
    let l = build_ledger(
        &s.cfg,
        ConstantSource::Estimated(nd.nd_hat),
        ConstantSource::Estimated(cert.c0_hat),
        o.m,
    )?;
    let mut m = manifest("estimate-constants", &s)?;
    let doc = json!({ "ledger": l, "nd_estimate": nd, "c0_certificate": cert });
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    write_text(&out, "constants.json", &text, &mut m)?;
    m.result("constants", &l)?;
    m.write(&out.join("manifest.json"))?;
    if !c.quiet {
        println!("N_d ~ {:.6e} (used {:.6e}), c0 ~ {:.6e}", nd.nd_hat, nd.nd_used, cert.c0_hat);
        println!("M = {:.6e}, window ({:.6e}, {:.6e}]", l.m, l.kappa_min, l.kappa_max);
    }
    Ok(EXIT_OK)
}

fn verify_ops(v: &VerifyArgs) -> Result<i32> {
    let grid = match &v.config {
        Some(p) => ScenarioConfig::load(p)?.domain()?,
        None => make_grid(64, 2.0 * std::f64::consts::PI)?,
    };
    let checks = operator_suite(&grid, v.samples, v.seed)?;
    if !v.quiet {
        print!("{}", render_table(&checks));
    }
    if let Some(dir) = &v.out {
        prepare_out(dir)?;
        let mut text = serde_json::to_string_pretty(&json!({ "n": grid.n(), "checks": checks }))?;
        text.push('\n');
        fs::write(dir.join("verify_ops.json"), text)?;
    }
    Ok(if checks.iter().all(|c| c.passed) { EXIT_OK } else { EXIT_USAGE })
}
