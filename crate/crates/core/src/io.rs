//! File formats: field snapshots, slice CSV, diagnostics CSV and the run
//! manifest.
//!
//! Snapshot layout (little-endian): `u32 d`, `u32 n`, `f64 L`, then each
//! component as `n * n` row-major `f64` samples (row index = `y`).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};

use crate::engine::{DiagnosticsRecord, MonteCarloSummary, TruthRecord};
use crate::error::{Error, Result};
use crate::grid::{make_grid, VelocityField};

/// Fixed header of the diagnostics stream.
pub const DIAGNOSTICS_HEADER: &str = "t,e_truth,e_assim,err_sq,grad_sq,strain_l4_4,accum,envelope";

pub const TRUTH_HEADER: &str = "t,e_truth,grad_sq,strain_l4_4,accum";

pub const MC_HEADER: &str = "t,mean_err_sq,se_err_sq,mean_truth_4,se_truth_4";

/// Manifest keys holding wall-clock data; excluded from reproducibility checks.
pub const TIMING_KEY: &str = "timing";

const HEADER_BYTES: usize = 16;

pub fn encode_snapshot(f: &VelocityField) -> Vec<u8> {
    let d = f.domain();
    let mut out = Vec::with_capacity(HEADER_BYTES + 16 * d.points());
    out.extend_from_slice(&(d.dimension() as u32).to_le_bytes());
    out.extend_from_slice(&(d.n() as u32).to_le_bytes());
    out.extend_from_slice(&d.length().to_le_bytes());
    for c in 0..2 {
        for x in f.component(c) {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<VelocityField> {
    if bytes.len() < HEADER_BYTES {
        return Err(Error::Snapshot("truncated header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let dim = word(0) as usize;
    let n = word(4) as usize;
    let length = f64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    if dim != 2 {
        return Err(Error::Snapshot(format!("unsupported dimension {dim}")));
    }
    let d = make_grid(n, length)?;
    let want = HEADER_BYTES + 8 * dim * d.points();
    if bytes.len() != want {
        return Err(Error::Snapshot(format!("expected {want} bytes, found {}", bytes.len())));
    }
    let body = &bytes[HEADER_BYTES..];
    let read = |c: usize| -> Vec<f64> {
        body[c * 8 * d.points()..(c + 1) * 8 * d.points()]
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect()
    };
    VelocityField::from_components(d, read(0), read(1))
}

pub fn write_snapshot(path: &Path, f: &VelocityField) -> Result<()> {
    fs::write(path, encode_snapshot(f))?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<VelocityField> {
    let bytes = fs::read(path).map_err(|e| Error::Snapshot(format!("{}: {e}", path.display())))?;
    decode_snapshot(&bytes)
}

/// Samples along the row `y = y_index * h` as `x,u,v`.
pub fn slice_csv(f: &VelocityField, y_index: usize) -> Result<String> {
    let d = f.domain();
    if y_index >= d.n() {
        return Err(Error::Grid(format!("row {y_index} outside the {} grid", d.n())));
    }
    let mut s = String::from("x,u,v\n");
    for ix in 0..d.n() {
        let k = y_index * d.n() + ix;
        let _ = writeln!(s, "{:e},{:e},{:e}", d.coord(ix), f.u()[k], f.v()[k]);
    }
    Ok(s)
}

pub fn diagnostics_csv(records: &[DiagnosticsRecord]) -> String {
    let mut s = String::with_capacity(64 * (records.len() + 1));
    s.push_str(DIAGNOSTICS_HEADER);
    s.push('\n');
    for r in records {
        let env = r.envelope.map(|e| format!("{e:e}")).unwrap_or_default();
        let _ = writeln!(
            s,
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}",
            r.t, r.e_truth, r.e_assim, r.err_sq, r.grad_sq, r.strain_l4_4, r.accum, env
        );
    }
    s
}

/// Parses a diagnostics stream; the header must match exactly.
pub fn parse_diagnostics_csv(text: &str) -> Result<Vec<DiagnosticsRecord>> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default().trim();
    if header != DIAGNOSTICS_HEADER {
        return Err(Error::Config(format!(
            "diagnostics header mismatch: expected `{DIAGNOSTICS_HEADER}`, found `{header}`"
        )));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 8 {
            return Err(Error::Config(format!("diagnostics row {}: expected 8 columns", i + 1)));
        }
        let num = |j: usize| -> Result<f64> {
            cols[j]
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("diagnostics row {}: bad value `{}`", i + 1, cols[j])))
        };
        out.push(DiagnosticsRecord {
            t: num(0)?,
            e_truth: num(1)?,
            e_assim: num(2)?,
            err_sq: num(3)?,
            grad_sq: num(4)?,
            strain_l4_4: num(5)?,
            accum: num(6)?,
            envelope: if cols[7].trim().is_empty() { None } else { Some(num(7)?) },
        });
    }
    Ok(out)
}

pub fn truth_csv(records: &[TruthRecord]) -> String {
    let mut s = String::from(TRUTH_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(s, "{:e},{:e},{:e},{:e},{:e}", r.t, r.e_truth, r.grad_sq, r.strain_l4_4, r.accum);
    }
    s
}

pub fn monte_carlo_csv(summary: &MonteCarloSummary) -> String {
    let mut s = String::from(MC_HEADER);
    s.push('\n');
    for i in 0..summary.times.len() {
        let _ = writeln!(
            s,
            "{:e},{:e},{:e},{:e},{:e}",
            summary.times[i],
            summary.mean_err_sq[i],
            summary.se_err_sq[i],
            summary.mean_truth_4[i],
            summary.se_truth_4[i]
        );
    }
    s
}

/// Long-format per-path series: `path,t,err_sq,e_truth`.
pub fn paths_csv(summary: &MonteCarloSummary) -> String {
    let mut s = String::from("path,t,err_sq,e_truth\n");
    for p in summary.paths.iter().filter(|p| !p.excluded) {
        for r in &p.records {
            let _ = writeln!(s, "{},{:e},{:e},{:e}", p.path, r.t, r.err_sq, r.e_truth);
        }
    }
    s
}

/// Run manifest: command, seed, version, configuration echo and results.
/// Wall-clock data lives under [`TIMING_KEY`].
#[derive(Debug, Clone)]
pub struct Manifest {
    command: String,
    seed: u64,
    config: Value,
    outputs: Vec<String>,
    results: serde_json::Map<String, Value>,
    started: SystemTime,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config: Value) -> Self {
        Self {
            command: command.to_string(),
            seed,
            config,
            outputs: Vec::new(),
            results: serde_json::Map::new(),
            started: SystemTime::now(),
        }
    }

    pub fn output(&mut self, name: &str) {
        self.outputs.push(name.to_string());
    }

    pub fn result<T: Serialize>(&mut self, key: &str, value: &T) -> Result<()> {
        self.results.insert(key.to_string(), serde_json::to_value(value)?);
        Ok(())
    }

    pub fn to_value(&self) -> Value {
        let started = self
            .started
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0);
        let wall = self.started.elapsed().map(|d| d.as_secs_f64()).unwrap_or(0.0);
        json!({
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "seed": self.seed,
            "config": self.config,
            "outputs": self.outputs,
            "results": Value::Object(self.results.clone()),
            TIMING_KEY: { "started_unix_s": started, "wall_time_s": wall },
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(&self.to_value())?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }
}

/// Manifest with the timing block removed, for reproducibility comparisons.
pub fn manifest_without_timing(text: &str) -> Result<Value> {
    let mut v: Value = serde_json::from_str(text)?;
    if let Some(obj) = v.as_object_mut() {
        obj.remove(TIMING_KEY);
    }
    Ok(v)
}
