//! Run reports and their bit-stable serialization.
//!
//! JSON output has sorted keys and every float written as `{:.16e}` (17
//! significant digits, so parsing gives back the same `f64`); non-finite
//! floats become `null`. CSV tables per task:
//!
//! - `verdicts.csv`: `name, value, bound, comparison, pass`
//! - `identities_n{n}.csv`: `t, residual_ricci, residual_scalar`
//! - `curvature.csv`: `t, ric_tt, fiber_eigenvalue, scalar, margin`
//! - `trace.csv`: `iteration, energy, residual`
//! - `eigenvalues.csv`: `index, eigenvalue`
//! - `foliation.csv`: `t, htilde, energy, psi`
//! - `rigidity.csv`: `quantity, value`

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::{Format, Task};
use crate::error::{Error, Result};
use crate::minimize::TraceRow;
use crate::stability::{EigenMethod, RigidityReport};
use crate::surface::io::SurfaceSnapshot;
use crate::warp::SpectralKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// `|value| <= bound`.
    AbsAtMost,
    /// `value <= bound`.
    AtMost,
    /// `value > bound`.
    Above,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub comparison: Comparison,
    pub pass: bool,
}

impl Verdict {
    pub fn new(name: impl Into<String>, value: f64, comparison: Comparison, bound: f64) -> Self {
        let pass = match comparison {
            Comparison::AbsAtMost => value.abs() <= bound,
            Comparison::AtMost => value <= bound,
            Comparison::Above => value > bound,
        };
        Self {
            name: name.into(),
            value,
            bound,
            comparison,
            pass,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 of the canonical JSON form of the configuration.
    pub config_sha256: String,
    pub version: String,
    /// Wall-clock times live in `timestamps.json` next to the report so the
    /// report itself stays byte-stable.
    pub timestamps: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityTable {
    pub n: usize,
    pub t: Vec<f64>,
    pub residual_ricci: Vec<f64>,
    /// Absent for fibers that are not scalar-flat.
    pub residual_scalar: Option<Vec<f64>>,
    pub max_ricci: f64,
    pub max_scalar: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvatureResult {
    pub t: Vec<f64>,
    pub ric_tt: Vec<f64>,
    pub fiber_eigenvalue: Vec<f64>,
    pub scalar: Vec<f64>,
    pub kind: SpectralKind,
    pub margin: Vec<f64>,
    pub oracle_points: usize,
    /// Largest difference between closed form and the Richardson oracle.
    pub oracle_difference: f64,
    /// `log2` of the error ratio of the plain oracle under step halving.
    pub oracle_order: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimizeResult {
    pub energy: f64,
    pub htilde_residual: f64,
    pub mean: f64,
    pub deviation: f64,
    pub iterations: usize,
    pub rigidity: Option<RigidityReport>,
    pub trace: Vec<TraceRow>,
    pub surface: SurfaceSnapshot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub eigenvalues: Vec<f64>,
    pub rayleigh_defect: f64,
    pub method: EigenMethod,
    /// Cosine similarity of the first eigenfunction with the constants.
    pub constant_similarity: f64,
    pub htilde_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafSummary {
    pub t: f64,
    pub htilde: f64,
    pub lagrange: f64,
    pub residual: f64,
    pub energy: f64,
    pub psi: f64,
    pub conserved: f64,
    pub mean_error: f64,
    pub min_speed: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoliationSummary {
    pub leaves: Vec<LeafSummary>,
    pub min_separation: Option<f64>,
    pub max_violation: f64,
    pub linearization_deviation: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidityResult {
    pub kind: SpectralKind,
    pub minimized: bool,
    pub energy: f64,
    pub report: RigidityReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskResult {
    Identities(Vec<IdentityTable>),
    Curvature(CurvatureResult),
    Minimize(MinimizeResult),
    Spectrum(SpectrumResult),
    Foliation(FoliationSummary),
    Rigidity(RigidityResult),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub task: Task,
    pub provenance: Provenance,
    pub result: TaskResult,
    pub verdicts: Vec<Verdict>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    /// Process exit code: 0 if every verdict passed, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.passed() { 0 } else { 2 }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(to_canonical_json(&serde_json::to_value(self)?))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Pretty JSON with sorted keys and `{:.16e}` floats.
pub fn to_canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, value, 0);
    out.push('\n');
    out
}

fn write_value(out: &mut String, value: &Value, depth: usize) {
    let indent = |out: &mut String, d: usize| {
        out.push('\n');
        out.extend(std::iter::repeat_n("  ", d));
    };
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => match (n.as_u64(), n.as_i64(), n.as_f64()) {
            (Some(u), _, _) if !n.is_f64() => write!(out, "{u}").unwrap(),
            (_, Some(i), _) if !n.is_f64() => write!(out, "{i}").unwrap(),
            (_, _, Some(f)) if f.is_finite() => write!(out, "{f:.16e}").unwrap(),
            _ => out.push_str("null"),
        },
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("strings serialize")),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                indent(out, depth + 1);
                write_value(out, item, depth + 1);
            }
            indent(out, depth);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                indent(out, depth + 1);
                out.push_str(&serde_json::to_string(key).expect("strings serialize"));
                out.push_str(": ");
                write_value(out, &map[key], depth + 1);
            }
            indent(out, depth);
            out.push('}');
        }
    }
}

fn fmt_f64(v: f64) -> String {
    if v.is_finite() { format!("{v:.16e}") } else { String::new() }
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(&row)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Writes the report into `dir` in the requested format and returns the
/// written paths.
pub fn emit_report(report: &RunReport, format: Format, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    match format {
        Format::Json => {
            let path = dir.join("report.json");
            std::fs::write(&path, report.to_json()?).map_err(|e| Error::io(&path, e))?;
            Ok(vec![path])
        }
        Format::Text => {
            let path = dir.join("report.txt");
            std::fs::write(&path, render_text(report)).map_err(|e| Error::io(&path, e))?;
            Ok(vec![path])
        }
        Format::Csv => emit_csv(report, dir),
    }
}

fn emit_csv(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    let verdicts = dir.join("verdicts.csv");
    write_csv(
        &verdicts,
        &["name", "value", "bound", "comparison", "pass"],
        report.verdicts.iter().map(|v| {
            vec![
                v.name.clone(),
                fmt_f64(v.value),
                fmt_f64(v.bound),
                serde_json::to_value(v.comparison)
                    .ok()
                    .and_then(|c| c.as_str().map(str::to_owned))
                    .unwrap_or_default(),
                v.pass.to_string(),
            ]
        }),
    )?;
    paths.push(verdicts);
    match &report.result {
        TaskResult::Identities(tables) => {
            for table in tables {
                let path = dir.join(format!("identities_n{}.csv", table.n));
                write_csv(
                    &path,
                    &["t", "residual_ricci", "residual_scalar"],
                    table.t.iter().enumerate().map(|(i, t)| {
                        vec![
                            fmt_f64(*t),
                            fmt_f64(table.residual_ricci[i]),
                            table
                                .residual_scalar
                                .as_ref()
                                .map(|s| fmt_f64(s[i]))
                                .unwrap_or_default(),
                        ]
                    }),
                )?;
                paths.push(path);
            }
        }
        TaskResult::Curvature(c) => {
            let path = dir.join("curvature.csv");
            write_csv(
                &path,
                &["t", "ric_tt", "fiber_eigenvalue", "scalar", "margin"],
                (0..c.t.len()).map(|i| {
                    vec![
                        fmt_f64(c.t[i]),
                        fmt_f64(c.ric_tt[i]),
                        fmt_f64(c.fiber_eigenvalue[i]),
                        fmt_f64(c.scalar[i]),
                        fmt_f64(c.margin[i]),
                    ]
                }),
            )?;
            paths.push(path);
        }
        TaskResult::Minimize(m) => {
            let path = dir.join("trace.csv");
            write_csv(
                &path,
                &["iteration", "energy", "residual"],
                m.trace.iter().map(|r| {
                    vec![r.iteration.to_string(), fmt_f64(r.energy), fmt_f64(r.residual)]
                }),
            )?;
            paths.push(path);
            let path = dir.join("surface.json");
            crate::surface::io::write_snapshot(&path, &m.surface)?;
            paths.push(path);
        }
        TaskResult::Spectrum(s) => {
            let path = dir.join("eigenvalues.csv");
            write_csv(
                &path,
                &["index", "eigenvalue"],
                s.eigenvalues
                    .iter()
                    .enumerate()
                    .map(|(i, l)| vec![(i + 1).to_string(), fmt_f64(*l)]),
            )?;
            paths.push(path);
        }
        TaskResult::Foliation(f) => {
            let path = dir.join("foliation.csv");
            write_csv(
                &path,
                &["t", "htilde", "energy", "psi"],
                f.leaves.iter().map(|l| {
                    vec![fmt_f64(l.t), fmt_f64(l.htilde), fmt_f64(l.energy), fmt_f64(l.psi)]
                }),
            )?;
            paths.push(path);
        }
        TaskResult::Rigidity(r) => {
            let path = dir.join("rigidity.csv");
            let q = &r.report;
            write_csv(
                &path,
                &["quantity", "value"],
                [
                    ("umbilicity_residual", q.umbilicity_residual),
                    ("tangential_w_residual", q.tangential_w_residual),
                    ("spectral_equality_residual", q.spectral_equality_residual),
                    ("htilde_residual", q.htilde_residual),
                    ("energy", r.energy),
                ]
                .into_iter()
                .map(|(k, v)| vec![k.to_owned(), fmt_f64(v)]),
            )?;
            paths.push(path);
        }
    }
    Ok(paths)
}

fn render_text(report: &RunReport) -> String {
    let mut out = String::new();
    writeln!(out, "task      {}", report.task.name()).unwrap();
    writeln!(out, "version   {}", report.provenance.version).unwrap();
    writeln!(out, "config    sha256:{}", report.provenance.config_sha256).unwrap();
    match &report.result {
        TaskResult::Identities(tables) => {
            for t in tables {
                write!(out, "n = {}  max ricci residual {:.3e}", t.n, t.max_ricci).unwrap();
                if let Some(s) = t.max_scalar {
                    write!(out, "  max scalar residual {s:.3e}").unwrap();
                }
                out.push('\n');
            }
        }
        TaskResult::Curvature(c) => {
            let worst = c.margin.iter().copied().fold(f64::INFINITY, f64::min);
            writeln!(out, "min spectral margin {worst:.6e}").unwrap();
            writeln!(out, "oracle difference {:.3e}, order {:.3}", c.oracle_difference, c.oracle_order).unwrap();
        }
        TaskResult::Minimize(m) => {
            writeln!(out, "energy {:.15}  max|H~| {:.3e}  iterations {}", m.energy, m.htilde_residual, m.iterations).unwrap();
            writeln!(out, "mean {:.6e}  max|rho - mean| {:.3e}", m.mean, m.deviation).unwrap();
        }
        TaskResult::Spectrum(s) => {
            let values: Vec<String> = s.eigenvalues.iter().map(|l| format!("{l:.9e}")).collect();
            writeln!(out, "eigenvalues {}", values.join(" ")).unwrap();
        }
        TaskResult::Foliation(f) => {
            for l in &f.leaves {
                writeln!(out, "t = {:+.4}  H~ {:+.3e}  energy {:.12}  psi {:+.3e}", l.t, l.htilde, l.energy, l.psi).unwrap();
            }
            writeln!(out, "max violation {:.3e}", f.max_violation).unwrap();
        }
        TaskResult::Rigidity(r) => {
            let q = &r.report;
            writeln!(
                out,
                "umbilicity {:.3e}  tangential w {:.3e}  spectral {:.3e}  H~ {:.3e}",
                q.umbilicity_residual, q.tangential_w_residual, q.spectral_equality_residual, q.htilde_residual
            )
            .unwrap();
        }
    }
    for v in &report.verdicts {
        writeln!(
            out,
            "{} {}  {:.6e} (bound {:.1e})",
            if v.pass { "PASS" } else { "FAIL" },
            v.name,
            v.value,
            v.bound
        )
        .unwrap();
    }
    out
}
