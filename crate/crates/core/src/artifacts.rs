//! Output formats: JSON verdicts, CSV tables, run metadata and small SVG
//! line plots.
//!
//! Result files depend only on inputs and seeds. Wall-clock data goes to a
//! separate `*.meta.json` file so reruns can be compared byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    /// Recorded but never gating.
    Diagnostic,
}

impl Status {
    pub fn from_check(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub params: Value,
    pub values: Map<String, Value>,
    pub tolerance: String,
    pub status: Status,
    pub seed: u64,
}

impl Verdict {
    pub fn new(name: &str, params: impl Serialize, tolerance: &str, status: Status, seed: u64) -> Self {
        Self {
            name: name.to_string(),
            params: serde_json::to_value(params).unwrap_or(Value::Null),
            values: Map::new(),
            tolerance: tolerance.to_string(),
            status,
            seed,
        }
    }

    pub fn value(mut self, key: &str, v: impl Serialize) -> Self {
        self.values
            .insert(key.to_string(), serde_json::to_value(v).unwrap_or(Value::Null));
        self
    }

    pub fn is_hard_failure(&self) -> bool {
        self.status == Status::Fail
    }
}

pub fn verdict_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.verdict.json"))
}

pub fn write_verdict(dir: &Path, v: &Verdict) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = verdict_path(dir, &v.name);
    write_json(&path, v)?;
    Ok(path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

/// All `*.verdict.json` files of `dir`, sorted by name.
pub fn read_verdicts(dir: &Path) -> Result<Vec<Verdict>> {
    let mut out = Vec::new();
    if !dir.is_dir() {
        return Ok(out);
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(".verdict.json"))
        .collect();
    paths.sort();
    for p in paths {
        let text = fs::read_to_string(&p)?;
        let v: Verdict = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", p.display())))?;
        out.push(v);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub verdicts: Vec<SummaryRow>,
    pub passed: usize,
    pub failed: usize,
    pub diagnostic: usize,
    pub all_hard_gates_pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub name: String,
    pub status: Status,
    pub tolerance: String,
}

/// Collates the verdicts of `dir`; an empty directory is an error.
pub fn summarize(dir: &Path) -> Result<Summary> {
    let vs = read_verdicts(dir)?;
    if vs.is_empty() {
        return Err(Error::Format(format!("no verdicts found in {}", dir.display())));
    }
    let count = |s: Status| vs.iter().filter(|v| v.status == s).count();
    Ok(Summary {
        passed: count(Status::Pass),
        failed: count(Status::Fail),
        diagnostic: count(Status::Diagnostic),
        all_hard_gates_pass: vs.iter().all(|v| !v.is_hard_failure()),
        verdicts: vs
            .into_iter()
            .map(|v| SummaryRow {
                name: v.name,
                status: v.status,
                tolerance: v.tolerance,
            })
            .collect(),
    })
}

/// CSV with a header row; floats in shortest round-trip form.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(f, "{}", header.join(","))?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::Format(format!(
                "row of {} fields under a header of {}",
                row.len(),
                header.len()
            )));
        }
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        writeln!(f, "{}", cells.join(","))?;
    }
    f.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub command: String,
    pub version: String,
    pub workers: usize,
    pub unix_time: u64,
    pub elapsed_seconds: f64,
}

pub fn write_metadata(dir: &Path, name: &str, meta: &RunMetadata) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("{name}.meta.json"));
    write_json(&path, meta)?;
    Ok(path)
}

pub struct Series<'a> {
    pub label: &'a str,
    pub points: &'a [(f64, f64)],
    /// Draw markers instead of a line.
    pub markers: bool,
}

/// Minimal SVG line/scatter plot.
pub fn svg_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const M: f64 = 60.0;
    const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    let pts = series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !(x1 > x0) {
        x1 = x0 + 1.0;
    }
    if !(y1 > y0) {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| M + (x - x0) / (x1 - x0) * (W - 2.0 * M);
    let sy = |y: f64| H - M - (y - y0) / (y1 - y0) * (H - 2.0 * M);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<path d="M{M} {} L{} {} M{M} {} L{M} {M}" stroke="black" fill="none"/>"#,
        H - M,
        W - M,
        H - M,
        H - M
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 15.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
    for (v, y) in [(x0, H - M + 15.0), (x1, H - M + 15.0)] {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{y}" text-anchor="middle">{v:.3}</text>"#, sx(v));
    }
    for v in [y0, y1] {
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.3}</text>"#, M - 5.0, sy(v));
    }
    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let finite: Vec<&(f64, f64)> = ser.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()).collect();
        if ser.markers {
            for p in finite {
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(p.0), sy(p.1));
            }
        } else if !finite.is_empty() {
            let d: Vec<String> = finite
                .iter()
                .enumerate()
                .map(|(k, p)| format!("{}{:.2} {:.2}", if k == 0 { "M" } else { "L" }, sx(p.0), sy(p.1)))
                .collect();
            let _ = writeln!(s, r#"<path d="{}" stroke="{color}" fill="none" stroke-width="1.5"/>"#, d.join(" "));
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            W - M - 150.0,
            M + 15.0 * i as f64,
            escape(ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
