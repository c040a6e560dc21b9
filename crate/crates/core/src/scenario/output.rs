//! Output bundle: rounded JSON documents, CSV/SVG files and the manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::error::Result;

/// Significant digits kept in JSON numbers.
pub const SIGNIFICANT_DIGITS: usize = 12;

/// `x` rounded to `digits` significant digits.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", digits.saturating_sub(1), x).parse().unwrap_or(x)
}

/// A JSON number rounded to [`SIGNIFICANT_DIGITS`], or `"inf"`, `"-inf"`,
/// `"nan"` for non-finite values.
pub fn num(x: f64) -> Value {
    if x.is_nan() {
        Value::from("nan")
    } else if x == f64::INFINITY {
        Value::from("inf")
    } else if x == f64::NEG_INFINITY {
        Value::from("-inf")
    } else {
        let r = round_sig(x, SIGNIFICANT_DIGITS);
        // normalise -0
        Value::from(if r == 0.0 { 0.0 } else { r })
    }
}

pub fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}

/// How a run ended, in order of precedence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Success,
    ConfigError,
    NumericalFailure,
    Violation,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Success => 0,
            RunStatus::ConfigError => 1,
            RunStatus::NumericalFailure => 2,
            RunStatus::Violation => 3,
        }
    }
}

/// The emitted files of a run, keyed by file name.
#[derive(Clone, Debug)]
pub struct OutputBundle {
    pub files: BTreeMap<String, String>,
    /// The golden-comparable summary (`summary.json`).
    pub summary: Value,
    /// `manifest.json`: versions, seed, wall time, task outcomes, hashes.
    pub manifest: Value,
    pub status: RunStatus,
}

impl OutputBundle {
    pub(crate) fn assemble(mut files: BTreeMap<String, String>, summary: Value, mut manifest: Value, status: RunStatus) -> Self {
        files.insert("summary.json".into(), pretty(&summary));
        let mut hashes = Map::new();
        let mut all = Sha256::new();
        for (name, body) in &files {
            let h = hex::encode(Sha256::digest(body.as_bytes()));
            all.update(name.as_bytes());
            all.update([0u8]);
            all.update(h.as_bytes());
            all.update([b'\n']);
            hashes.insert(name.clone(), Value::from(h));
        }
        manifest["files"] = Value::Object(hashes);
        manifest["digest"] = Value::from(hex::encode(all.finalize()));
        manifest["status"] = json!(status);
        manifest["exit_code"] = Value::from(status.exit_code());
        files.insert("manifest.json".into(), pretty(&manifest));
        OutputBundle { files, summary, manifest, status }
    }

    /// Writes every file into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, body) in &self.files {
            std::fs::write(dir.join(name), body)?;
        }
        Ok(())
    }

    pub fn file(&self, name: &str) -> Option<&str> {
        self.files.get(name).map(String::as_str)
    }

    /// A task document parsed back into JSON.
    pub fn document(&self, task: &str) -> Option<Value> {
        self.file(&format!("{task}.json")).and_then(|s| serde_json::from_str(s).ok())
    }
}

pub(crate) fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).unwrap_or_default();
    s.push('\n');
    s
}

/// Walks two JSON values in parallel and lists every numeric field that
/// differs by more than `rel` relative to the larger magnitude (values
/// both below `floor` in magnitude are treated as equal), plus any
/// structural mismatch.
pub fn compare_numeric(expected: &Value, actual: &Value, rel: f64, floor: f64) -> Vec<String> {
    let mut out = Vec::new();
    walk(expected, actual, rel, floor, String::new(), &mut out);
    out
}

fn walk(a: &Value, b: &Value, rel: f64, floor: f64, at: String, out: &mut Vec<String>) {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap_or(f64::NAN), y.as_f64().unwrap_or(f64::NAN));
            let scale = x.abs().max(y.abs());
            let close = (x - y).abs() <= rel * scale || scale <= floor;
            if !close {
                out.push(format!("{at}: expected {x}, got {y}"));
            }
        }
        (Value::Object(x), Value::Object(y)) => {
            for (k, v) in x {
                match y.get(k) {
                    Some(w) => walk(v, w, rel, floor, format!("{at}/{k}"), out),
                    None => out.push(format!("{at}/{k}: missing")),
                }
            }
            for k in y.keys().filter(|k| !x.contains_key(*k)) {
                out.push(format!("{at}/{k}: unexpected"));
            }
        }
        (Value::Array(x), Value::Array(y)) => {
            if x.len() != y.len() {
                out.push(format!("{at}: expected {} entries, got {}", x.len(), y.len()));
                return;
            }
            for (i, (v, w)) in x.iter().zip(y).enumerate() {
                walk(v, w, rel, floor, format!("{at}/{i}"), out);
            }
        }
        _ => {
            if a != b {
                out.push(format!("{at}: expected {a}, got {b}"));
            }
        }
    }
}

/// Minimal SVG 1.1 canvas in chart coordinates, flipped so `y` points up.
pub(crate) struct Svg {
    lo: [f64; 2],
    hi: [f64; 2],
    body: String,
}

const SVG_SIZE: f64 = 600.0;

impl Svg {
    pub fn new(points: impl Iterator<Item = [f64; 2]>) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in points.filter(|p| p[0].is_finite() && p[1].is_finite()) {
            for i in 0..2 {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        if !lo[0].is_finite() {
            lo = [-1.0, -1.0];
            hi = [1.0, 1.0];
        }
        let pad = 0.05 * (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-3);
        Svg { lo: [lo[0] - pad, lo[1] - pad], hi: [hi[0] + pad, hi[1] + pad], body: String::new() }
    }

    fn map(&self, p: [f64; 2]) -> (f64, f64) {
        let span = (self.hi[0] - self.lo[0]).max(self.hi[1] - self.lo[1]);
        let s = SVG_SIZE / span;
        ((p[0] - self.lo[0]) * s, SVG_SIZE - (p[1] - self.lo[1]) * s)
    }

    pub fn polyline(&mut self, pts: &[[f64; 2]], stroke: &str, width: f64) {
        if pts.len() < 2 {
            return;
        }
        let mut d = String::new();
        for p in pts {
            let (x, y) = self.map(*p);
            let _ = write!(d, "{x:.3},{y:.3} ");
        }
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="{width}"/>"#,
            d.trim_end()
        );
    }

    pub fn dot(&mut self, p: [f64; 2], fill: &str, r: f64) {
        let (x, y) = self.map(p);
        let _ = writeln!(self.body, r#"<circle cx="{x:.3}" cy="{y:.3}" r="{r}" fill="{fill}"/>"#);
    }

    pub fn finish(self, title: &str) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
             <svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{SVG_SIZE}\" height=\"{SVG_SIZE}\" viewBox=\"0 0 {SVG_SIZE} {SVG_SIZE}\">\n\
             <title>{}</title>\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            escape(title),
            self.body
        )
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_and_nonfinite() {
        assert_eq!(round_sig(std::f64::consts::PI, 12), 3.14159265359);
        assert_eq!(round_sig(0.0, 12), 0.0);
        assert_eq!(num(f64::INFINITY), Value::from("inf"));
        assert_eq!(num(-0.0), json!(0.0));
        assert_eq!(num(1.0 / 3.0), json!(0.333333333333));
    }

    #[test]
    fn numeric_comparison() {
        let a = json!({"x": 1.0, "y": [1e-15, "inf"], "z": true});
        let b = json!({"x": 1.0 + 1e-12, "y": [3e-15, "inf"], "z": true});
        assert!(compare_numeric(&a, &b, 1e-9, 1e-12).is_empty());
        let c = json!({"x": 1.1, "y": [1e-15], "z": false, "w": 0});
        let diffs = compare_numeric(&a, &c, 1e-9, 1e-12);
        assert_eq!(diffs.len(), 4, "{diffs:?}");
    }

    #[test]
    fn manifest_hashes_every_file() {
        let mut files = BTreeMap::new();
        files.insert("a.csv".to_string(), "x\n1\n".to_string());
        let b = OutputBundle::assemble(files, json!({"k": 1}), json!({}), RunStatus::Success);
        let hashes = b.manifest["files"].as_object().unwrap();
        assert_eq!(hashes.len(), 2);
        assert_eq!(hashes["a.csv"], hex::encode(Sha256::digest(b"x\n1\n")));
        assert!(b.file("manifest.json").is_some());
        assert_eq!(b.manifest["exit_code"], 0);
    }

    #[test]
    fn svg_is_well_formed() {
        let mut s = Svg::new([[0.0, 0.0], [1.0, 2.0]].into_iter());
        s.polyline(&[[0.0, 0.0], [1.0, 2.0]], "black", 1.0);
        s.dot([0.5, 0.5], "red", 2.0);
        let out = s.finish("a < b");
        assert!(out.starts_with("<?xml"));
        assert!(out.contains("<polyline") && out.contains("<circle") && out.contains("a &lt; b"));
        assert!(out.trim_end().ends_with("</svg>"));
    }
}
