use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A CSV table held as already-formatted cells.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Table {
            name: name.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Table {
            name: path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            header,
            rows,
        })
    }
}

/// Everything a run writes: tables, SVG plots and manifest metadata.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub config_text: Option<String>,
    pub seeds: Vec<u64>,
    pub tables: Vec<Table>,
    pub plots: Vec<(String, String)>,
}

impl Report {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn merge(&mut self, other: Report) {
        self.tables.extend(other.tables);
        self.plots.extend(other.plots);
    }
}

pub const MANIFEST: &str = "manifest.txt";

/// Write every table and plot into `dir`, then a manifest listing each file
/// with its SHA-256. Returns the written paths, manifest last.
pub fn emit_report(report: &Report, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))?;
    let mut written = Vec::new();
    for t in &report.tables {
        let p = dir.join(&t.name);
        t.write(&p)?;
        written.push(p);
    }
    for (name, svg) in &report.plots {
        let p = dir.join(name);
        std::fs::write(&p, svg)?;
        written.push(p);
    }
    let mut m = String::new();
    let _ = writeln!(m, "# run manifest");
    let _ = writeln!(m, "crate_version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(
        m,
        "seeds = {}",
        report.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")
    );
    if let Some(cfg) = &report.config_text {
        for line in cfg.lines().filter(|l| !l.trim().is_empty()) {
            let _ = writeln!(m, "config.{}", line.trim());
        }
    }
    for p in &written {
        let bytes = std::fs::read(p)?;
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let _ = writeln!(m, "file.{name} = {:x}", Sha256::digest(&bytes));
    }
    let mp = dir.join(MANIFEST);
    std::fs::write(&mp, m)?;
    written.push(mp);
    Ok(written)
}

/// Hex SHA-256 of a file.
pub fn file_sha256(path: impl AsRef<Path>) -> Result<String> {
    Ok(format!("{:x}", Sha256::digest(std::fs::read(path)?)))
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const PAD: f64 = 56.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit<'a>(points: impl Iterator<Item = &'a (f64, f64)>) -> Frame {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in points.filter(|(x, y)| x.is_finite() && y.is_finite()) {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 - x0 < 1e-12 {
            x1 = x0 + 1.0;
        }
        if y1 - y0 < 1e-12 {
            y1 = y0 + 1.0;
        }
        Frame { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        PAD + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * PAD)
    }

    fn py(&self, y: f64) -> f64 {
        H - PAD - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * PAD)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open_svg(title: &str, xlabel: &str, ylabel: &str, f: &Frame) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<line x1="{PAD}" y1="{}" x2="{}" y2="{}" stroke="black"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{}" stroke="black"/>"#,
        H - PAD,
        W - PAD,
        H - PAD,
        H - PAD
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 14.0, escape(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    );
    for (v, anchor_x) in [(f.x0, f.px(f.x0)), (f.x1, f.px(f.x1))] {
        let _ = writeln!(s, r#"<text x="{anchor_x:.1}" y="{}" text-anchor="middle">{v:.3e}</text>"#, H - PAD + 16.0);
    }
    for (v, y) in [(f.y0, f.py(f.y0)), (f.y1, f.py(f.y1))] {
        let _ = writeln!(s, r#"<text x="{}" y="{y:.1}" text-anchor="end">{v:.3e}</text>"#, PAD - 4.0);
    }
    s
}

pub fn scatter_svg(title: &str, xlabel: &str, ylabel: &str, points: &[(f64, f64)]) -> String {
    let f = Frame::fit(points.iter());
    let mut s = open_svg(title, xlabel, ylabel, &f);
    for &(x, y) in points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()) {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{}" fill-opacity="0.6"/>"#,
            f.px(x),
            f.py(y),
            COLORS[0]
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn lines_svg(title: &str, xlabel: &str, ylabel: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let f = Frame::fit(series.iter().flat_map(|(_, p)| p.iter()));
    let mut s = open_svg(title, xlabel, ylabel, &f);
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let path: Vec<String> = pts
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y)))
            .collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, path.join(" "));
        let ly = PAD + 16.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/><text x="{}" y="{}">{}</text>"#,
            W - PAD - 130.0,
            ly - 9.0,
            W - PAD - 115.0,
            ly,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(tag: &str) -> PathBuf {
        let d = std::env::temp_dir().join(format!("report-{tag}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&d);
        d
    }

    #[test]
    fn empty_report_writes_only_a_manifest() {
        let d = tmp("empty");
        let files = emit_report(&Report::default(), &d).unwrap();
        assert_eq!(files, vec![d.join(MANIFEST)]);
        assert_eq!(std::fs::read_dir(&d).unwrap().count(), 1);
    }

    #[test]
    fn manifest_lists_every_file_with_its_hash() {
        let d = tmp("full");
        let mut t = Table::new("a.csv", &["x", "y"]);
        t.push(vec!["1".into(), "2".into()]);
        let report = Report {
            config_text: Some("k = v\n".into()),
            seeds: vec![1, 2],
            tables: vec![t.clone()],
            plots: vec![("p.svg".into(), scatter_svg("t", "x", "y", &[(0.0, 1.0), (1.0, 2.0)]))],
        };
        emit_report(&report, &d).unwrap();
        let manifest = std::fs::read_to_string(d.join(MANIFEST)).unwrap();
        for f in ["a.csv", "p.svg"] {
            let line = format!("file.{f} = {}", file_sha256(d.join(f)).unwrap());
            assert!(manifest.contains(&line), "{manifest}");
        }
        assert!(manifest.contains("config.k = v"));
        let back = Table::read(d.join("a.csv")).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn svg_handles_degenerate_series() {
        let s = lines_svg("t", "x", "y", &[("a".into(), vec![(1.0, 1.0)]), ("b&c".into(), vec![])]);
        assert!(s.starts_with("<svg") && s.contains("b&amp;c"));
    }
}
