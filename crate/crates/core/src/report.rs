//! CSV and SVG emission.
//!
//! Numbers are printed like C's `%.17g`, so every `f64` round-trips. CSV
//! files start with `# key: value` metadata lines, then a header row.

use std::fmt::Write as _;
use std::path::Path as FsPath;

use crate::error::Result;

/// `x` formatted as C's `printf("%.17g", x)`.
pub fn fmt_g17(x: f64) -> String {
    fmt_g(x, 17)
}

/// `x` formatted as C's `printf("%.{precision}g", x)`.
pub fn fmt_g(x: f64, precision: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let p = precision.max(1);
    let sci = format!("{:.*e}", p - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= p as i32 {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (p as i32 - 1 - exp) as usize;
        strip_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// A CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Bool(bool),
    Text(String),
    /// Numbers joined by `;`.
    List(Vec<f64>),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => fmt_g17(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Bool(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::List(v) => v.iter().map(|x| fmt_g17(*x)).collect::<Vec<_>>().join(";"),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.into())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvTable {
    pub meta: Vec<(String, String)>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        Self {
            meta: Vec::new(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.meta.push((key.into(), value.to_string()));
        self
    }

    pub fn meta_num(&mut self, key: &str, value: f64) -> &mut Self {
        self.meta(key, fmt_g17(value))
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Starts a `# comment` line before the next row.
    pub fn comment(&mut self, text: &str) {
        self.rows.push(vec![Cell::Text(format!("# {text}"))]);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            let _ = writeln!(out, "# {k}: {v}");
        }
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(Cell::render).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &FsPath) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Line,
    Points,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub style: Style,
}

#[derive(Debug, Clone)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub series: Vec<Series>,
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN: (f64, f64, f64, f64) = (80.0, 40.0, 50.0, 60.0); // left, right, top, bottom
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

impl Plot {
    pub fn render(&self) -> String {
        let tx = |x: f64| if self.log_x { x.log10() } else { x };
        let pts: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().copied())
            .filter(|(x, y)| tx(*x).is_finite() && y.is_finite())
            .collect();
        let range = |vals: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
                (a.min(v), b.max(v))
            });
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 * (1.0 + lo.abs()) {
                (lo - 0.5, hi + 0.5)
            } else {
                let pad = 0.05 * (hi - lo);
                (lo - pad, hi + pad)
            }
        };
        let (x0, x1) = range(&mut pts.iter().map(|p| tx(p.0)));
        let (y0, y1) = range(&mut pts.iter().map(|p| p.1));
        let (ml, mr, mt, mb) = MARGIN;
        let pw = WIDTH - ml - mr;
        let ph = HEIGHT - mt - mb;
        let sx = |x: f64| ml + (tx(x) - x0) / (x1 - x0) * pw;
        let sy = |y: f64| mt + (1.0 - (y - y0) / (y1 - y0)) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="800" height="600" viewBox="0 0 800 600" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="800" height="600" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="400" y="28" text-anchor="middle" font-size="16">{}</text>"#,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        for i in 0..=5 {
            let f = i as f64 / 5.0;
            let xv = x0 + f * (x1 - x0);
            let label = if self.log_x { 10f64.powf(xv) } else { xv };
            let px = ml + f * pw;
            let _ = writeln!(
                s,
                r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                mt + ph,
                mt + ph + 5.0,
                mt + ph + 20.0,
                fmt_g(label, 3)
            );
            let yv = y0 + f * (y1 - y0);
            let py = mt + (1.0 - f) * ph;
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{py:.2}" x2="{ml}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                ml - 5.0,
                ml - 8.0,
                py + 4.0,
                fmt_g(yv, 4)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}{}</text>"#,
            ml + pw / 2.0,
            HEIGHT - 15.0,
            escape(&self.x_label),
            if self.log_x { " (log scale)" } else { "" }
        );
        let _ = writeln!(
            s,
            r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"#,
            mt + ph / 2.0,
            mt + ph / 2.0,
            escape(&self.y_label)
        );
        for (i, series) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let mut visible: Vec<(f64, f64)> = series
                .points
                .iter()
                .copied()
                .filter(|(x, y)| tx(*x).is_finite() && y.is_finite())
                .map(|(x, y)| (sx(x), sy(y)))
                .collect();
            if series.style == Style::Line {
                visible.sort_by(|a, b| a.0.total_cmp(&b.0));
                let coords: Vec<String> = visible
                    .iter()
                    .map(|(x, y)| format!("{x:.2},{y:.2}"))
                    .collect();
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                    coords.join(" ")
                );
            }
            for (x, y) in &visible {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#
                );
            }
            let ly = mt + 16.0 + 16.0 * i as f64;
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="10" height="10" fill="{color}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
                ml + pw - 150.0,
                ly - 9.0,
                ml + pw - 135.0,
                ly,
                escape(&series.name)
            );
        }
        s.push_str("</svg>\n");
        s
    }

    pub fn write(&self, path: &FsPath) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }
}

/// `t,comp_1..comp_d` blocks, one per path, each preceded by `# path i`.
pub fn paths_table(paths: &[crate::grid::Path]) -> CsvTable {
    let d = paths.first().map_or(1, |p| p.dim());
    let mut header = vec!["t".to_string()];
    header.extend((1..=d).map(|j| format!("comp_{j}")));
    let mut table = CsvTable {
        header,
        ..Default::default()
    };
    for (i, p) in paths.iter().enumerate() {
        table.comment(&format!("path {i}"));
        for k in 0..p.grid().len() {
            let mut row = vec![Cell::Num(p.grid().node(k))];
            row.extend(p.at(k).iter().map(|v| Cell::Num(*v)));
            table.rows.push(row);
        }
    }
    table
}

/// `s,t,empirical,exact,stderr,z`.
pub fn covariance_table(check: &crate::fbm::CovarianceCheck) -> CsvTable {
    let mut table = CsvTable::new(&["s", "t", "empirical", "exact", "stderr", "z"]);
    for r in &check.rows {
        table.push(vec![
            r.s.into(),
            r.t.into(),
            r.empirical.into(),
            r.exact.into(),
            r.stderr.into(),
            r.z_score().into(),
        ]);
    }
    table
}

/// `r,dir_index,upper,optimized,residual,ratio,converged`.
pub fn sweep_table(sweep: &crate::distance::SweepTable) -> CsvTable {
    let mut table = CsvTable::new(&[
        "r",
        "dir_index",
        "upper",
        "optimized",
        "residual",
        "ratio",
        "converged",
    ]);
    for c in &sweep.cells {
        let r = &c.result;
        table.push(vec![
            c.radius.into(),
            c.dir_index.into(),
            r.upper_bound.into(),
            r.optimized.into(),
            r.endpoint_residual.into(),
            r.ratio.into(),
            r.converged.into(),
        ]);
    }
    table
}

/// `iter,h_norm,det,regime,converged`.
pub fn scan_table(scan: &crate::malliavin::ScanResult) -> CsvTable {
    let mut table = CsvTable::new(&["iter", "h_norm", "det", "regime", "converged"]);
    for r in &scan.rows {
        table.push(vec![
            r.iter.into(),
            r.h_norm.into(),
            r.det.into(),
            r.regime.as_str().into(),
            r.converged.into(),
        ]);
    }
    table
}

/// `t,y_offset,phat,stderr,phat_times_tNH,bandwidth`.
pub fn lower_bound_table(lb: &crate::density::LowerBoundTable) -> CsvTable {
    let mut table = CsvTable::new(&[
        "t",
        "y_offset",
        "phat",
        "stderr",
        "phat_times_tNH",
        "bandwidth",
    ]);
    for r in &lb.rows {
        table.push(vec![
            r.t.into(),
            r.y_offset.into(),
            r.estimate.value.into(),
            r.estimate.mc_stderr.into(),
            r.scaled.into(),
            Cell::List(r.estimate.bandwidth.clone()),
        ]);
    }
    table
}
