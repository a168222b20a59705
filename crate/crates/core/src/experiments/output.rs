//! CSV, SVG and run-record writers.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::{ResultRow, ResultTable, RunMetadata};
use crate::error::{Error, Result};

/// Column order of `results.csv`.
pub const CSV_HEADER: &str =
    "sample_size,alpha,rmse,rmse_se,mean_rre,rre_se,recovery,recovery_se,replications,converged,excluded";

const ASYMPTOTIC: &str = "asymptotic";

fn csv_string(rows: &[ResultRow]) -> String {
    let mut s = String::with_capacity(64 * (rows.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in rows {
        match r.sample_size {
            Some(n) => write!(s, "{n}"),
            None => write!(s, "{ASYMPTOTIC}"),
        }
        .unwrap();
        for v in [r.alpha, r.rmse, r.rmse_se, r.mean_rre, r.rre_se, r.recovery, r.recovery_se] {
            write!(s, ",{v:.16e}").unwrap();
        }
        writeln!(s, ",{},{},{}", r.replications, r.converged, r.excluded).unwrap();
    }
    s
}

/// Writes the table's rows as CSV with 17 significant digits per float.
pub fn emit_csv(table: &ResultTable, path: &Path) -> Result<()> {
    fs::write(path, csv_string(&table.rows))?;
    Ok(())
}

fn field<T: FromStr>(s: &str, line: usize) -> Result<T> {
    s.parse()
        .map_err(|_| Error::ConfigInvalid(format!("results line {line}: cannot parse '{s}'")))
}

/// Parses the output of [`emit_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::ConfigInvalid("results file has an unexpected header".into()));
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            let line = i + 2;
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 11 {
                return Err(Error::ConfigInvalid(format!("results line {line}: expected 11 fields")));
            }
            Ok(ResultRow {
                sample_size: if f[0] == ASYMPTOTIC { None } else { Some(field(f[0], line)?) },
                alpha: field(f[1], line)?,
                rmse: field(f[2], line)?,
                rmse_se: field(f[3], line)?,
                mean_rre: field(f[4], line)?,
                rre_se: field(f[5], line)?,
                recovery: field(f[6], line)?,
                recovery_se: field(f[7], line)?,
                replications: field(f[8], line)?,
                converged: field(f[9], line)?,
                excluded: field(f[10], line)?,
            })
        })
        .collect()
}

/// Writes `metadata.json`.
pub fn write_metadata(meta: &RunMetadata, path: &Path) -> Result<()> {
    let mut s = serde_json::to_string_pretty(meta)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

/// Plotted quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Rmse,
    Rre,
    Recovery,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Rmse, Metric::Rre, Metric::Recovery];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Rmse => "rmse",
            Metric::Rre => "rre",
            Metric::Recovery => "recovery",
        }
    }

    fn label(self) -> &'static str {
        match self {
            Metric::Rmse => "RMSE",
            Metric::Rre => "mean relative residual error",
            Metric::Recovery => "pattern recovery probability",
        }
    }

    fn value(self, r: &ResultRow) -> f64 {
        match self {
            Metric::Rmse => r.rmse,
            Metric::Rre => r.mean_rre,
            Metric::Recovery => r.recovery,
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::ConfigInvalid(format!("unknown metric '{s}'")))
    }
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// SVG document: one curve over `α` per sample size plus a dashed curve for
/// the limit law.
pub(crate) fn plot_svg(table: &ResultTable, metric: Metric) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 150.0, 30.0, 50.0);
    let mut groups: Vec<Option<usize>> = Vec::new();
    for r in &table.rows {
        if !groups.contains(&r.sample_size) {
            groups.push(r.sample_size);
        }
    }
    // Limit law last.
    groups.sort_by_key(|g| g.is_none());
    let xs: Vec<f64> = table.rows.iter().map(|r| r.alpha).collect();
    let ys: Vec<f64> = table.rows.iter().map(|r| metric.value(r)).filter(|v| v.is_finite()).collect();
    let range = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-12 {
            (lo - 0.5, hi + 0.5)
        } else {
            let pad = 0.05 * (hi - lo);
            (lo - pad, hi + pad)
        }
    };
    let (x0, x1) = range(&xs);
    let (y0, y1) = range(&ys);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r##"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##
    )
    .unwrap();
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        writeln!(
            s,
            r##"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="#444"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{xv:.3}</text>"##,
            top + ph,
            top + ph + 5.0,
            top + ph + 18.0
        )
        .unwrap();
        writeln!(
            s,
            r##"<line x1="{:.2}" y1="{py:.2}" x2="{left}" y2="{py:.2}" stroke="#444"/><text x="{:.2}" y="{:.2}" text-anchor="end">{yv:.3}</text>"##,
            left - 5.0,
            left - 8.0,
            py + 4.0
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">α</text>"#,
        left + pw / 2.0,
        h - 10.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        metric.label()
    )
    .unwrap();
    for (gi, g) in groups.iter().enumerate() {
        let color = if g.is_none() { "#000000" } else { PALETTE[gi % PALETTE.len()] };
        let dash = if g.is_none() { r#" stroke-dasharray="6 4""# } else { "" };
        let name = match g {
            Some(n) => format!("n = {n}"),
            None => "asymptotic".to_string(),
        };
        let pts: Vec<(f64, f64)> = table
            .rows
            .iter()
            .filter(|r| &r.sample_size == g)
            .map(|r| (r.alpha, metric.value(r)))
            .filter(|p| p.1.is_finite())
            .collect();
        writeln!(s, r#"<g class="curve" data-name="{name}">"#).unwrap();
        if pts.len() > 1 {
            let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"{dash}/>"#,
                path.join(" ")
            )
            .unwrap();
        }
        for &(x, y) in &pts {
            writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(x), sy(y)).unwrap();
        }
        writeln!(s, "</g>").unwrap();
        let ly = top + 10.0 + 18.0 * gi as f64;
        let lx = w - right + 15.0;
        writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{:.2}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/><text x="{:.2}" y="{:.2}">{name}</text>"#,
            lx + 25.0,
            lx + 30.0,
            ly + 4.0
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// Writes a self-contained SVG line chart of `metric` against `α`.
pub fn emit_plot(table: &ResultTable, metric: Metric, path: &Path) -> Result<()> {
    fs::write(path, plot_svg(table, metric))?;
    Ok(())
}
