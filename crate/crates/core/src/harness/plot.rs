//! Line plots as standalone SVG.
//!
//! `profile` reads `x,u[,w]` snapshot CSVs, `series` reads `t,tv_u[,tv_w]`
//! diagnostics CSVs. Output depends only on the input bytes.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Profile,
    Series,
}

impl PlotKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "profile" => Ok(PlotKind::Profile),
            "series" => Ok(PlotKind::Series),
            other => Err(Error::config(format!("unknown plot kind `{other}` (known: profile, series)"))),
        }
    }

    fn columns(self) -> (&'static str, &'static [&'static str], &'static [&'static str]) {
        match self {
            PlotKind::Profile => ("x", &["u"], &["w"]),
            PlotKind::Series => ("t", &["tv_u"], &["tv_w"]),
        }
    }
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 130.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 2] = ["#1f5fbf", "#c0392b"];

struct Series {
    name: String,
    points: Vec<(f64, f64)>,
}

fn parse_cell(s: &str, col: &str, row: usize) -> Result<Option<f64>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| Error::Parse(format!("row {row}, column `{col}`: not a number: {s:?}")))
}

/// Renders CSV text as an SVG document.
pub fn render_plot(csv_text: &str, kind: PlotKind) -> Result<String> {
    let mut rdr = csv::Reader::from_reader(csv_text.as_bytes());
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (xname, required, optional) = kind.columns();
    let xi = col(xname).ok_or_else(|| Error::Parse(format!("missing column `{xname}`")))?;
    let mut wanted = Vec::new();
    for &c in required {
        let i = col(c).ok_or_else(|| Error::Parse(format!("missing column `{c}`")))?;
        wanted.push((c, i));
    }
    for &c in optional {
        if let Some(i) = col(c) {
            wanted.push((c, i));
        }
    }

    let mut series: Vec<Series> = wanted
        .iter()
        .map(|(c, _)| Series { name: c.to_string(), points: Vec::new() })
        .collect();
    let mut n_rows = 0;
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        n_rows += 1;
        let Some(x) = parse_cell(rec.get(xi).unwrap_or(""), xname, r + 1)? else {
            return Err(Error::Parse(format!("row {}: empty `{xname}`", r + 1)));
        };
        for (s, &(c, i)) in series.iter_mut().zip(&wanted) {
            if let Some(y) = parse_cell(rec.get(i).unwrap_or(""), c, r + 1)? {
                if y.is_finite() {
                    s.points.push((x, y));
                }
            }
        }
    }
    if n_rows == 0 {
        return Err(Error::Parse("no data rows".into()));
    }
    series.retain(|s| !s.points.is_empty());
    if series.is_empty() {
        return Err(Error::Parse(format!("column `{}` has no values", required[0])));
    }
    Ok(draw(&series, xname, kind))
}

/// Reads `csv_path` and writes the plot to `out_svg`.
pub fn emit_plot(csv_path: &Path, kind: PlotKind, out_svg: &Path) -> Result<()> {
    let text = std::fs::read_to_string(csv_path)?;
    let svg = render_plot(&text, kind)?;
    std::fs::write(out_svg, svg)?;
    Ok(())
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if hi - lo > 1e-12 * (1.0 + lo.abs().max(hi.abs())) {
        let pad = 0.04 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        let pad = 0.5 * lo.abs().max(1.0);
        (lo - pad, hi + pad)
    }
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

fn label(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e4).contains(&a) {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        if s == "-0" { "0".into() } else { s.to_string() }
    }
}

fn draw(series: &[Series], xname: &str, kind: PlotKind) -> String {
    let (x0, x1) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(s, "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"black\"/>"
    );
    for t in ticks(x0, x1) {
        let x = sx(t);
        let _ = writeln!(
            s,
            "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"black\"/><text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 19.0,
            label(t)
        );
    }
    for t in ticks(y0, y1) {
        let y = sy(t);
        let _ = writeln!(
            s,
            "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{LEFT}\" y2=\"{y:.2}\" stroke=\"black\"/><text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>",
            LEFT - 5.0,
            LEFT - 8.0,
            y + 4.0,
            label(t)
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{xname}</text>",
        LEFT + pw / 2.0,
        HEIGHT - 15.0
    );
    let ylabel = match kind {
        PlotKind::Profile => "density",
        PlotKind::Series => "total variation",
    };
    let _ = writeln!(
        s,
        "<text x=\"20\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 20 {:.2})\">{ylabel}</text>",
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );
    for (k, ser) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut pts = String::new();
        for (i, &(x, y)) in ser.points.iter().enumerate() {
            if i > 0 {
                pts.push(' ');
            }
            let _ = write!(pts, "{:.2},{:.2}", sx(x), sy(y));
        }
        let _ = writeln!(
            s,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{pts}\"/>"
        );
        let ly = TOP + 10.0 + 20.0 * k as f64;
        let lx = LEFT + pw + 15.0;
        let _ = writeln!(
            s,
            "<line x1=\"{lx:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" stroke=\"{color}\" stroke-width=\"2\"/><text x=\"{:.2}\" y=\"{:.2}\">{}</text>",
            lx + 25.0,
            lx + 31.0,
            ly + 4.0,
            ser.name
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const PROFILE: &str = "x,u,w\n0,0.1,0.2\n0.5,0.4,0.3\n1,0.9,0.8\n";

    #[test]
    fn profile_has_both_series_and_is_deterministic() {
        let a = render_plot(PROFILE, PlotKind::Profile).unwrap();
        let b = render_plot(PROFILE, PlotKind::Profile).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.matches("<polyline").count(), 2);
        assert!(a.contains(">u</text>") && a.contains(">w</text>") && a.contains(">x</text>"));
    }

    #[test]
    fn empty_optional_column_is_dropped() {
        let svg = render_plot("x,u,w\n0,0.1,\n1,0.2,\n", PlotKind::Profile).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
    }

    #[test]
    fn header_only_is_an_error() {
        let e = render_plot("t,tv_u,tv_w\n", PlotKind::Series).unwrap_err();
        assert!(e.to_string().contains("no data rows"), "{e}");
    }

    #[test]
    fn missing_column_is_named() {
        let e = render_plot("t,tv_u\n0,1\n", PlotKind::Profile).unwrap_err();
        assert!(e.to_string().contains("missing column `x`"), "{e}");
        let e = render_plot("t,mass\n0,1\n", PlotKind::Series).unwrap_err();
        assert!(e.to_string().contains("missing column `tv_u`"), "{e}");
    }

    #[test]
    fn constant_series_gets_a_range() {
        let svg = render_plot("t,tv_u\n0,1\n1,1\n", PlotKind::Series).unwrap();
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }

    #[test]
    fn tick_labels() {
        assert_eq!(label(0.5), "0.5");
        assert_eq!(label(2.0), "2");
        assert_eq!(label(1e-5), "1.00e-5");
        assert_eq!(ticks(0.0, 1.0).len(), 6);
    }
}
