use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// A y column, optionally with a symmetric error column.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub y: String,
    pub err: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChartSpec {
    pub title: String,
    pub x: String,
    pub series: Vec<Series>,
    pub x_label: String,
    pub y_label: String,
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 52.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// Points `(x, y, err)` of one series.
type Points = Vec<(f64, f64, f64)>;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let n = if f <= 1.0 {
        1.0
    } else if f <= 2.0 {
        2.0
    } else if f <= 5.0 {
        5.0
    } else {
        10.0
    };
    n * mag
}

fn range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    if lo > hi {
        return None;
    }
    Some(if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    })
}

/// Reads the chart columns from a CSV file and writes an SVG.
pub fn emit_chart(csv_path: &Path, spec: &ChartSpec, svg_path: &Path) -> Result<()> {
    let mut rdr = csv::Reader::from_path(csv_path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Chart(format!("missing column '{name}'")))
    };
    let xi = col(&spec.x)?;
    let cols: Vec<(usize, Option<usize>)> = spec
        .series
        .iter()
        .map(|s| Ok((col(&s.y)?, s.err.as_deref().map(col).transpose()?)))
        .collect::<Result<_>>()?;
    let mut data: Vec<Points> = vec![Vec::new(); cols.len()];
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| {
            rec.get(i)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .filter(|v| v.is_finite())
        };
        let Some(x) = num(xi) else { continue };
        for (pts, &(yi, ei)) in data.iter_mut().zip(&cols) {
            if let Some(y) = num(yi) {
                pts.push((x, y, ei.and_then(num).unwrap_or(0.0)));
            }
        }
    }
    std::fs::write(svg_path, render_chart(spec, &data))?;
    Ok(())
}

/// Renders series data; layout depends only on the inputs.
pub fn render_chart(spec: &ChartSpec, data: &[Points]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(&spec.title)
    );
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(
        s,
        r#"<line x1="{x0}" y1="{y1}" x2="{x1}" y2="{y1}" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        H - 12.0,
        escape(&spec.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{cy}" text-anchor="middle" transform="rotate(-90 16 {cy})">{}</text>"#,
        escape(&spec.y_label),
        cy = (y0 + y1) / 2.0
    );

    let all = || data.iter().flatten();
    let (Some((xa, xb)), Some((ya, yb))) = (
        range(all().map(|p| p.0)),
        range(all().flat_map(|p| [p.1 - p.2, p.1 + p.2])),
    ) else {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle" fill="gray">no data</text>"#,
            (x0 + x1) / 2.0,
            (y0 + y1) / 2.0
        );
        s.push_str("</svg>\n");
        return s;
    };
    let px = |x: f64| x0 + (x - xa) / (xb - xa) * (x1 - x0);
    let py = |y: f64| y1 - (y - ya) / (yb - ya) * (y1 - y0);

    let step = nice_step(yb - ya);
    let mut t = (ya / step).ceil() * step;
    while t <= yb + 1e-12 * step.abs() {
        let v = if t.abs() < 1e-12 * step { 0.0 } else { t };
        let _ = writeln!(
            s,
            r##"<line x1="{x0}" y1="{y:.2}" x2="{x1}" y2="{y:.2}" stroke="#dddddd"/>"##,
            y = py(v)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 6.0,
            py(v) + 4.0,
            fmt_tick(v, step)
        );
        t += step;
    }
    if ya < 0.0 && yb > 0.0 {
        let _ = writeln!(
            s,
            r#"<line class="zero" x1="{x0}" y1="{y:.2}" x2="{x1}" y2="{y:.2}" stroke="gray"/>"#,
            y = py(0.0)
        );
    }
    let xstep = nice_step(xb - xa);
    let mut t = (xa / xstep).ceil() * xstep;
    while t <= xb + 1e-12 * xstep {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            px(t),
            y1 + 16.0,
            fmt_tick(t, xstep)
        );
        t += xstep;
    }

    for (i, (pts, ser)) in data.iter().zip(&spec.series).enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut sorted = pts.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let path: Vec<String> = sorted
            .iter()
            .map(|p| format!("{:.2},{:.2}", px(p.0), py(p.1)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            path.join(" ")
        );
        for p in &sorted {
            if p.2 > 0.0 {
                let _ = writeln!(
                    s,
                    r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="{color}"/>"#,
                    py(p.1 - p.2),
                    py(p.1 + p.2),
                    x = px(p.0)
                );
            }
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                px(p.0),
                py(p.1)
            );
        }
        let ly = y0 + 10.0 + 18.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            x1 + 12.0,
            x1 + 32.0
        );
        let _ = writeln!(
            s,
            r#"<text class="legend" x="{}" y="{}">{}</text>"#,
            x1 + 38.0,
            ly + 4.0,
            escape(&ser.y)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64, step: f64) -> String {
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    format!("{v:.decimals$}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(series: &[&str]) -> ChartSpec {
        ChartSpec {
            title: "t".into(),
            x: "x".into(),
            series: series
                .iter()
                .map(|y| Series {
                    y: y.to_string(),
                    err: None,
                })
                .collect(),
            x_label: "x".into(),
            y_label: "y".into(),
        }
    }

    #[test]
    fn empty_series_reports_no_data() {
        let svg = render_chart(&spec(&["a"]), &[vec![]]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("no data") && svg.contains("<line"));
    }

    #[test]
    fn legend_follows_column_order() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("d.csv");
        std::fs::write(&csv, "x,beta,alpha\n0,1,2\n1,2,3\n").unwrap();
        let svg_path = dir.path().join("c.svg");
        emit_chart(&csv, &spec(&["beta", "alpha"]), &svg_path).unwrap();
        let svg = std::fs::read_to_string(&svg_path).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.find(">beta<").unwrap() < svg.find(">alpha<").unwrap());
        assert!(!svg.contains("href"));
    }

    #[test]
    fn zero_gridline_when_spanning_zero() {
        let svg = render_chart(&spec(&["a"]), &[vec![(0.0, -1.0, 0.0), (1.0, 2.0, 0.0)]]);
        assert!(svg.contains(r#"class="zero""#));
        let svg = render_chart(&spec(&["a"]), &[vec![(0.0, 1.0, 0.0), (1.0, 2.0, 0.0)]]);
        assert!(!svg.contains(r#"class="zero""#));
    }

    #[test]
    fn missing_column_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("d.csv");
        std::fs::write(&csv, "x,a\n0,1\n").unwrap();
        let r = emit_chart(&csv, &spec(&["b"]), &dir.path().join("c.svg"));
        assert!(matches!(r, Err(Error::Chart(_))));
    }

    #[test]
    fn deterministic_layout() {
        let d = vec![vec![(0.1, 0.5, 0.05), (0.6, 0.2, 0.02)]];
        assert_eq!(
            render_chart(&spec(&["a"]), &d),
            render_chart(&spec(&["a"]), &d)
        );
    }
}
