//! Self-contained SVG renderings of the CSV/JSON artifacts.

use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::io::{write_atomic, Table};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotKind {
    /// decay CSV `t, |v|_H, |v|_V, bound`
    Decay,
    /// observability CSV `M, D_M`
    Staircase,
    /// basin report JSON
    Basin,
}

impl std::str::FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "decay" => Ok(PlotKind::Decay),
            "staircase" => Ok(PlotKind::Staircase),
            "basin" => Ok(PlotKind::Basin),
            other => Err(Error::invalid(
                "kind",
                format!("unknown plot kind {other:?} (decay, staircase, basin)"),
            )),
        }
    }
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

struct Series {
    name: String,
    xs: Vec<f64>,
    ys: Vec<f64>,
    color: &'static str,
    dashed: bool,
    step: bool,
}

struct Axes {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    log_y: bool,
}

impl Axes {
    fn fit(series: &[Series], log_y: bool) -> Axes {
        let xs = series.iter().flat_map(|s| s.xs.iter().cloned()).filter(|x| x.is_finite());
        let ys = series
            .iter()
            .flat_map(|s| s.ys.iter().cloned())
            .filter(|y| y.is_finite() && (!log_y || *y > 0.0))
            .map(|y| if log_y { y.log10() } else { y });
        let (mut x0, mut x1) = min_max(xs).unwrap_or((0.0, 1.0));
        let (mut y0, mut y1) = min_max(ys).unwrap_or((0.0, 1.0));
        if x1 <= x0 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if y1 <= y0 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        if log_y {
            y0 = y0.floor();
            y1 = y1.ceil();
        }
        Axes { x0, x1, y0, y1, log_y }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> Option<f64> {
        let v = if self.log_y {
            if y <= 0.0 || !y.is_finite() {
                return None;
            }
            y.log10()
        } else {
            y
        };
        Some(H - BOTTOM - (v - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM))
    }
}

fn min_max(it: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    it.fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((a, b)) => Some((a.min(v), b.max(v))),
    })
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
}

fn draw_axes(out: &mut String, ax: &Axes, x_label: &str, y_label: &str) {
    let (l, r, t, b) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(
        out,
        r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        r - l,
        b - t
    );
    for i in 0..=5 {
        let x = ax.x0 + (ax.x1 - ax.x0) * i as f64 / 5.0;
        let p = ax.px(x);
        let _ = writeln!(out, r#"<line x1="{p:.2}" y1="{b}" x2="{p:.2}" y2="{}" stroke="black"/>"#, b + 5.0);
        let _ = writeln!(out, r#"<text x="{p:.2}" y="{}" text-anchor="middle">{}</text>"#, b + 18.0, tick(x));
    }
    if ax.log_y {
        let mut d = ax.y0;
        while d <= ax.y1 + 1e-9 {
            let p = ax.py(10f64.powf(d)).unwrap_or(b);
            let _ = writeln!(out, r#"<line x1="{}" y1="{p:.2}" x2="{l}" y2="{p:.2}" stroke="black"/>"#, l - 5.0);
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{:.2}" text-anchor="end">1e{}</text>"#,
                l - 8.0,
                p + 4.0,
                d as i64
            );
            d += ((ax.y1 - ax.y0) / 8.0).ceil().max(1.0);
        }
    } else {
        for i in 0..=5 {
            let y = ax.y0 + (ax.y1 - ax.y0) * i as f64 / 5.0;
            let p = ax.py(y).unwrap_or(b);
            let _ = writeln!(out, r#"<line x1="{}" y1="{p:.2}" x2="{l}" y2="{p:.2}" stroke="black"/>"#, l - 5.0);
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
                l - 8.0,
                p + 4.0,
                tick(y)
            );
        }
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (l + r) / 2.0,
        H - 15.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        (t + b) / 2.0,
        escape(y_label)
    );
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.2}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn draw_series(out: &mut String, ax: &Axes, s: &Series) {
    let mut pts = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for (&x, &y) in s.xs.iter().zip(&s.ys) {
        let Some(py) = ax.py(y) else {
            continue;
        };
        let px = ax.px(x);
        if s.step {
            if let Some((_, ppy)) = prev {
                pts.push((px, ppy));
            }
        }
        pts.push((px, py));
        prev = Some((px, py));
    }
    if pts.is_empty() {
        return;
    }
    let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
    let _ = writeln!(
        out,
        r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"{dash}/>"#,
        path.join(" "),
        s.color
    );
}

fn legend(out: &mut String, series: &[Series]) {
    for (i, s) in series.iter().enumerate() {
        let y = TOP + 16.0 + 16.0 * i as f64;
        let x = W - RIGHT - 150.0;
        let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            out,
            r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="1.5"{dash}/>"#,
            x + 24.0,
            s.color
        );
        let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, x + 30.0, y + 4.0, escape(&s.name));
    }
}

fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series], log_y: bool) -> String {
    let ax = Axes::fit(series, log_y);
    let mut out = String::new();
    header(&mut out, title);
    draw_axes(&mut out, &ax, x_label, y_label);
    for s in series {
        draw_series(&mut out, &ax, s);
    }
    legend(&mut out, series);
    out.push_str("</svg>\n");
    out
}

fn need(table: &Table, name: &str) -> Result<Vec<f64>> {
    table
        .column(name)
        .ok_or_else(|| Error::Schema(format!("missing column {name:?} (have {:?})", table.header)))
}

/// Decay curve in H norm with the `kappa e^{-lambda t}` envelope.
pub fn decay_svg(table: &Table) -> Result<String> {
    let mut series = Vec::new();
    if !table.header.is_empty() {
        let t = need(table, "t")?;
        series.push(Series {
            name: "|v|_H".into(),
            xs: t.clone(),
            ys: need(table, "|v|_H")?,
            color: "#1f77b4",
            dashed: false,
            step: false,
        });
        series.push(Series {
            name: "envelope".into(),
            xs: t,
            ys: need(table, "bound")?,
            color: "#d62728",
            dashed: true,
            step: false,
        });
    }
    Ok(line_plot("Decay", "t", "|v|_H", &series, true))
}

/// `D(M)` against `M` as a step plot.
pub fn staircase_svg(table: &Table) -> Result<String> {
    let mut series = Vec::new();
    if !table.header.is_empty() {
        series.push(Series {
            name: "D(M)".into(),
            xs: need(table, "M")?,
            ys: need(table, "D_M")?,
            color: "#2ca02c",
            dashed: false,
            step: true,
        });
    }
    Ok(line_plot("Truncated observability constant", "M", "D(M)", &series, true))
}

#[derive(Deserialize)]
struct BasinJson {
    scales: Vec<f64>,
    outcomes: Vec<Vec<String>>,
    epsilon_hat: f64,
}

/// Outcome heatmap: rows are scales, columns directions.
pub fn basin_svg(json: &str) -> Result<String> {
    let b: BasinJson = serde_json::from_str(json).map_err(|e| Error::Schema(format!("basin report: {e}")))?;
    if b.outcomes.len() != b.scales.len() {
        return Err(Error::Schema("basin report: one outcome row per scale expected".into()));
    }
    let mut out = String::new();
    header(&mut out, "Basin of decay");
    let rows = b.scales.len().max(1);
    let cols = b.outcomes.iter().map(|r| r.len()).max().unwrap_or(0).max(1);
    let (l, r, t, bt) = (LEFT, W - RIGHT - 120.0, TOP, H - BOTTOM);
    let cw = (r - l) / cols as f64;
    let ch = (bt - t) / rows as f64;
    for (i, row) in b.outcomes.iter().enumerate() {
        let y = bt - (i + 1) as f64 * ch;
        for (j, o) in row.iter().enumerate() {
            let color = match o.as_str() {
                "decay" => "#2ca02c",
                "no_decay" => "#ff7f0e",
                "blow_up" => "#d62728",
                other => return Err(Error::Schema(format!("basin report: unknown outcome {other:?}"))),
            };
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{y:.2}" width="{cw:.2}" height="{ch:.2}" fill="{color}" stroke="white"/>"#,
                l + j as f64 * cw
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            l - 8.0,
            y + ch / 2.0 + 4.0,
            tick(b.scales[i])
        );
    }
    let _ = writeln!(
        out,
        r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        r - l,
        bt - t
    );
    if let Some(i) = b.scales.iter().position(|&s| s == b.epsilon_hat) {
        let y = bt - (i + 1) as f64 * ch;
        let _ = writeln!(
            out,
            r#"<line x1="{l}" y1="{y:.2}" x2="{r}" y2="{y:.2}" stroke="black" stroke-width="2" stroke-dasharray="6 4"/>"#
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">direction</text>"#,
        (l + r) / 2.0,
        H - 15.0
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">|v0|_V</text>"#,
        (t + bt) / 2.0
    );
    for (k, (name, color)) in [("decay", "#2ca02c"), ("no decay", "#ff7f0e"), ("blow-up", "#d62728")]
        .iter()
        .enumerate()
    {
        let y = t + 10.0 + 18.0 * k as f64;
        let _ = writeln!(out, r#"<rect x="{}" y="{y}" width="12" height="12" fill="{color}"/>"#, r + 12.0);
        let _ = writeln!(out, r#"<text x="{}" y="{}">{name}</text>"#, r + 30.0, y + 10.0);
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}">eps_hat = {}</text>"#,
        r + 12.0,
        t + 80.0,
        tick(b.epsilon_hat)
    );
    out.push_str("</svg>\n");
    Ok(out)
}

/// Renders `input` as `kind` into `output`.
pub fn emit_plot(input: &Path, kind: PlotKind, output: &Path) -> Result<()> {
    let svg = match kind {
        PlotKind::Decay => decay_svg(&Table::read(input)?)?,
        PlotKind::Staircase => staircase_svg(&Table::read(input)?)?,
        PlotKind::Basin => basin_svg(&std::fs::read_to_string(input)?)?,
    };
    write_atomic(output, svg.as_bytes())
}
