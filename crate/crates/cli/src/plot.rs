//! Static SVG figures of reconstructed profiles: one panel per pipe, the true
//! profile as a solid line and each reconstruction dashed. Output depends only
//! on the inputs, byte for byte.

use std::fmt::Write;
use std::path::Path;

use pipescope_core::inversion::offset_from_far_end;
use pipescope_core::Network;

use crate::error::CliError;
use crate::settings::read_to_string;

const WIDTH: f64 = 720.0;
const PANEL_HEIGHT: f64 = 260.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 36.0;
const MARGIN_BOTTOM: f64 = 44.0;
const TICKS: usize = 5;
const TRUTH_SAMPLES: usize = 400;
const PALETTE: [&str; 6] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Area,
    Volume,
}

impl Kind {
    fn axis_label(self) -> &'static str {
        match self {
            Kind::Area => "A (m²)",
            Kind::Volume => "V (m³)",
        }
    }
}

/// One profile CSV: `pipe,x_m,A_m2` or `pipe,x_m,V_m3`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub label: String,
    pub kind: Kind,
    pub rows: Vec<(String, f64, f64)>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let label = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        Self::parse(&read_to_string(path)?, label).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str, label: String) -> Result<Self, String> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let kind = match lines.next().map(str::trim) {
            Some("pipe,x_m,A_m2") => Kind::Area,
            Some("pipe,x_m,V_m3") => Kind::Volume,
            Some(other) => return Err(format!("unrecognised header `{other}`")),
            None => return Err("empty file".into()),
        };
        let rows = lines
            .enumerate()
            .map(|(n, line)| {
                let bad = |what: &str| format!("row {}: {what}", n + 1);
                let f: Vec<&str> = line.split(',').map(str::trim).collect();
                let [pipe, x, v] = f[..] else {
                    return Err(bad("expected 3 fields"));
                };
                let x: f64 = x.parse().map_err(|_| bad("bad position"))?;
                let v: f64 = v.parse().map_err(|_| bad("bad value"))?;
                if !(x.is_finite() && v.is_finite()) {
                    return Err(bad("non-finite value"));
                }
                Ok((pipe.to_string(), x, v))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if rows.is_empty() {
            return Err("no data rows".into());
        }
        Ok(Self { label, kind, rows })
    }
}

struct Series {
    color: &'static str,
    dashed: bool,
    points: Vec<(f64, f64)>,
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        PANEL_HEIGHT - MARGIN_BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (PANEL_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    let span = hi - lo;
    let scale = hi.abs().max(lo.abs()).max(1.0);
    if span > 1e-3 * scale {
        (lo - 0.08 * span, hi + 0.08 * span)
    } else {
        // Effectively flat: centre it in a band of ±10 % of its magnitude.
        let mid = 0.5 * (lo + hi);
        (mid - 0.1 * scale, mid + 0.1 * scale)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Tick label with at most four significant decimals and no trailing zeros.
fn label(v: f64) -> String {
    let s = format!("{:.4}", if v.abs() < 5e-5 { 0.0 } else { v });
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn truth_curve(net: &Network, pipe: usize, kind: Kind, xmax: f64) -> Vec<(f64, f64)> {
    let p = net.pipe(pipe);
    let far = offset_from_far_end(net, pipe, 0.0);
    (0..=TRUTH_SAMPLES)
        .map(|k| {
            let d = xmax * k as f64 / TRUTH_SAMPLES as f64;
            let off = offset_from_far_end(net, pipe, d).clamp(0.0, p.length);
            let v = match kind {
                Kind::Area => p.area.at(off),
                Kind::Volume => p.area.integral(far.min(off), far.max(off)),
            };
            (d, v)
        })
        .collect()
}

/// Renders every pipe found in the tables, in order of first appearance.
pub fn render(tables: &[Table], truth: Option<&Network>) -> Result<String, CliError> {
    let kind = tables.first().map(|t| t.kind).ok_or_else(|| CliError::Config("no input tables".into()))?;
    if tables.iter().any(|t| t.kind != kind) {
        return Err(CliError::Config("cannot mix area and volume tables in one plot".into()));
    }
    let mut pipes: Vec<&str> = Vec::new();
    for (pipe, _, _) in tables.iter().flat_map(|t| &t.rows) {
        if !pipes.contains(&pipe.as_str()) {
            pipes.push(pipe);
        }
    }
    let height = PANEL_HEIGHT * pipes.len() as f64;
    let mut svg = String::new();
    let w = &mut svg;
    writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(w, r#"<rect width="{WIDTH}" height="{height}" fill="white"/>"#).unwrap();

    for (n, pipe) in pipes.iter().enumerate() {
        let mut series: Vec<Series> = tables
            .iter()
            .enumerate()
            .map(|(i, t)| Series {
                color: PALETTE[i % PALETTE.len()],
                dashed: true,
                points: t.rows.iter().filter(|r| r.0 == *pipe).map(|r| (r.1, r.2)).collect(),
            })
            .collect();
        let xmax = series.iter().flat_map(|s| &s.points).map(|p| p.0).fold(0.0, f64::max);
        if let Some(net) = truth {
            let idx = net
                .pipe_index(pipe)
                .map_err(|_| CliError::Config(format!("pipe `{pipe}` is not in the truth network")))?;
            series.insert(
                0,
                Series {
                    color: "black",
                    dashed: false,
                    points: truth_curve(net, idx, kind, xmax),
                },
            );
        }
        let ys = series.iter().flat_map(|s| &s.points).map(|p| p.1);
        let (lo, hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), y| (lo.min(y), hi.max(y)));
        let frame = Frame {
            x: if xmax > 0.0 { (0.0, xmax) } else { (0.0, 1.0) },
            y: padded(lo, hi),
        };
        panel(w, n, pipe, kind, &frame, &series, tables, truth.is_some());
    }
    writeln!(w, "</svg>").unwrap();
    Ok(svg)
}

#[allow(clippy::too_many_arguments)]
fn panel(
    w: &mut String,
    n: usize,
    pipe: &str,
    kind: Kind,
    f: &Frame,
    series: &[Series],
    tables: &[Table],
    with_truth: bool,
) {
    let (x0, x1) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let (y0, y1) = (MARGIN_TOP, PANEL_HEIGHT - MARGIN_BOTTOM);
    writeln!(w, r#"<g transform="translate(0,{:.2})">"#, n as f64 * PANEL_HEIGHT).unwrap();
    writeln!(w, r#"<text x="{x0}" y="20" font-size="13" font-weight="bold">{}</text>"#, escape(pipe)).unwrap();
    writeln!(
        w,
        r##"<rect x="{x0}" y="{y0}" width="{:.2}" height="{:.2}" fill="none" stroke="#888"/>"##,
        x1 - x0,
        y1 - y0
    )
    .unwrap();
    for k in 0..=TICKS {
        let xv = f.x.0 + (f.x.1 - f.x.0) * k as f64 / TICKS as f64;
        let yv = f.y.0 + (f.y.1 - f.y.0) * k as f64 / TICKS as f64;
        let (px, py) = (f.px(xv), f.py(yv));
        writeln!(w, r##"<line x1="{px:.2}" y1="{y1}" x2="{px:.2}" y2="{:.2}" stroke="#888"/>"##, y1 + 4.0).unwrap();
        writeln!(w, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, y1 + 16.0, label(xv)).unwrap();
        writeln!(w, r##"<line x1="{:.2}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="#888"/>"##, x0 - 4.0).unwrap();
        writeln!(w, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, x0 - 6.0, py + 4.0, label(yv)).unwrap();
    }
    writeln!(
        w,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">distance from far end (m)</text>"#,
        0.5 * (x0 + x1),
        PANEL_HEIGHT - 8.0
    )
    .unwrap();
    writeln!(
        w,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">{}</text>"#,
        0.5 * (y0 + y1),
        0.5 * (y0 + y1),
        kind.axis_label()
    )
    .unwrap();
    for s in series.iter().filter(|s| !s.points.is_empty()) {
        let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y))).collect();
        let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        writeln!(
            w,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5"{dash} points="{}"/>"#,
            s.color,
            pts.join(" ")
        )
        .unwrap();
    }
    if n == 0 {
        let labels = with_truth
            .then_some(("truth", "black", false))
            .into_iter()
            .chain(tables.iter().enumerate().map(|(i, t)| (t.label.as_str(), PALETTE[i % PALETTE.len()], true)));
        for (k, (text, color, dashed)) in labels.enumerate() {
            let y = y0 + 14.0 + 14.0 * k as f64;
            let dash = if dashed { r#" stroke-dasharray="6 4""# } else { "" };
            writeln!(
                w,
                r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="1.5"{dash}/>"#,
                x1 - 150.0,
                x1 - 120.0
            )
            .unwrap();
            writeln!(w, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, x1 - 114.0, y + 4.0, escape(text)).unwrap();
        }
    }
    writeln!(w, "</g>").unwrap();
}
