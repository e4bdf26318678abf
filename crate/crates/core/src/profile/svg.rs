//! Deterministic radar-chart SVG.

use std::fmt::Write;

use super::NormalizedProfile;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SvgStyle {
    /// Width of the square plot area, in user units.
    pub size: f64,
    pub palette: Vec<String>,
    pub title: Option<String>,
}

impl Default for SvgStyle {
    fn default() -> Self {
        Self {
            size: 480.0,
            palette: ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"]
                .map(String::from)
                .to_vec(),
            title: None,
        }
    }
}

const RINGS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];
const LEGEND_ROW: f64 = 18.0;

/// Three decimals, with negative zero printed as `0.000`.
fn num(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Axis `k` of `n` points at `90° + k·360°/n`, counterclockwise from the top.
fn vertex(cx: f64, cy: f64, r: f64, k: usize, n: usize, score: f64) -> (f64, f64) {
    let theta = (90.0 + k as f64 * 360.0 / n as f64).to_radians();
    (cx + r * score * theta.cos(), cy - r * score * theta.sin())
}

/// Renders one closed polygon per profile over `axis_names`, with a legend.
pub fn emit_radar_svg(axis_names: &[&str], profiles: &[NormalizedProfile], style: &SvgStyle) -> Result<String> {
    let n = axis_names.len();
    if !(3..=8).contains(&n) {
        return Err(Error::AxisSpec(format!("radar needs 3 to 8 axes, got {n}")));
    }
    if profiles.is_empty() {
        return Err(Error::AxisSpec("radar needs at least one profile".into()));
    }
    if style.palette.is_empty() {
        return Err(Error::AxisSpec("empty palette".into()));
    }
    for p in profiles {
        if p.scores.len() != n {
            return Err(Error::AxisSpec(format!(
                "{} has {} scores for {n} axes",
                p.model_name,
                p.scores.len()
            )));
        }
        if !p.scores.iter().all(|s| (0.0..=1.0).contains(s)) {
            return Err(Error::AxisSpec(format!("{} has scores outside [0, 1]", p.model_name)));
        }
    }

    let size = style.size;
    let top = if style.title.is_some() { 30.0 } else { 0.0 };
    let (cx, cy, r) = (size / 2.0, top + size / 2.0, size * 0.35);
    let height = top + size + LEGEND_ROW * profiles.len() as f64 + 10.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#,
        w = num(size),
        h = num(height)
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{}" height="{}" fill="white"/>"#, num(size), num(height));
    if let Some(title) = &style.title {
        let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, num(cx), escape(title));
    }

    let _ = writeln!(s, r##"<g class="grid" fill="none" stroke="#cccccc">"##);
    for ring in RINGS {
        let _ = writeln!(s, r#"<circle cx="{}" cy="{}" r="{}"/>"#, num(cx), num(cy), num(r * ring));
    }
    for k in 0..n {
        let (x, y) = vertex(cx, cy, r, k, n, 1.0);
        let _ = writeln!(s, r#"<line x1="{}" y1="{}" x2="{}" y2="{}"/>"#, num(cx), num(cy), num(x), num(y));
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r#"<g class="axis-labels" text-anchor="middle">"#);
    for (k, name) in axis_names.iter().enumerate() {
        let (x, y) = vertex(cx, cy, r, k, n, 1.15);
        let _ = writeln!(s, r#"<text x="{}" y="{}" dominant-baseline="middle">{}</text>"#, num(x), num(y), escape(name));
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r#"<g class="profiles" fill-opacity="0.15" stroke-width="2">"#);
    for (i, p) in profiles.iter().enumerate() {
        let color = &style.palette[i % style.palette.len()];
        let points: Vec<String> = p
            .scores
            .iter()
            .enumerate()
            .map(|(k, &sc)| {
                let (x, y) = vertex(cx, cy, r, k, n, sc);
                format!("{},{}", num(x), num(y))
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polygon points="{}" fill="{c}" stroke="{c}"><title>{}</title></polygon>"#,
            points.join(" "),
            escape(&p.model_name),
            c = escape(color)
        );
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r#"<g class="legend">"#);
    for (i, p) in profiles.iter().enumerate() {
        let color = &style.palette[i % style.palette.len()];
        let y = top + size + LEGEND_ROW * i as f64;
        let _ = writeln!(s, r#"<rect x="10" y="{}" width="12" height="12" fill="{}"/>"#, num(y), escape(color));
        let _ = writeln!(s, r#"<text x="28" y="{}">{}</text>"#, num(y + 10.0), escape(&p.model_name));
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    Ok(s)
}
