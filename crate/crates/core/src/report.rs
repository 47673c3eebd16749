//! Static RD plots (SVG) and point tables (CSV).

use std::fmt::Write;

use thiserror::Error;

use crate::bd::RDPoint;

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("nothing to plot")]
    Empty,
    #[error("curve '{0}' has no points")]
    EmptyCurve(String),
    #[error("curve '{name}' has a non-finite or non-positive point")]
    BadPoint { name: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedCurve {
    pub name: String,
    pub points: Vec<RDPoint>,
}

impl NamedCurve {
    pub fn new(name: impl Into<String>, points: Vec<RDPoint>) -> Self {
        NamedCurve {
            name: name.into(),
            points,
        }
    }
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const MARGIN: (f64, f64, f64, f64) = (70.0, 20.0, 30.0, 55.0); // left, right, top, bottom

fn check(curves: &[NamedCurve]) -> Result<(), ReportError> {
    if curves.is_empty() {
        return Err(ReportError::Empty);
    }
    for c in curves {
        if c.points.is_empty() {
            return Err(ReportError::EmptyCurve(c.name.clone()));
        }
        if c.points
            .iter()
            .any(|p| !(p.bpp > 0.0 && p.bpp.is_finite() && p.psnr.is_finite()))
        {
            return Err(ReportError::BadPoint {
                name: c.name.clone(),
            });
        }
    }
    Ok(())
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi - lo < 1e-9 {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

/// PSNR against bpp, one polyline per curve, with axes and a legend.
pub fn render_svg(curves: &[NamedCurve]) -> Result<String, ReportError> {
    check(curves)?;
    let all = curves.iter().flat_map(|c| &c.points);
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for p in all {
        x0 = x0.min(p.bpp);
        x1 = x1.max(p.bpp);
        y0 = y0.min(p.psnr);
        y1 = y1.max(p.psnr);
    }
    let (x0, x1) = padded(x0, x1);
    let (y0, y1) = padded(y0, y1);
    let (ml, mr, mt, mb) = MARGIN;
    let (pw, ph) = (WIDTH - ml - mr, HEIGHT - mt - mb);
    let sx = |x: f64| ml + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| mt + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for k in 0..=5 {
        let t = k as f64 / 5.0;
        let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        let (xp, yp) = (sx(xv), sy(yv));
        let _ = writeln!(
            s,
            r#"<line x1="{xp:.2}" y1="{:.2}" x2="{xp:.2}" y2="{:.2}" stroke="black"/><text x="{xp:.2}" y="{:.2}" text-anchor="middle">{xv:.3}</text>"#,
            mt + ph,
            mt + ph + 5.0,
            mt + ph + 18.0
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{yp:.2}" x2="{ml}" y2="{yp:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{yv:.2}</text>"#,
            ml - 5.0,
            ml - 8.0,
            yp + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">bpp</text>"#,
        ml + pw / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">weighted YUV PSNR (dB)</text>"#,
        mt + ph / 2.0,
        mt + ph / 2.0
    );
    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut pts = c.points.clone();
        pts.sort_by(|a, b| a.bpp.total_cmp(&b.bpp));
        let coords: Vec<String> = pts
            .iter()
            .map(|p| format!("{:.2},{:.2}", sx(p.bpp), sy(p.psnr)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            coords.join(" ")
        );
        for p in &pts {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                sx(p.bpp),
                sy(p.psnr)
            );
        }
        let ly = mt + 15.0 + 18.0 * i as f64;
        let lx = ml + pw - 150.0;
        let _ = writeln!(
            s,
            r#"<g class="legend"><line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text></g>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&c.name)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// `curve,bpp,psnr` rows, one per point, in input order.
pub fn render_csv(curves: &[NamedCurve]) -> Result<String, ReportError> {
    check(curves)?;
    let mut s = String::from("curve,bpp,psnr\n");
    for c in curves {
        for p in &c.points {
            let _ = writeln!(s, "{},{},{}", csv_field(&c.name), p.bpp, p.psnr);
        }
    }
    Ok(s)
}
