//! Minimal deterministic SVG 1.1 line/scatter plots.

use std::fmt::Write as _;

use crate::error::{CliError, CliResult};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 84.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 44.0;
const BOTTOM: f64 = 64.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone, Default)]
pub struct Axes {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
}

#[derive(Debug, Clone)]
pub struct Curve {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Points {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub err: Option<Vec<f64>>,
}

/// Four significant digits, without trailing zeros.
pub fn sig4(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let mag = v.abs().log10().floor() as i32;
    if !(-3..=5).contains(&mag) {
        let s = format!("{v:.3e}");
        let (m, e) = s.split_once('e').unwrap_or((&s, "0"));
        let m = if m.contains('.') { m.trim_end_matches('0').trim_end_matches('.') } else { m };
        return format!("{m}e{e}");
    }
    let decimals = (3 - mag).max(0) as usize;
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Roughly `n` ticks at 1, 2 or 5 times a power of ten.
fn nice_ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / n as f64;
    let pow = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|m| m * pow)
        .find(|s| span / s <= n as f64)
        .unwrap_or(10.0 * pow);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

struct Range {
    lo: f64,
    hi: f64,
}

fn range_of(values: impl Iterator<Item = f64>, log: bool) -> Option<Range> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return None;
    }
    if log {
        let (l, h) = (lo.log10().floor(), hi.log10().ceil());
        return Some(Range { lo: l, hi: if h > l { h } else { l + 1.0 } });
    }
    if hi == lo {
        let pad = if lo == 0.0 { 1.0 } else { 0.05 * lo.abs() };
        return Some(Range { lo: lo - pad, hi: hi + pad });
    }
    let pad = 0.05 * (hi - lo);
    Some(Range { lo: lo - pad, hi: hi + pad })
}

/// Renders curves and error-bar points; identical input gives identical bytes.
pub fn render_svg(curves: &[Curve], points: &[Points], axes: &Axes) -> CliResult<String> {
    let finite = |v: &f64| v.is_finite();
    for c in curves {
        if c.x.len() != c.y.len() || !c.x.iter().chain(&c.y).all(finite) {
            return Err(CliError::Invariant(format!("curve `{}` has mismatched or non-finite data", c.label)));
        }
    }
    for p in points {
        let err_ok = p.err.as_ref().map_or(true, |e| e.len() == p.x.len() && e.iter().all(|v| v.is_finite() && *v >= 0.0));
        if p.x.len() != p.y.len() || !p.x.iter().chain(&p.y).all(finite) || !err_ok {
            return Err(CliError::Invariant(format!("point set `{}` has mismatched or non-finite data", p.label)));
        }
    }
    let ys = || {
        let curve_y = curves.iter().flat_map(|c| c.y.iter().copied());
        let point_y = points.iter().flat_map(|p| {
            let e = p.err.clone().unwrap_or_else(|| vec![0.0; p.y.len()]);
            p.y.iter().zip(e).flat_map(|(y, e)| [y - e, y + e]).collect::<Vec<_>>()
        });
        curve_y.chain(point_y)
    };
    if axes.log_y && ys().any(|y| y <= 0.0) {
        return Err(CliError::Invariant(format!("`{}`: log axis needs positive values", axes.title)));
    }
    let xs = curves.iter().flat_map(|c| c.x.iter().copied()).chain(points.iter().flat_map(|p| p.x.iter().copied()));
    let xr = range_of(xs, false).unwrap_or(Range { lo: 0.0, hi: 1.0 });
    let yr = range_of(ys(), axes.log_y).unwrap_or(Range { lo: 0.0, hi: 1.0 });

    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let sx = |x: f64| LEFT + (x - xr.lo) / (xr.hi - xr.lo) * pw;
    let sy = |y: f64| {
        let v = if axes.log_y { y.log10() } else { y };
        TOP + ph - (v - yr.lo) / (yr.hi - yr.lo) * ph
    };

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(&axes.title));
    let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);

    for tx in nice_ticks(xr.lo, xr.hi, 6) {
        let x = sx(tx);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, TOP + ph, TOP + ph + 5.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + ph + 19.0, sig4(tx));
    }
    let y_ticks: Vec<(f64, f64)> = if axes.log_y {
        (yr.lo as i64..=yr.hi as i64).map(|k| (10f64.powi(k as i32), 10f64.powi(k as i32))).collect()
    } else {
        nice_ticks(yr.lo, yr.hi, 6).into_iter().map(|v| (v, v)).collect()
    };
    for (v, label) in y_ticks {
        let y = sy(v);
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/>"#, LEFT - 5.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 8.0, y + 4.0, sig4(label));
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, HEIGHT - 18.0, escape(&axes.x_label));
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&axes.y_label)
    );

    let mut legend = Vec::new();
    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = c.x.iter().zip(&c.y).map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        legend.push((c.label.clone(), color, false));
    }
    for (i, p) in points.iter().enumerate() {
        let color = PALETTE[(i + curves.len()) % PALETTE.len()];
        let _ = writeln!(s, r#"<g fill="{color}" stroke="{color}">"#);
        for (k, (&x, &y)) in p.x.iter().zip(&p.y).enumerate() {
            let (cx, cy) = (sx(x), sy(y));
            if let Some(e) = &p.err {
                let _ = writeln!(s, r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}"/>"#, sy(y - e[k]), sy(y + e[k]));
            }
            let _ = writeln!(s, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="3"/>"#);
        }
        let _ = writeln!(s, "</g>");
        legend.push((p.label.clone(), color, true));
    }
    for (i, (label, color, marker)) in legend.iter().enumerate() {
        let y = TOP + 16.0 + 16.0 * i as f64;
        let x = WIDTH - RIGHT - 170.0;
        if *marker {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, x + 10.0, y - 4.0);
        } else {
            let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="1.5"/>"#, y - 4.0, x + 20.0, y - 4.0);
        }
        let _ = writeln!(s, r#"<text x="{:.2}" y="{y:.2}">{}</text>"#, x + 26.0, escape(label));
    }
    s.push_str("</svg>\n");
    Ok(s)
}
