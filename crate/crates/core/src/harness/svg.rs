//! Minimal static line charts: one panel per class, log-scaled x axis,
//! one polyline per series with an optional shaded ±1σ band.

use std::fmt::Write as _;

pub(crate) struct Series {
    pub name: String,
    pub color: &'static str,
    /// `(x, y, sigma)`; `x` must be positive.
    pub points: Vec<(f64, f64, Option<f64>)>,
}

pub(crate) struct Panel {
    pub title: String,
    pub series: Vec<Series>,
}

const PANEL_W: f64 = 320.0;
const PANEL_H: f64 = 260.0;
const MARGIN_L: f64 = 60.0;
const MARGIN_R: f64 = 15.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 40.0;
const HEADER: f64 = 50.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    values.fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    })
}

fn widen((lo, hi): (f64, f64), pad: f64) -> (f64, f64) {
    if hi - lo < 1e-12 {
        (lo - pad.max(1e-3), hi + pad.max(1e-3))
    } else {
        let d = (hi - lo) * 0.05;
        (lo - d, hi + d)
    }
}

pub(crate) fn render(title: &str, panels: &[Panel]) -> String {
    let width = PANEL_W * panels.len().max(1) as f64;
    let height = PANEL_H + HEADER;
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="10" y="18" font-size="14">{}</text>"#, escape(title));

    // Legend from the first panel's series.
    if let Some(first) = panels.first() {
        for (i, series) in first.series.iter().enumerate() {
            let x = 10.0 + 110.0 * i as f64;
            let _ = writeln!(
                s,
                r#"<line x1="{x}" y1="36" x2="{}" y2="36" stroke="{}" stroke-width="2"/><text x="{}" y="40">{}</text>"#,
                x + 20.0,
                series.color,
                x + 25.0,
                escape(&series.name)
            );
        }
    }
    for (i, panel) in panels.iter().enumerate() {
        render_panel(&mut s, panel, PANEL_W * i as f64, HEADER);
    }
    s.push_str("</svg>\n");
    s
}

fn render_panel(s: &mut String, panel: &Panel, ox: f64, oy: f64) {
    let pts = || panel.series.iter().flat_map(|se| se.points.iter());
    let (x0, x1) = widen(range(pts().map(|p| p.0.log10())).unwrap_or((0.0, 1.0)), 0.5);
    let ys = pts()
        .flat_map(|&(_, y, sd)| {
            let sd = sd.unwrap_or(0.0);
            [y - sd, y + sd]
        })
        .chain([0.0]);
    let (y0, y1) = widen(range(ys).unwrap_or((0.0, 1.0)), 0.05);

    let left = ox + MARGIN_L;
    let right = ox + PANEL_W - MARGIN_R;
    let top = oy + MARGIN_T;
    let bottom = oy + PANEL_H - MARGIN_B;
    let sx = |x: f64| left + (x.log10() - x0) / (x1 - x0) * (right - left);
    let sy = |y: f64| bottom - (y - y0) / (y1 - y0) * (bottom - top);

    let _ = writeln!(s, "<g>");
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#,
        (left + right) / 2.0,
        oy + 18.0,
        escape(&panel.title)
    );
    let _ = writeln!(
        s,
        r##"<rect x="{left:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#444"/>"##,
        right - left,
        bottom - top
    );
    for e in (x0.ceil() as i32)..=(x1.floor() as i32) {
        let x = sx(10f64.powi(e));
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{bottom:.2}" x2="{x:.2}" y2="{:.2}" stroke="#444"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">1e{e}</text>"##,
            bottom + 4.0,
            bottom + 16.0
        );
    }
    for t in 0..=4 {
        let y = y0 + (y1 - y0) * t as f64 / 4.0;
        let py = sy(y);
        let _ = writeln!(
            s,
            r##"<line x1="{:.2}" y1="{py:.2}" x2="{left:.2}" y2="{py:.2}" stroke="#444"/><text x="{:.2}" y="{:.2}" text-anchor="end">{y:.3}</text>"##,
            left - 4.0,
            left - 6.0,
            py + 4.0
        );
    }
    if y0 < 0.0 && y1 > 0.0 {
        let z = sy(0.0);
        let _ = writeln!(
            s,
            r##"<line x1="{left:.2}" y1="{z:.2}" x2="{right:.2}" y2="{z:.2}" stroke="#999" stroke-dasharray="4 3"/>"##
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">training size</text>"#,
        (left + right) / 2.0,
        bottom + 32.0
    );

    for series in &panel.series {
        if series.points.is_empty() {
            continue;
        }
        if series.points.iter().all(|p| p.2.is_some()) {
            let upper = series.points.iter().map(|&(x, y, sd)| (sx(x), sy(y + sd.unwrap_or(0.0))));
            let lower = series.points.iter().rev().map(|&(x, y, sd)| (sx(x), sy(y - sd.unwrap_or(0.0))));
            let poly: Vec<String> = upper.chain(lower).map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(
                s,
                r#"<polygon points="{}" fill="{}" fill-opacity="0.15" stroke="none"/>"#,
                poly.join(" "),
                series.color
            );
        }
        let line: Vec<String> = series.points.iter().map(|&(x, y, _)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            line.join(" "),
            series.color
        );
        for &(x, y, _) in &series.points {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{}"/>"#, sx(x), sy(y), series.color);
        }
    }
    let _ = writeln!(s, "</g>");
}
