//! Bare-bones line plot: axes, one polyline per spectrum, legend.

use std::fmt::Write;

use spdmbi_core::spectrum::Spectrum;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub fn render(series: &[(String, &Spectrum)], x_label: &str) -> String {
    let points = series.iter().flat_map(|(_, s)| s.points().iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y);
        y1 = y1.max(p.y);
    }
    if x1 <= x0 || !x1.is_finite() {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 || !y1.is_finite() {
        (y0, y1) = (y0 - 0.5, y0 + 0.5);
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(out, r#"<path d="M{left},{top} L{left},{bottom} L{right},{bottom}" stroke="black" fill="none"/>"#);
    if y0 < 0.0 && y1 > 0.0 {
        let z = sy(0.0);
        let _ = writeln!(out, r##"<line x1="{left}" y1="{z}" x2="{right}" y2="{z}" stroke="#999" stroke-dasharray="4 3"/>"##);
    }
    let _ = writeln!(out, r#"<text x="{left}" y="{}" text-anchor="middle">{x0:.3e}</text>"#, bottom + 16.0);
    let _ = writeln!(out, r#"<text x="{right}" y="{}" text-anchor="middle">{x1:.3e}</text>"#, bottom + 16.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, bottom + 36.0, escape(x_label));
    let _ = writeln!(out, r#"<text x="{}" y="{top}" text-anchor="end">{y1:.3e}</text>"#, left - 4.0);
    let _ = writeln!(out, r#"<text x="{}" y="{bottom}" text-anchor="end">{y0:.3e}</text>"#, left - 4.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">&lt;Jz&gt;</text>"#, left - 30.0, HEIGHT / 2.0);

    for (i, (label, s)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let coords: Vec<String> = s.points().iter().map(|p| format!("{:.2},{:.2}", sx(p.x), sy(p.y))).collect();
        let _ = writeln!(out, r#"<polyline points="{}" stroke="{color}" stroke-width="1.5" fill="none"/>"#, coords.join(" "));
        let ly = top + 16.0 * i as f64;
        let _ = writeln!(out, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, right - 150.0, right - 130.0);
        let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, right - 125.0, ly + 4.0, escape(label));
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
