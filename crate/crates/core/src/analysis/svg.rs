//! Minimal SVG charts on a fixed 640x400 canvas.

use std::fmt::Write;

pub const WIDTH: f64 = 640.0;
pub const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn open(title: &str) -> String {
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    )
    .unwrap();
    s
}

/// Vertical bars, one per labelled value, scaled to the largest value.
pub fn bar_chart(title: &str, bars: &[(String, f64)]) -> String {
    let mut s = open(title);
    let max = bars.iter().map(|b| b.1).fold(0.0f64, f64::max);
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let slot = if bars.is_empty() { 0.0 } else { plot_w / bars.len() as f64 };
    for (i, (label, v)) in bars.iter().enumerate() {
        let h = if max > 0.0 { plot_h * v / max } else { 0.0 };
        let x = MARGIN + slot * i as f64;
        writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{h:.2}" fill="steelblue"><title>{}: {v}</title></rect>"#,
            x + slot * 0.1,
            HEIGHT - MARGIN - h,
            slot * 0.8,
            escape(label)
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="9" text-anchor="end" transform="rotate(-45 {:.2} {:.2})">{}</text>"#,
            x + slot / 2.0,
            HEIGHT - MARGIN + 12.0,
            x + slot / 2.0,
            HEIGHT - MARGIN + 12.0,
            escape(label)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// Labelled points scaled to fill the plot area.
pub fn scatter(title: &str, points: &[(String, f64, f64)]) -> String {
    let mut s = open(title);
    let range = |f: fn(&(String, f64, f64)) -> f64| {
        let lo = points.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            (lo, hi - lo)
        } else {
            (lo - 1.0, 2.0)
        }
    };
    let (x0, xs) = range(|p| p.1);
    let (y0, ys) = range(|p| p.2);
    for (label, x, y) in points {
        let px = MARGIN + (WIDTH - 2.0 * MARGIN) * (x - x0) / xs;
        let py = HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (y - y0) / ys;
        writeln!(s, r#"<circle cx="{px:.2}" cy="{py:.2}" r="4" fill="darkorange"/>"#).unwrap();
        writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="10">{}</text>"#,
            px + 6.0,
            py + 3.0,
            escape(label)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}
